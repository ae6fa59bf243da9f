#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mvp/corpus.hpp"

namespace mvp::corpus {

struct SyntheticOptions {
  std::size_t min_words = 60;
  std::size_t max_words = 420;
  // Terms shorter than this are never embedded, so every document survives
  // the length filter.
  std::size_t min_term_chars = 4;
  // Extra documents without any disease mention.
  std::size_t background_docs = 0;
};

struct SyntheticCorpus {
  std::vector<Document> documents;
  GoldTable gold;
};

// Desk-scale stand-in for a clinical note collection. Each of the `n_docs`
// mention documents embeds exactly one disease term; gold identification is
// positive with probability `positive_rate`. Negative documents phrase the
// mention as family history or a resolved past illness. Pure function of its
// arguments.
SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_docs, const std::vector<TermEntry>& diseases,
                                          double positive_rate, const SyntheticOptions& opts = {});

}  // namespace mvp::corpus
