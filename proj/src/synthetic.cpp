#include "mvp/synthetic.hpp"

#include <array>
#include <cstdio>
#include <random>
#include <set>
#include <string>

#include "mvp/error.hpp"
#include "mvp/hash.hpp"
#include "mvp/text.hpp"

namespace mvp::corpus {
namespace {

// std:: distributions are implementation-defined; draw directly from the
// engine so corpora are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::size_t below(std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  double unit() { return unit_interval(engine_()); }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 engine_;
};

const std::vector<std::string> kFiller = {
    "patient",    "admitted",   "with",        "fever",       "and",        "fatigue",     "reported",
    "denies",     "chest",      "pain",        "the",         "labs",       "showed",      "mild",
    "anemia",     "normal",     "renal",       "function",    "was",        "started",     "on",
    "intravenous", "fluids",    "discharged",  "home",        "in",         "stable",      "condition",
    "vital",      "signs",      "notable",     "for",         "tachycardia", "imaging",    "unremarkable",
    "exam",       "revealed",   "soft",        "abdomen",     "no",         "edema",       "follow",
    "up",         "with",       "primary",     "care",        "physician",  "medications", "reviewed",
    "blood",      "cultures",   "pending",     "transfusion", "hemoglobin", "platelets",   "improved",
    "oxygen",     "saturation", "room",        "air",         "ambulating", "independently", "tolerating",
    "diet",       "plan",       "continue",    "monitoring",  "rheumatology", "consulted", "biopsy",
    "scheduled",  "temperature", "headache",   "vision",      "changes",    "cough",       "dyspnea",
    "steroids",   "tapered",    "over",        "weeks",       "outpatient", "clinic",      "visit",
    "social",     "history",    "married",     "retired",     "teacher",    "nonsmoker",   "alert",
    "oriented",   "neurologic", "intact",      "laboratory",  "values",     "within",      "limits",
};

const std::vector<std::string> kPositive = {
    "Assessment: active {} confirmed during this admission and treatment was started.",
    "Patient presents with {} diagnosed on this admission, currently being treated.",
    "Current problem list includes {} which remains active and is being managed inpatient.",
    "Findings are consistent with new {} and the patient was started on therapy today.",
};

const std::vector<std::string> kNegative = {
    "Family history of {} in her mother; the patient has no signs of it.",
    "The patient's father suffered from {} and the patient is asymptomatic.",
    "Remote history of {} many years ago, fully treated with no recurrence.",
    "Past medical history notable for {} in the past, resolved without current disease.",
};

std::string fill(const std::string& pattern, const std::string& term) {
  std::string out = pattern;
  out.replace(out.find("{}"), 2, term);
  return out;
}

std::string filler(Rng& rng, const std::vector<std::string>& vocab, std::size_t words) {
  std::string out;
  std::size_t sentence = 0;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = rng.pick(vocab);
    if (sentence == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    if (!out.empty()) out += ' ';
    out += w;
    ++sentence;
    if (sentence >= 6 + rng.below(8) || i + 1 == words) {
      out += '.';
      sentence = 0;
    }
  }
  return out;
}

std::size_t word_count(const std::string& s) { return text::tokenize(s).size(); }

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_docs, const std::vector<TermEntry>& diseases,
                                          double positive_rate, const SyntheticOptions& opts) {
  if (!(positive_rate >= 0.0 && positive_rate <= 1.0)) throw InvalidArgument("positive_rate must be in [0, 1]");
  if (opts.min_words > opts.max_words) throw InvalidArgument("min_words exceeds max_words");
  if (n_docs > 0 && diseases.empty()) throw InvalidArgument("no diseases to embed");

  // Keep filler words from ever forming a disease term.
  std::set<std::string> blocked;
  for (const auto& d : diseases) {
    for (const auto& key : d.match_keys()) blocked.insert(text::split_key(key).front());
  }
  std::vector<std::string> vocab;
  for (const auto& w : kFiller) {
    if (!blocked.count(w)) vocab.push_back(w);
  }
  if (vocab.empty()) throw InvalidArgument("filler vocabulary is exhausted by disease terms");

  std::vector<std::vector<std::string>> usable_terms;
  for (const auto& d : diseases) {
    std::vector<std::string> ts;
    if (text::char_count(text::normalize_term(d.preferred_label)) >= opts.min_term_chars) ts.push_back(d.preferred_label);
    for (const auto& s : d.synonyms) {
      if (text::char_count(text::normalize_term(s)) >= opts.min_term_chars) ts.push_back(s);
    }
    if (ts.empty()) throw InvalidArgument("disease '" + d.disease_id + "' has no term long enough to embed");
    usable_terms.push_back(std::move(ts));
  }

  Rng rng(seed);
  SyntheticCorpus out;
  const std::size_t total = n_docs + opts.background_docs;
  // Background documents are interleaved deterministically after mention docs.
  for (std::size_t i = 0; i < total; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "note-%06zu", i + 1);
    const std::size_t target = opts.min_words + rng.below(opts.max_words - opts.min_words + 1);
    if (i >= n_docs) {
      out.documents.push_back({id, filler(rng, vocab, std::max<std::size_t>(1, target))});
      continue;
    }
    const std::size_t which = rng.below(diseases.size());
    std::string term = rng.pick(usable_terms[which]);
    if (rng.below(2) == 0) term = text::fold_case(term);
    const bool positive = rng.unit() < positive_rate;
    const std::string sentence = fill(positive ? rng.pick(kPositive) : rng.pick(kNegative), term);

    const std::size_t mention_words = word_count(sentence);
    const std::size_t rest = target > mention_words ? target - mention_words : 0;
    const std::size_t before = rest == 0 ? 0 : rng.below(rest + 1);
    std::string body;
    if (before > 0) body += filler(rng, vocab, before) + ' ';
    body += sentence;
    if (rest > before) body += ' ' + filler(rng, vocab, rest - before);

    out.documents.push_back({id, body});
    out.gold.emplace(id, GoldLabel{positive, diseases[which].disease_id});
  }
  return out;
}

}  // namespace mvp::corpus
