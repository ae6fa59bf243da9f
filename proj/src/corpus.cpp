#include "mvp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "mvp/error.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/text.hpp"

namespace mvp::corpus {

using nlohmann::json;

std::vector<std::string> TermEntry::match_keys() const {
  std::vector<std::string> keys;
  auto add = [&](const std::string& term) {
    std::string key = text::normalize_term(term);
    if (!key.empty() && std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(std::move(key));
  };
  add(preferred_label);
  for (const auto& s : synonyms) add(s);
  return keys;
}

std::size_t InvertedIndex::doc_frequency(const std::string& term) const {
  auto it = postings.find(term);
  return it == postings.end() ? 0 : it->second.size();
}

json InvertedIndex::to_json() const {
  json j;
  j["corpus_size"] = corpus_size;
  j["postings"] = json::object();
  for (const auto& [term, docs] : postings) j["postings"][term] = docs;
  j["mention_counts"] = json::object();
  for (const auto& [term, n] : mention_counts) j["mention_counts"][term] = n;
  return j;
}

InvertedIndex InvertedIndex::from_json(const json& j) {
  InvertedIndex index;
  try {
    index.corpus_size = j.at("corpus_size").get<std::size_t>();
    for (const auto& [term, docs] : j.at("postings").items()) {
      auto list = docs.get<std::vector<std::string>>();
      if (!std::is_sorted(list.begin(), list.end()) ||
          std::adjacent_find(list.begin(), list.end()) != list.end()) {
        throw ParseError("posting list of '" + term + "' is not strictly sorted");
      }
      index.postings.emplace(term, std::move(list));
    }
    if (j.contains("mention_counts")) {
      for (const auto& [term, n] : j.at("mention_counts").items()) index.mention_counts.emplace(term, n.get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid index: ") + e.what());
  }
  return index;
}

void FilterConfig::validate() const {
  if (min_term_chars < 1) throw InvalidArgument("min_term_chars must be >= 1");
  if (!(max_doc_frequency > 0.0 && max_doc_frequency <= 1.0)) {
    throw InvalidArgument("max_doc_frequency must be in (0, 1]");
  }
}

std::string WindowRef::id() const { return doc_id + "#" + disease_id + "@" + std::to_string(window_words); }

WindowRef WindowRef::parse(const std::string& id) {
  const auto at = id.rfind('@');
  const auto hash = id.rfind('#', at == std::string::npos ? std::string::npos : at);
  if (at == std::string::npos || hash == std::string::npos || hash == 0 || hash + 1 >= at) {
    throw InvalidArgument("malformed window id '" + id + "'");
  }
  WindowRef ref;
  ref.doc_id = id.substr(0, hash);
  ref.disease_id = id.substr(hash + 1, at - hash - 1);
  try {
    ref.window_words = std::stoi(id.substr(at + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("malformed window size in '" + id + "'");
  }
  return ref;
}

json ContextWindow::to_json() const {
  json j{{"doc_id", ref.doc_id},
         {"disease_id", ref.disease_id},
         {"window_words", ref.window_words},
         {"word_count", word_count},
         {"text", text}};
  if (gold_identification) j["gold_identification"] = *gold_identification;
  if (gold_disease) j["gold_disease"] = *gold_disease;
  return j;
}

ContextWindow ContextWindow::from_json(const json& j) {
  ContextWindow w;
  try {
    w.ref.doc_id = j.at("doc_id").get<std::string>();
    w.ref.disease_id = j.at("disease_id").get<std::string>();
    w.ref.window_words = j.at("window_words").get<int>();
    w.text = j.at("text").get<std::string>();
    w.word_count = j.value("word_count", text::tokenize(w.text).size());
    if (j.contains("gold_identification")) w.gold_identification = j.at("gold_identification").get<bool>();
    if (j.contains("gold_disease")) w.gold_disease = j.at("gold_disease").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid window record: ") + e.what());
  }
  return w;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  jsonl::for_each(path, [&](const json& r, std::size_t line) {
    if (!r.is_object()) throw ParseError("record is not an object", line);
    auto id = r.find("doc_id");
    if (id == r.end() || !id->is_string() || id->get<std::string>().empty()) {
      throw ParseError("missing or invalid doc_id", line);
    }
    auto txt = r.find("text");
    if (txt == r.end() || !txt->is_string()) throw ParseError("missing text field", line);
    if (txt->get<std::string>().empty()) throw ParseError("empty text", line);
    Document doc{id->get<std::string>(), txt->get<std::string>()};
    if (!seen.insert(doc.doc_id).second) {
      throw DuplicateError("line " + std::to_string(line) + ": duplicate doc_id '" + doc.doc_id + "'");
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::vector<json> records;
  records.reserve(docs.size());
  for (const auto& d : docs) records.push_back({{"doc_id", d.doc_id}, {"text", d.text}});
  jsonl::write(path, records);
}

std::vector<TermEntry> parse_term_list(const std::string& content) {
  std::vector<TermEntry> entries;
  std::unordered_set<std::string> seen;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = text::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3) throw ParseError("expected 2 or 3 tab-separated fields", line_no);
    TermEntry e;
    e.disease_id = text::trim(fields[0]);
    e.preferred_label = text::trim(fields[1]);
    if (e.disease_id.empty()) throw ParseError("empty disease_id", line_no);
    if (e.preferred_label.empty()) throw ParseError("empty label", line_no);
    if (fields.size() == 3) {
      std::unordered_set<std::string> folded;
      for (const auto& raw : text::split(fields[2], '|')) {
        std::string syn = text::trim(raw);
        if (syn.empty()) continue;
        if (folded.insert(text::fold_case(syn)).second) e.synonyms.push_back(std::move(syn));
      }
    }
    if (!seen.insert(e.disease_id).second) {
      throw DuplicateError("line " + std::to_string(line_no) + ": duplicate disease_id '" + e.disease_id + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<TermEntry> load_term_list(const std::filesystem::path& path) {
  return parse_term_list(jsonl::read_file(path));
}

GoldTable load_gold(const std::filesystem::path& path) {
  GoldTable gold;
  jsonl::for_each(path, [&](const json& r, std::size_t line) {
    try {
      GoldLabel g{r.at("identification").get<bool>(), r.at("disease").get<std::string>()};
      if (!gold.emplace(r.at("doc_id").get<std::string>(), std::move(g)).second) {
        throw DuplicateError("line " + std::to_string(line) + ": duplicate gold doc_id");
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid gold record: ") + e.what(), line);
    }
  });
  return gold;
}

void save_gold(const std::filesystem::path& path, const GoldTable& gold) {
  std::vector<json> records;
  for (const auto& [id, g] : gold) records.push_back({{"doc_id", id}, {"identification", g.identification}, {"disease", g.disease_id}});
  jsonl::write(path, records);
}

namespace {

struct TermTable {
  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> words;
  std::unordered_map<std::string, std::vector<std::uint32_t>> by_first_word;
};

TermTable make_term_table(const std::vector<TermEntry>& terms) {
  std::set<std::string> unique;
  for (const auto& t : terms) {
    for (auto& k : t.match_keys()) unique.insert(std::move(k));
  }
  TermTable table;
  for (const auto& key : unique) {
    const auto idx = static_cast<std::uint32_t>(table.keys.size());
    table.keys.push_back(key);
    table.words.push_back(text::split_key(key));
    table.by_first_word[table.words.back().front()].push_back(idx);
  }
  return table;
}

struct Shard {
  // term index -> (doc index, occurrences in that doc), doc indices ascending
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> hits;
};

void match_range(const std::vector<Document>& corpus, const TermTable& table, std::size_t begin, std::size_t end,
                 Shard& shard) {
  shard.hits.assign(table.keys.size(), {});
  std::unordered_map<std::uint32_t, std::size_t> counts;
  for (std::size_t d = begin; d < end; ++d) {
    const auto tokens = text::tokenize(corpus[d].text);
    counts.clear();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].norm.empty()) continue;
      auto it = table.by_first_word.find(tokens[i].norm);
      if (it == table.by_first_word.end()) continue;
      for (std::uint32_t t : it->second) {
        const auto& words = table.words[t];
        if (i + words.size() > tokens.size()) continue;
        bool match = true;
        for (std::size_t k = 1; k < words.size(); ++k) {
          if (tokens[i + k].norm != words[k]) {
            match = false;
            break;
          }
        }
        if (match) ++counts[t];
      }
    }
    for (const auto& [t, n] : counts) shard.hits[t].emplace_back(d, n);
  }
}

}  // namespace

InvertedIndex build_inverted_index(const std::vector<Document>& corpus, const std::vector<TermEntry>& terms,
                                   unsigned threads) {
  InvertedIndex index;
  index.corpus_size = corpus.size();
  if (corpus.empty() || terms.empty()) return index;

  const TermTable table = make_term_table(terms);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, corpus.size()));

  std::vector<Shard> shards(threads);
  const std::size_t chunk = (corpus.size() + threads - 1) / threads;
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t begin = std::min(corpus.size(), w * chunk);
      const std::size_t end = std::min(corpus.size(), begin + chunk);
      workers.emplace_back([&, w, begin, end] { match_range(corpus, table, begin, end, shards[w]); });
    }
  }

  // Canonical merge: union across shards, then sort by doc id.
  for (std::size_t t = 0; t < table.keys.size(); ++t) {
    std::vector<std::string> docs;
    std::size_t mentions = 0;
    for (const auto& shard : shards) {
      for (const auto& [d, n] : shard.hits[t]) {
        docs.push_back(corpus[d].doc_id);
        mentions += n;
      }
    }
    if (docs.empty()) continue;
    std::sort(docs.begin(), docs.end());
    docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
    index.postings.emplace(table.keys[t], std::move(docs));
    index.mention_counts.emplace(table.keys[t], mentions);
  }
  return index;
}

InvertedIndex apply_weak_supervision_filters(const InvertedIndex& index, const FilterConfig& cfg) {
  cfg.validate();
  InvertedIndex out;
  out.corpus_size = index.corpus_size;
  // Length rule first, then prevalence rule; both only remove entries.
  std::vector<std::string> kept;
  for (const auto& [term, docs] : index.postings) {
    if (text::char_count(term) < cfg.min_term_chars) continue;
    kept.push_back(term);
  }
  const double limit = cfg.max_doc_frequency * static_cast<double>(index.corpus_size) * (1.0 + 1e-12);
  for (const auto& term : kept) {
    const auto& docs = index.postings.at(term);
    if (static_cast<double>(docs.size()) > limit) continue;
    out.postings.emplace(term, docs);
    if (auto it = index.mention_counts.find(term); it != index.mention_counts.end()) {
      out.mention_counts.emplace(term, it->second);
    }
  }
  return out;
}

std::map<std::string, std::size_t> disease_doc_counts(const InvertedIndex& index,
                                                      const std::vector<TermEntry>& terms) {
  std::map<std::string, std::size_t> counts;
  for (const auto& entry : terms) {
    std::set<std::string> docs;
    for (const auto& key : entry.match_keys()) {
      auto it = index.postings.find(key);
      if (it != index.postings.end()) docs.insert(it->second.begin(), it->second.end());
    }
    counts[entry.disease_id] = docs.size();
  }
  return counts;
}

std::vector<std::string> select_top_diseases(const InvertedIndex& index, const std::vector<TermEntry>& terms,
                                             std::size_t k) {
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [id, n] : disease_doc_counts(index, terms)) {
    if (n > 0) ranked.emplace_back(id, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

std::pair<std::size_t, std::size_t> center_window(std::size_t doc_words, std::size_t mention,
                                                  std::size_t mention_len, std::size_t size) {
  if (mention_len > size) throw InvalidArgument("mention is longer than the window");
  if (mention + mention_len > doc_words) throw InvalidArgument("mention lies outside the document");
  if (doc_words <= size) return {0, doc_words};
  const std::size_t lead = (size - mention_len) / 2;
  std::size_t start = mention >= lead ? mention - lead : 0;
  if (start + size > doc_words) start = doc_words - size;
  return {start, start + size};
}

ContextWindow extract_window(const Document& doc, const std::string& disease_id,
                             const std::vector<std::string>& keys, int size) {
  if (size < 1) throw InvalidArgument("window size must be positive");
  const auto tokens = text::tokenize(doc.text);
  std::size_t best = text::npos;
  std::size_t best_len = 0;
  for (const auto& key : keys) {
    const auto words = text::split_key(key);
    const std::size_t pos = text::find_phrase(tokens, words);
    if (pos == text::npos) continue;
    if (best == text::npos || pos < best || (pos == best && words.size() > best_len)) {
      best = pos;
      best_len = words.size();
    }
  }
  if (best == text::npos) {
    throw NotFoundError("disease '" + disease_id + "' has no mention in document '" + doc.doc_id + "'");
  }
  const auto [first, last] = center_window(tokens.size(), best, best_len, static_cast<std::size_t>(size));
  ContextWindow w;
  w.ref = {doc.doc_id, disease_id, size};
  w.text = doc.text.substr(tokens[first].begin, tokens[last - 1].end - tokens[first].begin);
  w.word_count = last - first;
  return w;
}

std::vector<ContextWindow> extract_context_windows(const std::vector<Document>& corpus, const InvertedIndex& index,
                                                   const std::vector<TermEntry>& terms,
                                                   const std::vector<std::string>& disease_ids,
                                                   const std::vector<int>& sizes, const GoldTable* gold) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : corpus) by_id.emplace(d.doc_id, &d);

  std::vector<ContextWindow> windows;
  for (const auto& disease : disease_ids) {
    auto entry = std::find_if(terms.begin(), terms.end(), [&](const TermEntry& t) { return t.disease_id == disease; });
    if (entry == terms.end()) throw NotFoundError("unknown disease '" + disease + "'");

    std::vector<std::string> keys;
    std::set<std::string> docs;
    for (const auto& key : entry->match_keys()) {
      auto it = index.postings.find(key);
      if (it == index.postings.end()) continue;
      keys.push_back(key);
      docs.insert(it->second.begin(), it->second.end());
    }
    if (docs.empty()) throw NotFoundError("disease '" + disease + "' has no postings");

    for (const auto& doc_id : docs) {
      auto d = by_id.find(doc_id);
      if (d == by_id.end()) throw NotFoundError("indexed document '" + doc_id + "' is not in the corpus");
      for (int size : sizes) {
        ContextWindow w = extract_window(*d->second, disease, keys, size);
        if (gold != nullptr) {
          if (auto g = gold->find(doc_id); g != gold->end()) {
            w.gold_identification = g->second.identification;
            w.gold_disease = g->second.disease_id;
          }
        }
        windows.push_back(std::move(w));
      }
    }
  }
  return windows;
}

}  // namespace mvp::corpus
