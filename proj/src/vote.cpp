#include "mvp/vote.hpp"

#include <algorithm>

#include "mvp/text.hpp"

namespace mvp::vote {

using nlohmann::json;

std::size_t default_threshold(std::size_t m) { return std::max<std::size_t>(1, (m + 1) / 2); }

std::size_t EnsembleConfig::threshold() const {
  return identification_threshold.value_or(default_threshold(m()));
}

void EnsembleConfig::validate() const {
  if (member_ids.empty()) throw InvalidArgument("ensemble needs at least one member");
  std::set<std::string> unique(member_ids.begin(), member_ids.end());
  if (unique.size() != member_ids.size()) throw DuplicateError("duplicate ensemble member");
  const std::size_t t = threshold();
  if (t < 1 || t > m()) throw InvalidArgument("identification threshold must be within [1, m]");
}

EnsembleConfig EnsembleConfig::without(const std::string& member) const {
  EnsembleConfig out;
  for (const auto& id : member_ids) {
    if (id != member) out.member_ids.push_back(id);
  }
  if (out.member_ids.size() == member_ids.size()) throw NotFoundError("'" + member + "' is not an ensemble member");
  if (identification_threshold) {
    out.identification_threshold = std::clamp<std::size_t>(*identification_threshold, 1, std::max<std::size_t>(1, out.m()));
  }
  return out;
}

json EnsembleConfig::to_json() const {
  json j{{"members", member_ids}};
  if (identification_threshold) j["identification_threshold"] = *identification_threshold;
  return j;
}

EnsembleConfig EnsembleConfig::from_json(const json& j) {
  EnsembleConfig cfg;
  cfg.member_ids = j.at("members").get<std::vector<std::string>>();
  if (j.contains("identification_threshold") && !j.at("identification_threshold").is_null()) {
    cfg.identification_threshold = j.at("identification_threshold").get<std::size_t>();
  }
  return cfg;
}

json IdentificationVerdict::to_json() const {
  json votes = json::object();
  for (const auto& [id, v] : member_votes) votes[id] = v ? "yes" : "no";
  return {{"decision", decision ? "yes" : "no"}, {"yes_votes", yes_votes}, {"member_votes", votes}};
}

json ClassificationVerdict::to_json() const {
  return {{"argmax_set", argmax_set}, {"max_count", max_count}, {"member_votes", member_votes}};
}

namespace {

template <typename T>
void check_ballot(const Ballot<T>& votes, const EnsembleConfig& cfg) {
  std::vector<std::string> missing;
  for (const auto& id : cfg.member_ids) {
    if (!votes.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw IncompleteBallotError("incomplete ballot, missing votes from: " + text::join(missing, ", "), missing);
  }
  if (votes.size() != cfg.member_ids.size()) {
    for (const auto& [id, _] : votes) {
      if (std::find(cfg.member_ids.begin(), cfg.member_ids.end(), id) == cfg.member_ids.end()) {
        throw InvalidArgument("vote from non-member '" + id + "'");
      }
    }
  }
}

}  // namespace

IdentificationVerdict vote_identification(const Ballot<bool>& votes, const EnsembleConfig& cfg) {
  cfg.validate();
  check_ballot(votes, cfg);
  IdentificationVerdict v;
  v.member_votes = votes;
  for (const auto& [_, yes] : votes) v.yes_votes += yes ? 1 : 0;
  v.decision = v.yes_votes >= cfg.threshold();
  return v;
}

ClassificationVerdict vote_classification(const Ballot<std::string>& votes, const EnsembleConfig& cfg) {
  cfg.validate();
  check_ballot(votes, cfg);
  std::map<std::string, std::size_t> counts;
  for (const auto& [_, label] : votes) ++counts[label];
  ClassificationVerdict v;
  v.member_votes = votes;
  for (const auto& [_, n] : counts) v.max_count = std::max(v.max_count, n);
  for (const auto& [label, n] : counts) {
    if (n == v.max_count) v.argmax_set.insert(label);
  }
  return v;
}

bool score_classification(const ClassificationVerdict& verdict, const std::string& gold) {
  return verdict.argmax_set.count(gold) > 0;
}

std::string resolve_prediction(const ClassificationVerdict& verdict, const std::string& gold) {
  if (verdict.argmax_set.empty()) throw InvalidArgument("empty argmax set");
  return score_classification(verdict, gold) ? gold : *verdict.argmax_set.begin();
}

SelfConsistencyVerdict self_consistency_aggregate(const std::vector<Sample>& samples,
                                                  std::optional<std::size_t> threshold) {
  if (samples.empty()) throw InvalidArgument("self-consistency needs at least one sample");
  const std::string& backend = samples.front().backend_id;
  EnsembleConfig cfg;
  Ballot<bool> ident;
  Ballot<std::string> cls;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].backend_id != backend) {
      throw InvalidArgument("self-consistency samples mix backends '" + backend + "' and '" + samples[i].backend_id + "'");
    }
    const std::string member = backend + "#" + std::to_string(i);
    cfg.member_ids.push_back(member);
    ident[member] = samples[i].answer.identification;
    cls[member] = samples[i].answer.disease_label;
  }
  cfg.identification_threshold = threshold;
  return {vote_identification(ident, cfg), vote_classification(cls, cfg)};
}

}  // namespace mvp::vote
