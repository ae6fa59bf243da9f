#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/answer.hpp"
#include "mvp/error.hpp"

namespace mvp::vote {

class IncompleteBallotError : public Error {
 public:
  IncompleteBallotError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

// Minimum yes-votes for a yes verdict when no fixed threshold is configured:
// ceil(m / 2), so an even split resolves to yes (2 of 4) and odd ensembles
// need a strict majority.
std::size_t default_threshold(std::size_t m);

struct EnsembleConfig {
  std::vector<std::string> member_ids;
  // Fixed threshold; defaults to default_threshold(m) when unset.
  std::optional<std::size_t> identification_threshold;

  std::size_t m() const { return member_ids.size(); }
  std::size_t threshold() const;
  void validate() const;
  // The same rule applied to the ensemble without `member`. A fixed threshold
  // is clamped to the reduced size.
  EnsembleConfig without(const std::string& member) const;

  nlohmann::json to_json() const;
  static EnsembleConfig from_json(const nlohmann::json& j);
};

template <typename T>
using Ballot = std::map<std::string, T>;

struct IdentificationVerdict {
  bool decision = false;
  std::size_t yes_votes = 0;
  Ballot<bool> member_votes;

  nlohmann::json to_json() const;
  bool operator==(const IdentificationVerdict&) const = default;
};

struct ClassificationVerdict {
  std::set<std::string> argmax_set;
  std::size_t max_count = 0;
  Ballot<std::string> member_votes;

  nlohmann::json to_json() const;
  bool operator==(const ClassificationVerdict&) const = default;
};

IdentificationVerdict vote_identification(const Ballot<bool>& votes, const EnsembleConfig& cfg);
ClassificationVerdict vote_classification(const Ballot<std::string>& votes, const EnsembleConfig& cfg);

bool score_classification(const ClassificationVerdict& verdict, const std::string& gold);

// Single label standing for the verdict when scoring: the gold label if it is
// in the argmax set, otherwise the smallest label of the set.
std::string resolve_prediction(const ClassificationVerdict& verdict, const std::string& gold);

struct Sample {
  std::string backend_id;
  ParsedAnswer answer;
};

struct SelfConsistencyVerdict {
  IdentificationVerdict identification;
  ClassificationVerdict classification;
};

// Majority over i.i.d. samples of one backend; each sample acts as a member.
SelfConsistencyVerdict self_consistency_aggregate(const std::vector<Sample>& samples,
                                                  std::optional<std::size_t> threshold = std::nullopt);

}  // namespace mvp::vote
