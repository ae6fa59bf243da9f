#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/answer.hpp"
#include "mvp/corpus.hpp"
#include "mvp/error.hpp"
#include "mvp/vote.hpp"

namespace mvp::eval {

class DegenerateDistributionError : public Error {
 public:
  using Error::Error;
};

class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

struct AprfScores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;

  std::array<double, 4> values() const { return {accuracy, precision, recall, f_score}; }
  nlohmann::json to_json() const;
  bool operator==(const AprfScores&) const = default;
};

// Accuracy is the exact-match rate. Precision and recall are macro-averaged
// over the classes occurring in `gold` or `predictions`; a class that is never
// predicted (or never gold) contributes 0 precision (recall). F is the
// harmonic mean of macro-P and macro-R. Labels must belong to `classes`.
AprfScores aprf(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                const std::vector<std::string>& classes);

struct KappaResult {
  double p_o = 0.0;
  double p_e = 0.0;
  double kappa = 0.0;
};

KappaResult cohens_kappa(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b);

struct TTestResult {
  double t_statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  double p_value = 1.0;
  double mean_difference = 0.0;

  nlohmann::json to_json() const;
};

// Two-tailed p-value of Student's t with `df` degrees of freedom, through the
// regularized incomplete beta function.
double student_t_two_tailed_p(double t, double df);

TTestResult paired_t_test(std::span<const double> xs, std::span<const double> ys);

enum class Task { kIdentification, kClassification };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

// One evaluated window: its gold label and every member's answer.
struct EvalSample {
  corpus::WindowRef ref;
  corpus::GoldLabel gold;
  vote::Ballot<ParsedAnswer> votes;
};

using GridKey = std::pair<Task, int>;  // (task, context size)
using ScoreGrid = std::map<GridKey, AprfScores>;

inline const std::vector<std::string> kIdentificationClasses = {"no", "yes"};

// Identification and classification verdicts of the ensemble for a sample.
std::pair<vote::IdentificationVerdict, vote::ClassificationVerdict> ensemble_verdicts(const EvalSample& sample,
                                                                                      const vote::EnsembleConfig& cfg);

// Gold classification label of a sample: its disease if configured, else Other.
std::string gold_class(const EvalSample& sample, const std::vector<std::string>& classes);

ScoreGrid ensemble_scores(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                          const std::vector<std::string>& classes);
ScoreGrid member_scores(const std::vector<EvalSample>& samples, const std::string& member,
                        const std::vector<std::string>& classes);

// Per-sample 0/1 correctness, in sample order, restricted to one context size.
// `member` empty selects the ensemble verdict.
std::vector<double> correctness(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                                const std::string& member, Task task, int context,
                                const std::vector<std::string>& classes);

struct AblationReport {
  ScoreGrid baseline;
  std::map<std::string, ScoreGrid> rows;  // excluded member -> scores

  std::size_t row_count() const { return rows.size() + 1; }
  nlohmann::json to_json() const;
  std::string to_table() const;
};

AblationReport ablation_leave_one_out(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                                      const std::vector<std::string>& classes, unsigned threads = 1);

struct ResultRow {
  std::string model;
  int context = 0;
  Task task = Task::kIdentification;
  AprfScores scores;
  std::array<bool, 4> best{};

  nlohmann::json to_json() const;
};

inline const std::string kEnsembleModelName = "Models-Vote Prompting";

// Rows for every model plus the ensemble, in input order. A column's best
// value (compared at two decimals, as displayed) is flagged on every row
// attaining it.
std::vector<ResultRow> build_results_table(const std::vector<std::pair<std::string, AprfScores>>& per_model,
                                           const AprfScores& mvp, int context, Task task);

// Aligned text table; best values are marked with '*'.
std::string format_results_table(const std::vector<ResultRow>& rows);

}  // namespace mvp::eval
