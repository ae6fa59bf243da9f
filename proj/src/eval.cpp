#include "mvp/eval.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "mvp/text.hpp"

namespace mvp::eval {

using nlohmann::json;

json AprfScores::to_json() const {
  return {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall}, {"f_score", f_score}};
}

AprfScores aprf(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                const std::vector<std::string>& classes) {
  if (predictions.size() != gold.size()) throw InvalidArgument("aprf: predictions and gold differ in length");
  if (gold.empty()) throw InvalidArgument("aprf: no samples");
  const std::set<std::string> valid(classes.begin(), classes.end());

  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> per_class;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = gold[i];
    if (!valid.count(p)) throw InvalidArgument("aprf: prediction '" + p + "' is not a configured class");
    if (!valid.count(g)) throw InvalidArgument("aprf: gold label '" + g + "' is not a configured class");
    if (p == g) {
      ++correct;
      ++per_class[g].tp;
    } else {
      ++per_class[p].fp;
      ++per_class[g].fn;
    }
  }

  AprfScores s;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  double p_sum = 0.0;
  double r_sum = 0.0;
  for (const auto& [_, c] : per_class) {
    if (c.tp + c.fp > 0) p_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  const double k = static_cast<double>(per_class.size());
  s.precision = p_sum / k;
  s.recall = r_sum / k;
  s.f_score = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::string to_string(Task t) { return t == Task::kIdentification ? "identification" : "classification"; }

Task task_from_string(const std::string& s) {
  if (s == "identification") return Task::kIdentification;
  if (s == "classification") return Task::kClassification;
  throw InvalidArgument("unknown task '" + s + "'");
}

std::pair<vote::IdentificationVerdict, vote::ClassificationVerdict> ensemble_verdicts(const EvalSample& sample,
                                                                                      const vote::EnsembleConfig& cfg) {
  vote::Ballot<bool> ident;
  vote::Ballot<std::string> cls;
  for (const auto& id : cfg.member_ids) {
    auto it = sample.votes.find(id);
    if (it == sample.votes.end()) continue;  // reported as incomplete below
    ident[id] = it->second.identification;
    cls[id] = it->second.disease_label;
  }
  return {vote::vote_identification(ident, cfg), vote::vote_classification(cls, cfg)};
}

std::string gold_class(const EvalSample& sample, const std::vector<std::string>& classes) {
  return std::find(classes.begin(), classes.end(), sample.gold.disease_id) != classes.end() ? sample.gold.disease_id
                                                                                             : kOtherLabel;
}

namespace {

std::vector<std::string> with_other(const std::vector<std::string>& classes) {
  std::vector<std::string> out = classes;
  if (std::find(out.begin(), out.end(), kOtherLabel) == out.end()) out.push_back(kOtherLabel);
  return out;
}

struct Columns {
  std::vector<std::string> pred;
  std::vector<std::string> gold;
};

ScoreGrid score_columns(const std::map<GridKey, Columns>& columns, const std::vector<std::string>& classes) {
  ScoreGrid grid;
  const auto cls = with_other(classes);
  for (const auto& [key, c] : columns) {
    grid[key] = aprf(c.pred, c.gold, key.first == Task::kIdentification ? kIdentificationClasses : cls);
  }
  return grid;
}

const char* yes_no(bool v) { return v ? "yes" : "no"; }

}  // namespace

ScoreGrid ensemble_scores(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                          const std::vector<std::string>& classes) {
  std::map<GridKey, Columns> columns;
  for (const auto& s : samples) {
    const auto [ident, cls] = ensemble_verdicts(s, cfg);
    const std::string gold = gold_class(s, classes);
    auto& ci = columns[{Task::kIdentification, s.ref.window_words}];
    ci.pred.push_back(yes_no(ident.decision));
    ci.gold.push_back(yes_no(s.gold.identification));
    auto& cc = columns[{Task::kClassification, s.ref.window_words}];
    cc.pred.push_back(vote::resolve_prediction(cls, gold));
    cc.gold.push_back(gold);
  }
  return score_columns(columns, classes);
}

ScoreGrid member_scores(const std::vector<EvalSample>& samples, const std::string& member,
                        const std::vector<std::string>& classes) {
  std::map<GridKey, Columns> columns;
  for (const auto& s : samples) {
    auto it = s.votes.find(member);
    if (it == s.votes.end()) throw vote::IncompleteBallotError("no answer from '" + member + "'", {member});
    auto& ci = columns[{Task::kIdentification, s.ref.window_words}];
    ci.pred.push_back(yes_no(it->second.identification));
    ci.gold.push_back(yes_no(s.gold.identification));
    auto& cc = columns[{Task::kClassification, s.ref.window_words}];
    cc.pred.push_back(it->second.disease_label);
    cc.gold.push_back(gold_class(s, classes));
  }
  return score_columns(columns, classes);
}

std::vector<double> correctness(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                                const std::string& member, Task task, int context,
                                const std::vector<std::string>& classes) {
  std::vector<double> out;
  for (const auto& s : samples) {
    if (s.ref.window_words != context) continue;
    bool ok = false;
    if (member.empty()) {
      const auto [ident, cls] = ensemble_verdicts(s, cfg);
      ok = task == Task::kIdentification ? ident.decision == s.gold.identification
                                         : vote::score_classification(cls, gold_class(s, classes));
    } else {
      auto it = s.votes.find(member);
      if (it == s.votes.end()) throw vote::IncompleteBallotError("no answer from '" + member + "'", {member});
      ok = task == Task::kIdentification ? it->second.identification == s.gold.identification
                                         : it->second.disease_label == gold_class(s, classes);
    }
    out.push_back(ok ? 1.0 : 0.0);
  }
  return out;
}

namespace {

json grid_to_json(const ScoreGrid& grid) {
  json arr = json::array();
  for (const auto& [key, scores] : grid) {
    json row = scores.to_json();
    row["task"] = to_string(key.first);
    row["context"] = key.second;
    arr.push_back(row);
  }
  return arr;
}

std::string fmt2(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

json AblationReport::to_json() const {
  json j{{"baseline", grid_to_json(baseline)}, {"rows", json::object()}};
  for (const auto& [member, grid] : rows) j["rows"][member] = grid_to_json(grid);
  return j;
}

std::string AblationReport::to_table() const {
  std::ostringstream out;
  std::size_t width = std::string("Excluded").size();
  for (const auto& [m, _] : rows) width = std::max(width, m.size());
  width = std::max(width, std::string("(none)").size());
  auto emit = [&](const std::string& name, const ScoreGrid& grid) {
    for (const auto& [key, s] : grid) {
      out << name << std::string(width - name.size() + 2, ' ') << to_string(key.first)
          << std::string(16 - to_string(key.first).size(), ' ') << key.second << "\t" << fmt2(s.accuracy) << ", "
          << fmt2(s.precision) << ", " << fmt2(s.recall) << ", " << fmt2(s.f_score) << '\n';
    }
  };
  out << "Excluded" << std::string(width - 8 + 2, ' ') << "task            context\tAPRF\n";
  emit("(none)", baseline);
  for (const auto& [member, grid] : rows) emit(member, grid);
  return out.str();
}

AblationReport ablation_leave_one_out(const std::vector<EvalSample>& samples, const vote::EnsembleConfig& cfg,
                                      const std::vector<std::string>& classes, unsigned threads) {
  cfg.validate();
  if (cfg.m() < 2) throw InvalidArgument("ablation needs at least two ensemble members");
  AblationReport report;
  report.baseline = ensemble_scores(samples, cfg, classes);

  std::vector<ScoreGrid> grids(cfg.m());
  auto run = [&](std::size_t i) { grids[i] = ensemble_scores(samples, cfg.without(cfg.member_ids[i]), classes); };
  if (threads <= 1) {
    for (std::size_t i = 0; i < cfg.m(); ++i) run(i);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < cfg.m(); ++i) workers.emplace_back(run, i);
  }
  for (std::size_t i = 0; i < cfg.m(); ++i) report.rows.emplace(cfg.member_ids[i], std::move(grids[i]));
  return report;
}

json ResultRow::to_json() const {
  return {{"model", model},
          {"context", context},
          {"task", to_string(task)},
          {"scores", scores.to_json()},
          {"best", {best[0], best[1], best[2], best[3]}}};
}

std::vector<ResultRow> build_results_table(const std::vector<std::pair<std::string, AprfScores>>& per_model,
                                           const AprfScores& mvp, int context, Task task) {
  std::vector<ResultRow> rows;
  for (const auto& [model, scores] : per_model) rows.push_back({model, context, task, scores, {}});
  rows.push_back({kEnsembleModelName, context, task, mvp, {}});
  auto shown = [](double v) { return std::llround(v * 100.0); };
  for (std::size_t col = 0; col < 4; ++col) {
    long long best = LLONG_MIN;
    for (const auto& r : rows) best = std::max(best, shown(r.scores.values()[col]));
    for (auto& r : rows) r.best[col] = shown(r.scores.values()[col]) == best;
  }
  return rows;
}

std::string format_results_table(const std::vector<ResultRow>& rows) {
  std::size_t width = std::string("Model").size();
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::ostringstream out;
  out << "Model" << std::string(width - 5 + 2, ' ') << "Context    Task              A      P      R      F\n";
  int last_context = -1;
  for (const auto& r : rows) {
    if (r.context != last_context && last_context != -1) out << std::string(width + 60, '-') << '\n';
    last_context = r.context;
    const std::string ctx = std::to_string(r.context) + " words";
    const std::string task = to_string(r.task);
    out << r.model << std::string(width - r.model.size() + 2, ' ') << ctx << std::string(11 - ctx.size(), ' ')
        << task << std::string(16 - task.size(), ' ');
    const auto v = r.scores.values();
    for (std::size_t c = 0; c < 4; ++c) out << "  " << fmt2(v[c]) << (r.best[c] ? '*' : ' ');
    out << '\n';
  }
  return out.str();
}

}  // namespace mvp::eval
