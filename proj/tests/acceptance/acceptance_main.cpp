// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvp/eval.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/parse.hpp"
#include "mvp/vote.hpp"
#include "run_fixture.hpp"
#include "support.hpp"

namespace {

using namespace mvp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail << what;
    ok = ok && cond;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = Clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail << "exception: " << e.what();
  }
  const double secs = seconds_since(t0);
  failures += !out.ok;
  std::printf("%s %s (%.2fs)%s%s\n", out.ok ? "PASS" : "FAIL", name.c_str(), secs,
              out.detail.str().empty() ? "" : " ", out.detail.str().c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

void vote_oracle(Outcome& out) {
  const auto t0 = Clock::now();
  const vote::EnsembleConfig cfg{{"m1", "m2", "m3", "m4"}, std::nullopt};
  for (unsigned mask = 0; mask < 16; ++mask) {
    vote::Ballot<bool> b;
    std::size_t yes = 0;
    for (unsigned i = 0; i < 4; ++i) {
      b[cfg.member_ids[i]] = (mask >> i) & 1u;
      yes += (mask >> i) & 1u;
    }
    const auto v = vote::vote_identification(b, cfg);
    out.expect(v.yes_votes == yes && v.decision == (yes >= 2), "identification mask " + std::to_string(mask));
  }
  vote::Ballot<bool> two{{"m1", true}, {"m2", true}, {"m3", false}, {"m4", false}};
  vote::Ballot<bool> one{{"m1", true}, {"m2", false}, {"m3", false}, {"m4", false}};
  out.expect(vote::vote_identification(two, cfg).decision, "2 yes-votes gave no");
  out.expect(!vote::vote_identification(one, cfg).decision, "1 yes-vote gave yes");

  const std::vector<std::string> labels = {"B", "COP", "GCA", "GVHD", "Other"};
  for (unsigned code = 0; code < 625; ++code) {
    vote::Ballot<std::string> b;
    std::map<std::string, std::size_t> counts;
    unsigned c = code;
    for (unsigned i = 0; i < 4; ++i, c /= 5) {
      b[cfg.member_ids[i]] = labels[c % 5];
      ++counts[labels[c % 5]];
    }
    std::size_t best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    std::set<std::string> expected;
    for (const auto& [l, n] : counts) {
      if (n == best) expected.insert(l);
    }
    const auto v = vote::vote_classification(b, cfg);
    out.expect(v.argmax_set == expected && v.max_count == best, "classification code " + std::to_string(code));
  }
  out.expect(seconds_since(t0) < 1.0, "slower than 1s");
}

void compliance_arithmetic(Outcome& out) {
  const auto t0 = Clock::now();
  const auto r = parse::compliance_report_from_counts({{"llama-2-13b", {1024, 33}},
                                                       {"medalpaca-13b", {1024, 197}},
                                                       {"stable-platypus-2-13b", {1024, 185}},
                                                       {"vicuna-13b", {1024, 162}}});
  const std::vector<std::string> want = {"96.8%", "80.8%", "82.0%", "84.2%"};
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto got = r.per_backend[i].percent();
    out.expect(got == want[i], r.per_backend[i].backend_id + " " + got + " != " + want[i] + "; ");
  }
  out.expect(r.overall.percent() == "85.9%", "overall " + r.overall.percent());
  out.expect(r.overall.failures == 577 && r.overall.total == 4096, "overall counts");
  out.expect(seconds_since(t0) < 1.0, "slower than 1s");
}

void kappa(Outcome& out) {
  const std::vector<std::string> a = {"yes", "no", "yes", "no", "no", "yes"};
  out.expect(eval::cohens_kappa(a, a).kappa == 1.0, "identical vectors not exactly 1");
  // 20 items, both raters 10/10, two disagreements: p_o = 0.9, p_e = 0.5.
  std::vector<std::string> x(20, "no"), y(20, "no");
  for (int i = 0; i < 10; ++i) x[i] = y[i] = "yes";
  y[0] = "no";
  y[10] = "yes";
  const auto k = eval::cohens_kappa(x, y);
  out.expect(std::abs(k.p_o - 0.9) < 1e-12 && std::abs(k.p_e - 0.5) < 1e-12, "p_o/p_e");
  out.expect(std::abs(k.kappa - 0.8) <= 1e-12, "kappa " + std::to_string(k.kappa));
}

// Two-tailed p by Simpson's rule on the t density over [0, |t|].
double simpson_p(double t, double df) {
  const double c = std::tgamma((df + 1) / 2) / (std::sqrt(df * M_PI) * std::tgamma(df / 2));
  auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = f(0) + f(std::abs(t));
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * s * h / 3;
}

void t_test(Outcome& out) {
  const std::vector<double> xs = {2, 4, 6, 8}, ys = {1, 3, 5, 9};
  const auto r = eval::paired_t_test(xs, ys);
  out.expect(r.t_statistic == 1.0, "t " + std::to_string(r.t_statistic));
  out.expect(r.degrees_of_freedom == 3, "df");
  out.expect(std::abs(r.p_value - 0.3910) <= 5e-4, "p " + std::to_string(r.p_value));
  const double ref = simpson_p(1.0, 3.0);
  out.expect(std::abs(r.p_value - ref) <= 5e-4 && std::abs(ref - 0.3910) <= 5e-4, "integration " + std::to_string(ref));
  const auto swapped = eval::paired_t_test(ys, xs);
  out.expect(swapped.t_statistic == -1.0 && swapped.p_value == r.p_value, "swap symmetry");
  bool threw = false;
  try {
    const std::vector<double> shifted = {3, 5, 7, 9};
    eval::paired_t_test(xs, shifted);
  } catch (const eval::ZeroVarianceError&) {
    threw = true;
  }
  out.expect(threw, "zero variance accepted");
}

// Naive scan that tokenizes each document once.
std::map<std::string, std::vector<std::string>> scan(const std::vector<corpus::Document>& docs,
                                                     const std::vector<corpus::TermEntry>& terms) {
  std::vector<std::vector<std::string>> keys;
  for (const auto& t : terms) {
    std::vector<std::string> names = {t.preferred_label};
    names.insert(names.end(), t.synonyms.begin(), t.synonyms.end());
    for (const auto& n : names) keys.push_back(testing::naive_words(n));
  }
  std::map<std::string, std::set<std::string>> found;
  for (const auto& d : docs) {
    const auto words = testing::naive_words(d.text);
    for (const auto& k : keys) {
      for (std::size_t i = 0; i + k.size() <= words.size(); ++i) {
        if (std::equal(k.begin(), k.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
          std::string key;
          for (const auto& w : k) key += (key.empty() ? "" : " ") + w;
          found[key].insert(d.doc_id);
          break;
        }
      }
    }
  }
  std::map<std::string, std::vector<std::string>> res;
  for (const auto& [k, ds] : found) res[k].assign(ds.begin(), ds.end());
  return res;
}

void index_equivalence(Outcome& out) {
  const auto t0 = Clock::now();
  const auto terms = testing::invented_terms(50);
  const auto sc =
      corpus::generate_synthetic_corpus(7, 4500, terms, 0.5, {.min_words = 20, .max_words = 120, .background_docs = 500});
  out.expect(sc.documents.size() == 5000, "corpus size " + std::to_string(sc.documents.size()));
  const auto idx = corpus::build_inverted_index(sc.documents, terms, 8);
  out.expect(idx.postings.size() >= 50, "index nearly empty; ");
  out.expect(idx.postings == scan(sc.documents, terms), "parallel index differs from naive scan; ");
  out.expect(idx == corpus::build_inverted_index(sc.documents, terms, 1), "thread count changed the index; ");

  corpus::InvertedIndex small;
  small.corpus_size = 1000;
  auto add = [&](const std::string& term, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) small.postings[term].push_back("d" + std::to_string(1000 + i));
    small.mention_counts[term] = n;
  };
  add("gvh", 1);
  add("sixdocs", 6);
  add("fivedocs", 5);
  const auto kept = corpus::apply_weak_supervision_filters(small, {});
  out.expect(!kept.postings.count("gvh"), "3-char term kept; ");
  out.expect(!kept.postings.count("sixdocs"), "0.6% term kept; ");
  out.expect(kept.postings.count("fivedocs") == 1, "0.5% term removed; ");
  out.expect(seconds_since(t0) < 10.0, "slower than 10s");
}

// Identification accuracy of the four-member run and of the run without the
// weak member, fixed by seed 2024.
constexpr double kE2eBaseline = 368.0 / 400;
constexpr double kE2eAblated = 386.0 / 400;

void e2e_mock_run(Outcome& out) {
  const auto t0 = Clock::now();
  using testing::mock_backend;
  testing::RunFixture fx(400, 2024,
                         {mock_backend("m1", "accuracy-p", 0.9), mock_backend("m2", "accuracy-p", 0.9),
                          mock_backend("m3", "accuracy-p", 0.9), mock_backend("weak", "accuracy-p", 0.5)},
                         {32});
  const auto cfg = fx.cfg();
  const auto record = orchestrator::run_experiment(cfg, fx.opts());
  const auto run = orchestrator::load_run(cfg.log_path());
  out.expect(run.windows == 400 && run.samples.size() == 400, "windows " + std::to_string(run.windows) + "; ");

  const auto gold = corpus::load_gold(fx.dir / "gold.jsonl");
  const auto task = std::make_pair(eval::Task::kIdentification, 32);
  const auto base = eval::ensemble_scores(run.samples, run.ensemble, run.classes).at(task).accuracy;
  const auto abl = eval::ablation_leave_one_out(run.samples, run.ensemble, run.classes);

  // Re-score the transcript by hand.
  std::map<std::string, std::map<std::string, bool>> votes;  // window -> backend -> yes
  std::map<std::string, bool> truth;
  for (const auto& e : record.entries) {
    if (!e.answer) continue;
    votes[e.window.id()][e.backend_id] = e.answer->identification;
    truth[e.window.id()] = gold.at(e.window.doc_id).identification;
  }
  auto majority_accuracy = [&](const std::set<std::string>& members) {
    const std::size_t need = (members.size() + 1) / 2;
    std::size_t right = 0;
    for (const auto& [w, ballot] : votes) {
      std::size_t yes = 0;
      for (const auto& m : members) yes += ballot.at(m);
      right += (yes >= need) == truth.at(w);
    }
    return static_cast<double>(right) / votes.size();
  };
  const double brute_base = majority_accuracy({"m1", "m2", "m3", "weak"});
  const double brute_abl = majority_accuracy({"m1", "m2", "m3"});
  out.expect(votes.size() == 400, "transcript windows; ");
  out.expect(std::abs(brute_base - base) < 1e-12, "ensemble accuracy differs from re-scoring; ");
  const double ablated = abl.rows.at("weak").at(task).accuracy;
  out.expect(std::abs(brute_abl - ablated) < 1e-12, "ablation differs from re-scoring; ");

  std::ostringstream accs;
  for (const auto& id : {"m1", "m2", "m3", "weak"}) {
    const double single = majority_accuracy({id});
    const double scored = eval::member_scores(run.samples, id, run.classes).at(task).accuracy;
    out.expect(std::abs(single - scored) < 1e-12, std::string(id) + " accuracy differs from re-scoring; ");
    out.expect(base >= single, std::string("ensemble below ") + id + "; ");
    accs << id << "=" << single << " ";
  }
  out.expect(ablated >= base, "ablation without weak below baseline; ");
  // Pinned by the seed.
  out.expect(std::abs(base - kE2eBaseline) < 1e-12 && std::abs(ablated - kE2eAblated) < 1e-12,
             "pinned values changed; ");
  out.expect(seconds_since(t0) < 30.0, "slower than 30s; ");
  if (!out.ok) out.detail << "[mvp=" << base << " ablated=" << ablated << " " << accs.str() << "]";
}

void json_fixture_suite(Outcome& out) {
  const auto classes = parse::default_rare_disease_classes();
  const auto cases = jsonl::read(testing::fixture("noisy_generations.jsonl"));
  out.expect(cases.size() == 20, "fixture count; ");
  for (const auto& c : cases) {
    const std::string name = c.at("name");
    const std::string raw = c.at("raw_text");
    const auto r = parse::extract_json(raw, classes);
    out.expect(r.status == parse::status_from_string(c.at("status").get<std::string>()), name + " status; ");
    if (r.status == parse::Status::kNonCompliant) {
      out.expect(!r.answer && !r.json_span, name + " non-compliant carries an answer; ");
    } else if (r.answer) {
      out.expect(r.answer->identification == (c.at("answer") == "yes"), name + " answer; ");
      const std::string disease = c.value("disease", "");
      out.expect(r.answer->disease_label == (disease.empty() ? kOtherLabel : disease), name + " disease; ");
    } else {
      out.expect(false, name + " missing answer; ");
    }
    out.expect(r == parse::extract_json(raw, classes), name + " not idempotent; ");
    if (r.json_span) {
      const auto [b, e] = *r.json_span;
      const bool in_range = b < e && e <= raw.size();
      out.expect(in_range, name + " span out of range; ");
      if (in_range) {
        const std::string sub = raw.substr(b, e - b);
        out.expect(json::parse(sub, nullptr, false).is_object(), name + " span is not an object; ");
        const auto again = parse::extract_json(sub, classes);
        out.expect(again.status == r.status && again.answer == r.answer, name + " span re-extraction; ");
      }
    }
  }
}

void determinism_and_resume(Outcome& out) {
  using testing::mock_backend;
  testing::RunFixture fx(40, 99,
                         {mock_backend("a", "accuracy-p", 0.8, 0.2), mock_backend("b", "always-correct", 1.0, 0.1),
                          mock_backend("c", "always-wrong")});
  const auto straight = orchestrator::run_experiment(fx.cfg(), fx.opts());
  out.expect(straight.finished, "uninterrupted run unfinished; ");
  std::filesystem::remove_all(fx.dir / "runs");
  out.expect(orchestrator::run_experiment(fx.cfg(), fx.opts()) == straight, "rerun differs; ");
  std::filesystem::remove_all(fx.dir / "runs");

  const auto half = orchestrator::run_experiment(fx.cfg(), fx.opts(straight.entries.size() / 2));
  out.expect(!half.finished, "interrupted run reports finished; ");
  const auto resumed = orchestrator::run_experiment(fx.cfg(), fx.opts());
  out.expect(resumed == straight, "resumed record differs; ");
}

}  // namespace

int main() {
  criterion("vote oracle equivalence", vote_oracle);
  criterion("compliance arithmetic", compliance_arithmetic);
  criterion("kappa", kappa);
  criterion("t-test numerics", t_test);
  criterion("index equivalence and filter boundaries", index_equivalence);
  criterion("end-to-end mock run", e2e_mock_run);
  criterion("JSON extraction fixture suite", json_fixture_suite);
  criterion("determinism and resumability", determinism_and_resume);
  return failures;
}
