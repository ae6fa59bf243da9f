// mvp: command-line front end of the voting pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvp/corpus.hpp"
#include "mvp/eval.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/orchestrator.hpp"
#include "mvp/parse.hpp"
#include "mvp/prompt.hpp"
#include "mvp/review.hpp"
#include "mvp/synthetic.hpp"
#include "mvp/text.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace mvp;

std::vector<int> parse_sizes(const std::string& csv) {
  std::vector<int> out;
  for (const auto& part : text::split(csv, ',')) {
    const std::string p = text::trim(part);
    if (p.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(p, &used);
    if (used != p.size() || v <= 0) throw InvalidArgument("bad window size '" + p + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(jsonl::read_file(path));
  for (std::string line; std::getline(in, line);) {
    line = text::trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// "run" or "run:member"; an empty member selects the ensemble.
std::pair<std::string, std::string> split_run_ref(const std::string& ref) {
  const auto colon = ref.rfind(':');
  if (colon == std::string::npos) return {ref, ""};
  return {ref.substr(0, colon), ref.substr(colon + 1)};
}

void print_rows(const std::vector<eval::ResultRow>& rows, const std::string& out_path) {
  std::cout << eval::format_results_table(rows);
  if (!out_path.empty()) {
    std::vector<json> records;
    for (const auto& r : rows) records.push_back(r.to_json());
    jsonl::write(out_path, records);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble voting over language-model backends for rare disease identification"};
  app.require_subcommand(1);

  // corpus synth
  auto* corpus_cmd = app.add_subcommand("corpus", "corpus utilities")->require_subcommand(1);
  auto* synth = corpus_cmd->add_subcommand("synth", "generate a synthetic note collection with gold labels");
  std::string terms_path, corpus_out, gold_out;
  std::size_t n_docs = 256, background = 0, min_words = 60, max_words = 420;
  std::uint64_t seed = 1;
  double positive_rate = 0.5;
  synth->add_option("--terms", terms_path, "term list (TSV)")->required();
  synth->add_option("--n", n_docs, "mention documents");
  synth->add_option("--background", background, "documents without any mention");
  synth->add_option("--seed", seed);
  synth->add_option("--positive-rate", positive_rate);
  synth->add_option("--min-words", min_words);
  synth->add_option("--max-words", max_words);
  synth->add_option("--out", corpus_out, "corpus output (JSONL)")->required();
  synth->add_option("--gold", gold_out, "gold output (JSONL)")->required();

  // index build | filter | top
  auto* index_cmd = app.add_subcommand("index", "inverted index")->require_subcommand(1);
  auto* ibuild = index_cmd->add_subcommand("build", "match every term against every document");
  std::string corpus_path, index_path, out_path;
  unsigned threads = 0;
  ibuild->add_option("--corpus", corpus_path)->required();
  ibuild->add_option("--terms", terms_path)->required();
  ibuild->add_option("--threads", threads, "0 = hardware concurrency");
  ibuild->add_option("--out", out_path)->required();
  auto* ifilter = index_cmd->add_subcommand("filter", "apply the length and prevalence filters");
  corpus::FilterConfig filter;
  ifilter->add_option("--index", index_path)->required();
  ifilter->add_option("--min-chars", filter.min_term_chars);
  ifilter->add_option("--max-df", filter.max_doc_frequency, "maximum document-frequency fraction");
  ifilter->add_option("--out", out_path)->required();
  auto* itop = index_cmd->add_subcommand("top", "most frequently matched diseases");
  std::size_t top_k = 4;
  itop->add_option("--index", index_path)->required();
  itop->add_option("--terms", terms_path)->required();
  itop->add_option("--k", top_k);

  // windows extract
  auto* windows_cmd = app.add_subcommand("windows", "context windows")->require_subcommand(1);
  auto* wextract = windows_cmd->add_subcommand("extract", "cut windows around the first mention");
  std::string sizes_csv = "32,64,128,256", gold_path;
  std::vector<std::string> diseases;
  wextract->add_option("--corpus", corpus_path)->required();
  wextract->add_option("--terms", terms_path)->required();
  wextract->add_option("--index", index_path, "filtered index")->required();
  wextract->add_option("--diseases", diseases, "disease ids (default: top --k)")->delimiter(',');
  wextract->add_option("--k", top_k);
  wextract->add_option("--sizes", sizes_csv);
  wextract->add_option("--gold", gold_path);
  wextract->add_option("--out", out_path)->required();

  // prompt render
  auto* prompt_cmd = app.add_subcommand("prompt", "prompt templates")->require_subcommand(1);
  auto* prender = prompt_cmd->add_subcommand("render", "render one window with a template");
  std::string family, window_id, windows_path;
  prender->add_option("--family", family, "llama2, alpaca, vicuna or a template path")->required();
  prender->add_option("--window", window_id, "<doc_id>#<disease_id>@<size>")->required();
  prender->add_option("--windows", windows_path, "windows file (JSONL)")->required();

  // parse extract
  auto* parse_cmd = app.add_subcommand("parse", "answer extraction")->require_subcommand(1);
  auto* pextract = parse_cmd->add_subcommand("extract", "classify generations and report compliance");
  std::string in_path;
  pextract->add_option("--in", in_path, "JSONL with raw_text and optional backend_id")->required();
  pextract->add_option("--out", out_path);

  // run
  auto* run_cmd = app.add_subcommand("run", "run (or resume) an experiment");
  std::string config_path;
  std::size_t stop_after = 0;
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_option("--stop-after", stop_after, "stop after this many new generations");

  // annotate serve
  auto* annotate_cmd = app.add_subcommand("annotate", "manual annotation")->require_subcommand(1);
  auto* serve = annotate_cmd->add_subcommand("serve", "serve the review API");
  std::string run_ref, addr = "127.0.0.1:8080", static_dir, runs_root = "runs";
  serve->add_option("--run", run_ref, "run id, directory or log path")->required();
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--static", static_dir, "directory of the review UI build");
  serve->add_option("--runs-root", runs_root);

  // eval report | ablate | ttest | kappa
  auto* eval_cmd = app.add_subcommand("eval", "evaluation")->require_subcommand(1);
  auto* ereport = eval_cmd->add_subcommand("report", "APRF per model and for the ensemble");
  ereport->add_option("--run", run_ref)->required();
  ereport->add_option("--runs-root", runs_root);
  ereport->add_option("--out", out_path, "rows as JSONL");
  auto* eablate = eval_cmd->add_subcommand("ablate", "leave-one-model-out ensembles");
  eablate->add_option("--run", run_ref)->required();
  eablate->add_option("--runs-root", runs_root);
  eablate->add_option("--out", out_path, "report as JSON");
  auto* ettest = eval_cmd->add_subcommand("ttest", "paired t-test on per-sample correctness");
  std::string a_ref, b_ref, task_name = "identification";
  int context = 256;
  ettest->add_option("--a", a_ref, "run[:member]")->required();
  ettest->add_option("--b", b_ref, "run[:member]")->required();
  ettest->add_option("--task", task_name);
  ettest->add_option("--context", context);
  ettest->add_option("--runs-root", runs_root);
  auto* ekappa = eval_cmd->add_subcommand("kappa", "Cohen's kappa of two label files (one label per line)");
  ekappa->add_option("--a", a_ref)->required();
  ekappa->add_option("--b", b_ref)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      corpus::SyntheticOptions opts;
      opts.min_words = min_words;
      opts.max_words = max_words;
      opts.background_docs = background;
      auto sc = corpus::generate_synthetic_corpus(seed, n_docs, corpus::load_term_list(terms_path), positive_rate, opts);
      corpus::save_corpus(corpus_out, sc.documents);
      corpus::save_gold(gold_out, sc.gold);
      std::cerr << sc.documents.size() << " documents, " << sc.gold.size() << " gold labels\n";
    } else if (ibuild->parsed()) {
      auto idx = corpus::build_inverted_index(corpus::load_corpus(corpus_path), corpus::load_term_list(terms_path), threads);
      jsonl::write_file(out_path, idx.to_json().dump(2) + "\n");
      std::cerr << idx.postings.size() << " matched terms over " << idx.corpus_size << " documents\n";
    } else if (ifilter->parsed()) {
      auto idx = corpus::InvertedIndex::from_json(json::parse(jsonl::read_file(index_path)));
      auto kept = corpus::apply_weak_supervision_filters(idx, filter);
      jsonl::write_file(out_path, kept.to_json().dump(2) + "\n");
      std::cerr << kept.postings.size() << " of " << idx.postings.size() << " terms kept\n";
    } else if (itop->parsed()) {
      auto idx = corpus::InvertedIndex::from_json(json::parse(jsonl::read_file(index_path)));
      const auto terms = corpus::load_term_list(terms_path);
      const auto counts = corpus::disease_doc_counts(idx, terms);
      for (const auto& id : corpus::select_top_diseases(idx, terms, top_k)) std::cout << id << '\t' << counts.at(id) << '\n';
    } else if (wextract->parsed()) {
      const auto docs = corpus::load_corpus(corpus_path);
      const auto terms = corpus::load_term_list(terms_path);
      auto idx = corpus::InvertedIndex::from_json(json::parse(jsonl::read_file(index_path)));
      if (diseases.empty()) diseases = corpus::select_top_diseases(idx, terms, top_k);
      std::optional<corpus::GoldTable> gold;
      if (!gold_path.empty()) gold = corpus::load_gold(gold_path);
      auto ws = corpus::extract_context_windows(docs, idx, terms, diseases, parse_sizes(sizes_csv), gold ? &*gold : nullptr);
      std::vector<json> records;
      for (const auto& w : ws) records.push_back(w.to_json());
      jsonl::write(out_path, records);
      std::cerr << ws.size() << " windows\n";
    } else if (prender->parsed()) {
      const auto tmpl = prompt::resolve_template(family);
      std::optional<corpus::ContextWindow> found;
      jsonl::for_each(windows_path, [&](const json& j, std::size_t) {
        auto w = corpus::ContextWindow::from_json(j);
        if (w.ref.id() == window_id) found = std::move(w);
      });
      if (!found) throw NotFoundError("window '" + window_id + "' not in " + windows_path);
      auto rp = prompt::render_prompt(tmpl, *found);
      std::cout << rp.text;
      if (rp.text.empty() || rp.text.back() != '\n') std::cout << '\n';
      std::cerr << "prompt hash " << rp.content_hash << '\n';
    } else if (pextract->parsed()) {
      const auto classes = parse::default_rare_disease_classes();
      std::map<std::string, std::vector<parse::Status>> statuses;
      std::vector<std::string> order;
      std::vector<json> out;
      jsonl::for_each(in_path, [&](const json& j, std::size_t line) {
        if (!j.contains("raw_text") || !j.at("raw_text").is_string()) throw ParseError("missing raw_text", line);
        const auto backend_id = j.value("backend_id", std::string("unknown"));
        auto r = parse::extract_json(j.at("raw_text").get<std::string>(), classes);
        if (!statuses.count(backend_id)) order.push_back(backend_id);
        statuses[backend_id].push_back(r.status);
        json rec = r.to_json();
        rec["backend_id"] = backend_id;
        out.push_back(std::move(rec));
      });
      if (!out_path.empty()) {
        jsonl::write(out_path, out);
      } else {
        for (const auto& r : out) std::cout << r.dump() << '\n';
      }
      std::vector<std::pair<std::string, std::vector<parse::Status>>> rows;
      for (const auto& id : order) rows.push_back({id, statuses[id]});
      std::cerr << parse::compliance_report(rows).to_table();
    } else if (run_cmd->parsed()) {
      auto cfg = orchestrator::RunConfig::load(config_path);
      orchestrator::RunOptions opts;
      if (stop_after > 0) opts.stop_after = stop_after;
      opts.progress = [](std::size_t done, std::size_t total) {
        std::fprintf(stderr, "\r%zu/%zu generations", done, total);
        if (done == total) std::fputc('\n', stderr);
      };
      auto record = orchestrator::run_experiment(cfg, opts);
      auto loaded = orchestrator::load_run(cfg.log_path());
      std::cerr << record.entries.size() << " generations, " << loaded.state.tasks.size() << " annotation tasks, "
                << loaded.samples.size() << "/" << loaded.windows << " windows with complete ballots"
                << (record.finished ? "" : " (run incomplete)") << "\nlog: " << cfg.log_path().string() << '\n';
      std::cout << loaded.compliance().to_table();
    } else if (serve->parsed()) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw InvalidArgument("--addr must be host:port");
      orchestrator::RunStore store(orchestrator::resolve_run_log(run_ref, runs_root));
      review::ServerOptions opts;
      opts.static_dir = static_dir;
      review::ReviewServer server(store, opts);
      std::cerr << "serving " << store.path().string() << " on " << addr << '\n';
      if (!server.listen(addr.substr(0, colon), std::stoi(addr.substr(colon + 1)))) {
        throw IoError("cannot listen on " + addr);
      }
    } else if (ereport->parsed()) {
      auto run = orchestrator::load_run(orchestrator::resolve_run_log(run_ref, runs_root));
      std::fprintf(stdout, "coverage: %zu/%zu windows (%.1f%%)\n", run.samples.size(), run.windows, 100.0 * run.coverage());
      print_rows(orchestrator::results_rows(run), out_path);
    } else if (eablate->parsed()) {
      auto run = orchestrator::load_run(orchestrator::resolve_run_log(run_ref, runs_root));
      auto report = eval::ablation_leave_one_out(run.samples, run.ensemble, run.classes, 0);
      std::cout << report.to_table();
      if (!out_path.empty()) jsonl::write_file(out_path, report.to_json().dump(2) + "\n");
    } else if (ettest->parsed()) {
      const auto [a_run, a_member] = split_run_ref(a_ref);
      const auto [b_run, b_member] = split_run_ref(b_ref);
      auto ra = orchestrator::load_run(orchestrator::resolve_run_log(a_run, runs_root));
      auto rb = orchestrator::load_run(orchestrator::resolve_run_log(b_run, runs_root));
      // Pair samples by window.
      std::map<std::string, const eval::EvalSample*> by_id;
      for (const auto& s : rb.samples) by_id[s.ref.id()] = &s;
      std::vector<eval::EvalSample> sa, sb;
      for (const auto& s : ra.samples) {
        if (auto it = by_id.find(s.ref.id()); it != by_id.end()) {
          sa.push_back(s);
          sb.push_back(*it->second);
        }
      }
      const auto task = eval::task_from_string(task_name);
      const auto xa = eval::correctness(sa, ra.ensemble, a_member, task, context, ra.classes);
      const auto xb = eval::correctness(sb, rb.ensemble, b_member, task, context, rb.classes);
      auto r = eval::paired_t_test(xa, xb);
      json j = r.to_json();
      j["pairs"] = xa.size();
      std::cout << j.dump(2) << '\n';
    } else if (ekappa->parsed()) {
      auto k = eval::cohens_kappa(read_lines(a_ref), read_lines(b_ref));
      std::cout << json{{"p_o", k.p_o}, {"p_e", k.p_e}, {"kappa", k.kappa}}.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
