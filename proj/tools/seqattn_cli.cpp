// seqattn: select / evaluate / verify / sweep-adaptivity.
//
// Every run writes into <out>/<timestamp>-<hash>/. JSON artifacts embed the
// run manifest without its timestamps, so equal command lines give
// byte-identical files; manifest.json adds wall-clock fields.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqattn/seqattn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seqattn;

namespace {

struct DataArgs {
  std::string path;
  std::string label = "y";
  std::string sidecar;
  std::string task;
  std::string normalize = "zscore";
  std::string synthetic;  // "n,d,k_true" Gaussian sparse-linear instance
  double noise = 0.1;
  bool no_header = false;
};

struct TrainArgs {
  std::string model;
  Index hidden = 67;
  std::string optimizer = "adam";
  double lr = 1e-3;
  Index batch_size = 256;
  Index epochs = 100;
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.path, "CSV file (numeric cells, one label column)");
  cmd->add_option("--label", a.label, "label column name, or index with --no-header");
  cmd->add_option("--sidecar", a.sidecar, "JSON with optional task and label_column");
  cmd->add_option("--task", a.task, "regression | classification")->check(CLI::IsMember({"regression", "classification"}));
  cmd->add_flag("--no-header", a.no_header, "CSV has no header row");
  cmd->add_option("--normalize", a.normalize, "zscore | unit | none")->check(CLI::IsMember({"zscore", "unit", "none"}));
  cmd->add_option("--synthetic", a.synthetic, "generate n,d,k_true sparse-linear data instead of --data");
  cmd->add_option("--noise", a.noise, "noise sigma for --synthetic");
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--model", a.model, "linear | glm_logistic | mlp_relu")
      ->check(CLI::IsMember({"linear", "glm_logistic", "mlp_relu"}));
  cmd->add_option("--hidden", a.hidden, "MLP hidden width")->check(CLI::PositiveNumber);
  cmd->add_option("--optimizer", a.optimizer, "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option("--lr", a.lr, "learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", a.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", a.epochs, "total epoch budget (spread over rounds)")->check(CLI::PositiveNumber);
  cmd->add_option("--l2", a.l2, "l2 penalty on unselected mask logits and first-layer rows")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed, "random seed");
}

std::string describe_data(const DataArgs& a) { return a.synthetic.empty() ? a.path : "synthetic:" + a.synthetic; }

Dataset normalize(Dataset ds, const std::string& how) {
  if (how == "zscore") return normalize_zscore(std::move(ds));
  if (how == "unit") return normalize_unit_columns(std::move(ds));
  return ds;
}

Dataset load_data(const DataArgs& a, std::uint64_t seed) {
  if (!a.synthetic.empty()) {
    std::vector<Index> v;
    std::stringstream ss(a.synthetic);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stoll(tok));
    if (v.size() != 3) throw ContractError("--synthetic expects n,d,k_true");
    return normalize(synth_sparse_linear(v[0], v[1], v[2], a.noise, seed).dataset, a.normalize);
  }
  if (a.path.empty()) throw ContractError("one of --data or --synthetic is required");
  std::string label = a.label;
  Task task = Task::regression;
  if (!a.sidecar.empty()) {
    const SidecarMeta meta = load_sidecar(a.sidecar);
    task = meta.task;
    if (!meta.label_column.empty()) label = meta.label_column;
  }
  if (!a.task.empty()) task = task_from_string(a.task);
  return normalize(load_csv(a.path, label, !a.no_header, task), a.normalize);
}

ModelSpec model_spec(const TrainArgs& t, const Dataset& ds) {
  ModelKind kind = ds.task == Task::classification ? ModelKind::glm_logistic : ModelKind::linear;
  if (!t.model.empty()) kind = model_kind_from_string(t.model);
  return make_spec(kind, ds, t.hidden);
}

TrainConfig train_config(const TrainArgs& t) {
  TrainConfig cfg;
  cfg.optimizer = optimizer_from_string(t.optimizer);
  cfg.learning_rate = t.lr;
  cfg.batch_size = t.batch_size;
  cfg.epochs = t.epochs;
  cfg.l2_lambda = t.l2;
  cfg.seed = t.seed;
  return cfg;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Deterministic part of the manifest.
json make_manifest(const std::string& command, const json& config, const std::string& fp, std::uint64_t seed) {
  return {{"command", command}, {"config", config}, {"dataset_fingerprint", fp}, {"seed", seed},
          {"toolkit_version", kVersion}};
}

const auto kProcessStart = std::chrono::system_clock::now();

class RunDir {
 public:
  RunDir(const std::string& root, const json& manifest) : manifest_(manifest), start_(kProcessStart) {
    const std::time_t t = std::chrono::system_clock::to_time_t(start_);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream name;
    name << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << '-' << hex64(fnv1a(manifest.dump())).substr(0, 12);
    dir_ = fs::path(root) / name.str();
    for (int suffix = 1; fs::exists(dir_); ++suffix) dir_ = fs::path(root) / (name.str() + "." + std::to_string(suffix));
    fs::create_directories(dir_);
  }

  void write_json(const std::string& file, json body) const {
    body["manifest"] = manifest_;
    std::ofstream os(dir_ / file);
    os << body.dump(2) << '\n';
    if (!os) throw std::runtime_error("failed writing " + (dir_ / file).string());
  }

  fs::path path(const std::string& file) const { return dir_ / file; }

  void finish() const {
    const auto end = std::chrono::system_clock::now();
    json m = manifest_;
    auto iso = [](std::chrono::system_clock::time_point tp) {
      const std::time_t t = std::chrono::system_clock::to_time_t(tp);
      std::tm tm{};
      gmtime_r(&t, &tm);
      std::ostringstream os;
      os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
      return os.str();
    };
    m["started_at"] = iso(start_);
    m["finished_at"] = iso(end);
    m["wall_time_seconds"] = std::chrono::duration<double>(end - start_).count();
    std::ofstream os(dir_ / "manifest.json");
    os << m.dump(2) << '\n';
    std::cout << dir_.string() << '\n';
  }

 private:
  json manifest_;
  std::chrono::system_clock::time_point start_;
  fs::path dir_;
};

// ---------------------------------------------------------------------------

struct SelectArgs {
  DataArgs data;
  TrainArgs train;
  std::string method;
  std::string scheme = "softmax";
  Index k = 0;
  Index batch_per_round = 1;
  Index epochs_per_round = 0;
  double lasso_lambda = 0.0;
  bool one_pass = false;
  bool warm_start = false;
  std::string out = "runs";
};

int cmd_select(const SelectArgs& a) {
  const Dataset ds = load_data(a.data, a.train.seed);
  const ModelSpec spec = model_spec(a.train, ds);
  const TrainConfig cfg = train_config(a.train);

  SelectionTrace trace;
  if (a.method == "seq-attention") {
    AttentionSelectOptions opt;
    opt.scheme = scheme_from_string(a.scheme);
    opt.batch_per_round = a.batch_per_round;
    opt.epochs_per_round = a.epochs_per_round;
    opt.one_pass = a.one_pass;
    opt.warm_start = a.warm_start;
    trace = sequential_attention(ds, spec, cfg, a.k, opt);
  } else if (a.method == "omp") {
    trace = omp(ds, spec, a.k, cfg);
  } else if (a.method == "greedy") {
    trace = greedy_forward(ds, spec, cfg, a.k);
  } else if (detail::exact_linear_path(ds, spec)) {
    trace = sequential_lasso(ds, a.k, a.lasso_lambda > 0.0 ? LassoSelectMode::fixed(a.lasso_lambda) : LassoSelectMode::exact());
  } else {
    if (a.lasso_lambda <= 0.0) throw ContractError("seq-lasso on a non-linear spec needs --lasso-lambda > 0");
    trace = sequential_lasso_masked(ds, spec, cfg, a.k, a.lasso_lambda);
  }

  json config = {{"method", a.method}, {"k", a.k}, {"data", describe_data(a.data)}, {"label", a.data.label},
                 {"normalize", a.data.normalize}, {"task", to_string(ds.task)}, {"trace_config", trace.config}};
  const json manifest = make_manifest("select", config, trace.dataset_fingerprint, a.train.seed);
  RunDir run(a.out, manifest);
  run.write_json("trace.json", to_json(trace));
  json metrics = {{"final_S", trace.final_s}, {"rounds", trace.rounds.size()}};
  if (!trace.rounds.empty()) metrics["final_train_loss"] = detail::num(trace.rounds.back().train_loss);
  if (!trace.example_visits.empty()) {
    const auto [lo, hi] = std::minmax_element(trace.example_visits.begin(), trace.example_visits.end());
    metrics["example_visits"] = {{"min", *lo}, {"max", *hi}};
  }
  run.write_json("metrics.json", metrics);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  DataArgs data;
  TrainArgs train;
  std::string trace_path;
  Index trials = 5;
  double holdout = 0.2;
  std::string out = "runs";
};

int cmd_evaluate(EvaluateArgs a) {
  std::ifstream in(a.trace_path);
  if (!in) throw ContractError("cannot open trace '" + a.trace_path + "'");
  json tj;
  try {
    in >> tj;
  } catch (const json::exception& e) {
    throw ContractError(a.trace_path + ": " + e.what());
  }
  const SelectionTrace trace = trace_from_json(tj);
  const Dataset ds = load_data(a.data, a.train.seed);
  const std::string fp = fingerprint(ds);
  if (fp != trace.dataset_fingerprint) {
    std::cerr << "error: dataset fingerprint " << fp << " does not match the trace's " << trace.dataset_fingerprint
              << "; use the same data and --normalize as the select run\n";
    return 1;
  }
  const ModelSpec spec = model_spec(a.train, ds);
  const EvaluationSummary summary =
      evaluate_selection(ds, trace.final_s, spec.kind, spec.hidden_width, train_config(a.train), a.trials, a.holdout,
                         a.train.seed);

  json config = {{"trace", trace.method}, {"final_S", trace.final_s}, {"data", describe_data(a.data)},
                 {"model", detail::spec_json(spec)}, {"train", detail::train_config_json(train_config(a.train))},
                 {"trials", a.trials}, {"holdout", a.holdout}};
  RunDir run(a.out, make_manifest("evaluate", config, fp, a.train.seed));
  run.write_json("metrics.json", to_json(summary));
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string suite;
  Index instances = 0;  // 0: suite default
  Index n = 100, d = 30, k = 10;
  std::uint64_t seed = 0;
  double range = 3.0;
  int resolution = 41;
  bool optimization_path = false;
  std::string out = "runs";
};

std::vector<std::uint64_t> seed_list(std::uint64_t base, Index count) {
  std::vector<std::uint64_t> out;
  for (Index i = 0; i < count; ++i) out.push_back(base + static_cast<std::uint64_t>(i));
  return out;
}

/// |S| alternates between 0 and 3 across instances.
LemmaReport lemma_instance(Index n, Index d, std::uint64_t seed, Index index) {
  const Dataset ds = equivalence_instance(n, d, seed);
  IndexList s;
  if (index % 2 == 1) {
    const ModelSpec linear{ModelKind::linear, 0, 1};
    s = omp(ds, linear, 3).final_s;
  }
  return certify_lemma_proj_res(ds.x, ds.y, s, {1e-4, 1e-3, 1e-2, 1e-1});
}

int cmd_verify(const VerifyArgs& a) {
  json report;
  bool pass = true;
  std::optional<QStarGrid> grid;
  if (a.suite == "theorem2") {
    const EquivalenceReport rep = check_seq_lasso_equals_omp(a.n, a.d, a.k, seed_list(a.seed, a.instances ? a.instances : 100));
    report = to_json(rep);
    pass = rep.pass();
  } else if (a.suite == "theorem1") {
    AttentionOmpOptions opt;
    opt.optimization_path = a.optimization_path;
    const auto seeds = seed_list(a.seed, a.instances ? a.instances : 20);
    const AttentionOmpReport rep = check_regularized_attention_equals_omp(a.n, a.d, a.k, seeds, opt);
    std::vector<HoffInstance> hi;
    for (std::uint64_t s : seed_list(a.seed, 50)) hi.push_back(random_hoff_instance(50, 8, s));
    const HoffReport hoff = check_hoff_equivalence(hi);
    const EquivalenceReport lasso_omp = check_seq_lasso_equals_omp(a.n, a.d, a.k, seeds);
    report = {{"analytic", to_json(rep.analytic)}, {"hoff", to_json(hoff)}, {"sequential_lasso_vs_omp", to_json(lasso_omp)}};
    if (rep.optimization) report["optimization_path_evidence"] = to_json(*rep.optimization);
    pass = rep.analytic.pass() && hoff.pass() && lasso_omp.pass();
  } else if (a.suite == "lemma2") {
    json records = json::array();
    const Index count = a.instances ? a.instances : 50;
    for (Index i = 0; i < count; ++i) {
      const LemmaReport r = lemma_instance(a.n, a.d, a.seed + static_cast<std::uint64_t>(i), i);
      pass = pass && r.pass;
      records.push_back(to_json(r));
    }
    report = {{"instances", records}, {"pass", pass}};
  } else if (a.suite == "hoff") {
    std::vector<HoffInstance> hi;
    for (std::uint64_t s : seed_list(a.seed, a.instances ? a.instances : 50)) hi.push_back(random_hoff_instance(50, 8, s));
    const HoffReport rep = check_hoff_equivalence(hi);
    report = to_json(rep);
    pass = rep.pass();
  } else {
    grid = qstar_grid(a.range, a.resolution);
    report = to_json(*grid);
  }

  json config = {{"suite", a.suite}, {"instances", a.instances}, {"n", a.n}, {"d", a.d}, {"k", a.k}};
  if (a.suite == "qstar") config = {{"suite", a.suite}, {"range", a.range}, {"resolution", a.resolution}};
  RunDir run(a.out, make_manifest("verify", config, "", a.seed));
  report["suite"] = a.suite;
  report["pass"] = pass;
  run.write_json("report.json", report);
  if (grid) write_qstar_csv(*grid, run.path("qstar.csv").string());
  run.finish();
  if (!pass) {
    std::cerr << "verification FAILED for suite " << a.suite << '\n';
    if (report.contains("first_divergence")) std::cerr << "first_divergence: " << report["first_divergence"].dump() << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  DataArgs data;
  TrainArgs train;
  std::string scheme = "softmax";
  Index total_k = 64;
  int i_max = 6;
  Index trials = 1;
  double holdout = 0.2;
  std::string out = "runs";
};

int cmd_sweep(const SweepArgs& a) {
  if ((Index{1} << a.i_max) > a.total_k) throw ContractError("2^i-max must not exceed --total-k");
  const Dataset ds = load_data(a.data, a.train.seed);
  const ModelSpec spec = model_spec(a.train, ds);
  std::vector<Index> batches;
  for (int i = 0; i <= a.i_max; ++i) batches.push_back(Index{1} << i);

  json trials = json::array();
  std::vector<std::vector<double>> metric(batches.size());
  std::string metric_name;
  for (Index t = 0; t < a.trials; ++t) {
    TrainConfig cfg = train_config(a.train);
    cfg.seed = detail::derive_seed(a.train.seed, static_cast<std::uint64_t>(t));
    const AdaptivityReport rep = sweep_adaptivity(ds, spec, cfg, a.total_k, batches, scheme_from_string(a.scheme), a.holdout);
    metric_name = rep.metric_name;
    for (std::size_t j = 0; j < rep.rows.size(); ++j) metric[j].push_back(rep.rows[j].metric);
    trials.push_back(to_json(rep));
  }

  std::vector<MeanStd> agg;
  for (const auto& m : metric) agg.push_back(mean_std(m));
  bool monotone = true;
  for (std::size_t j = 1; j < agg.size(); ++j) monotone = monotone && agg[j].mean <= agg[j - 1].mean + 1e-12;

  json config = {{"data", describe_data(a.data)}, {"scheme", a.scheme}, {"total_k", a.total_k}, {"i_max", a.i_max},
                 {"trials", a.trials}, {"model", detail::spec_json(spec)},
                 {"train", detail::train_config_json(train_config(a.train))}};
  RunDir run(a.out, make_manifest("sweep-adaptivity", config, fingerprint(ds), a.train.seed));
  json summary = json::array();
  for (std::size_t j = 0; j < agg.size(); ++j)
    summary.push_back({{"i", j}, {"batch_per_round", batches[j]}, {"mean", agg[j].mean}, {"std", agg[j].std}});
  run.write_json("metrics.json", {{"metric", metric_name}, {"summary", summary}, {"trials", trials},
                                  {"monotone_non_increasing", monotone}});

  // One row per statistic, one column per i, as in the adaptivity table.
  std::ofstream csv(run.path("adaptivity.csv"));
  csv << "dataset,statistic";
  for (std::size_t j = 0; j < agg.size(); ++j) csv << ",i=" << j;
  csv << "\r\n";
  const std::string name = "\"" + describe_data(a.data) + "\"";
  csv << std::fixed << std::setprecision(3) << name << ",mean";
  for (const auto& m : agg) csv << ',' << m.mean;
  csv << "\r\n" << name << ",std";
  for (const auto& m : agg) csv << ',' << m.std;
  csv << "\r\n";
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Attention feature selection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SelectArgs sel;
  auto* select = app.add_subcommand("select", "run a feature selector and write its trace");
  add_data_options(select, sel.data);
  add_train_options(select, sel.train);
  select->add_option("--method", sel.method, "seq-attention | seq-lasso | omp | greedy")
      ->required()
      ->check(CLI::IsMember({"seq-attention", "seq-lasso", "omp", "greedy"}));
  select->add_option("--k", sel.k, "number of features to select")->required()->check(CLI::NonNegativeNumber);
  select->add_option("--scheme", sel.scheme, "softmax | l1 | l2 | l1_normalized | l2_normalized | none")
      ->check(CLI::IsMember({"softmax", "l1", "l2", "l1_normalized", "l2_normalized", "none"}));
  select->add_option("--batch-per-round", sel.batch_per_round, "features added per round")->check(CLI::PositiveNumber);
  select->add_option("--epochs-per-round", sel.epochs_per_round, "epochs per round (0: spread --epochs)")
      ->check(CLI::NonNegativeNumber);
  select->add_option("--lasso-lambda", sel.lasso_lambda, "fixed lambda for seq-lasso (default: exact critical)");
  select->add_flag("--one-pass", sel.one_pass, "each round trains once over its own shard of the examples");
  select->add_flag("--warm-start", sel.warm_start, "carry model parameters across rounds");
  select->add_option("--out", sel.out, "output root directory");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "retrain on a trace's features and report holdout metrics");
  add_data_options(evaluate, ev.data);
  add_train_options(evaluate, ev.train);
  evaluate->add_option("--trace", ev.trace_path, "trace.json from select")->required();
  evaluate->add_option("--trials", ev.trials, "holdout repetitions")->check(CLI::PositiveNumber);
  evaluate->add_option("--holdout", ev.holdout, "validation fraction")->check(CLI::Range(0.01, 0.99));
  evaluate->add_option("--out", ev.out, "output root directory");

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "run a certification suite");
  verify->add_option("--suite", ver.suite, "theorem1 | theorem2 | lemma2 | hoff | qstar")
      ->required()
      ->check(CLI::IsMember({"theorem1", "theorem2", "lemma2", "hoff", "qstar"}));
  verify->add_option("--instances", ver.instances, "instance count (0: suite default)")->check(CLI::NonNegativeNumber);
  verify->add_option("--n", ver.n, "rows per instance")->check(CLI::PositiveNumber);
  verify->add_option("--d", ver.d, "columns per instance")->check(CLI::PositiveNumber);
  verify->add_option("--k", ver.k, "selection budget")->check(CLI::PositiveNumber);
  verify->add_option("--seed", ver.seed, "first instance seed");
  verify->add_option("--range", ver.range, "qstar grid half-width")->check(CLI::PositiveNumber);
  verify->add_option("--resolution", ver.resolution, "qstar grid points per axis")->check(CLI::Range(2, 1001));
  verify->add_flag("--optimization-path", ver.optimization_path, "theorem1: also train the objective by gradient descent");
  verify->add_option("--out", ver.out, "output root directory");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep-adaptivity", "vary features-per-round under a fixed epoch budget");
  add_data_options(sweep, sw.data);
  add_train_options(sweep, sw.train);
  sweep->add_option("--scheme", sw.scheme, "mask scheme")
      ->check(CLI::IsMember({"softmax", "l1", "l2", "l1_normalized", "l2_normalized", "none"}));
  sweep->add_option("--total-k", sw.total_k, "features to select")->check(CLI::PositiveNumber);
  sweep->add_option("--i-max", sw.i_max, "largest i (2^i features per round)")->check(CLI::Range(0, 30));
  sweep->add_option("--trials", sw.trials, "repetitions with derived seeds")->check(CLI::PositiveNumber);
  sweep->add_option("--holdout", sw.holdout, "validation fraction")->check(CLI::Range(0.01, 0.99));
  sweep->add_option("--out", sw.out, "output root directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*select) return cmd_select(sel);
    if (*evaluate) return cmd_evaluate(ev);
    if (*verify) return cmd_verify(ver);
    return cmd_sweep(sw);
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged at step " << e.step() << ": " << e.what() << '\n';
    return 1;
  } catch (const seqattn::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
