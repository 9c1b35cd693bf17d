// flowood: feasibility scoring for assembly embeddings with normalizing
// flows. One binary, subcommand per pipeline stage; every run drops a
// manifest with the resolved configuration next to its outputs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowood/checkpoint.hpp"
#include "flowood/dataset.hpp"
#include "flowood/errors.hpp"
#include "flowood/evaluator.hpp"
#include "flowood/ocsvm.hpp"
#include "flowood/threading.hpp"
#include "flowood/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace flowood;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw usage_error(std::string(what) + " file not found: " + path);
}

fs::path ensure_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw usage_error("cannot create output directory: " + dir);
  return p;
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    const json& inputs, const json& options,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["tool"] = "flowood";
  m["tool_version"] = kToolVersion;
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["options"] = options;
  m["outputs"] = outputs;
  m["timestamp"] = iso_timestamp();
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw usage_error("cannot write manifest in " + dir.string());
  out << m.dump(2) << "\n";
}

void write_json_file(const fs::path& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write " + path.string());
  out << value.dump(2) << "\n";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ThreadsOption {
  std::size_t threads = 0;
  void apply() const { set_max_threads(threads); }
  void add_flag(CLI::App* cmd) {
    cmd->add_option("--threads", threads, "worker thread cap (0 = available parallelism)");
  }
};

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_synth(const SynthArgs& args) {
  const fs::path dir = ensure_out_dir(args.out_dir);
  const SplitResult splits = synth_benchmark(args.spec, args.seed);
  save_dataset(splits.train, (dir / "train.csv").string());
  save_dataset(splits.val, (dir / "val.csv").string());
  save_dataset(splits.test, (dir / "test.csv").string());

  json options = {{"dim", args.spec.dim},
                  {"n_id", args.spec.n_id},
                  {"n_ood", args.spec.n_ood},
                  {"components", args.spec.components},
                  {"mean_radius", args.spec.mean_radius},
                  {"sigma_max", args.spec.sigma_max},
                  {"ood_shift", args.spec.ood_shift},
                  {"cov_inflation", args.spec.cov_inflation},
                  {"val_frac", args.spec.val_frac},
                  {"test_frac", args.spec.test_frac},
                  {"dropped_infeasible", splits.dropped_infeasible}};
  write_manifest(dir, "synth", args.seed, json::object(), options,
                 {"train.csv", "val.csv", "test.csv"});
  std::cout << "synth: train=" << splits.train.size() << " val=" << splits.val.size()
            << " test=" << splits.test.size()
            << " dropped_infeasible=" << splits.dropped_infeasible << "\n";
  return 0;
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
  TrainConfig config;
  std::string base = "gaussian";
  std::string train_path;
  std::string val_path;
  std::string out_dir;
  ThreadsOption threads;
  bool quiet = false;
};

void write_train_report(const TrainReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write " + path.string());
  out << "epoch,train_nll,val_metric,seconds\n";
  for (std::size_t e = 0; e < report.history.size(); ++e) {
    const auto& rec = report.history[e];
    out << e << ',' << format_double(rec.train_nll) << ',';
    if (std::isfinite(rec.val_metric)) out << format_double(rec.val_metric);
    out << ',' << format_double(rec.seconds) << "\n";
  }
}

int run_train(TrainArgs& args) {
  args.threads.apply();
  require_file(args.train_path, "training");
  const LabeledDataset train_set = load_dataset(args.train_path);
  LabeledDataset val_set;
  if (!args.val_path.empty()) {
    require_file(args.val_path, "validation");
    val_set = load_dataset(args.val_path);
  }
  args.config.base_kind = args.base == "resampling" ? BaseKind::resampling : BaseKind::gaussian;
  const fs::path dir = ensure_out_dir(args.out_dir);
  if (args.config.checkpoint_every > 0) args.config.checkpoint_dir = dir.string();

  TrainResult result = train(args.config, train_set, val_set);
  const fs::path model_path = dir / "model.ckpt";
  save_checkpoint(result.model, model_path.string());
  result.report.checkpoint_path = model_path.string();
  write_train_report(result.report, dir / "train_report.csv");

  json summary;
  summary["epochs_run"] = result.report.history.size();
  summary["val_criterion"] = result.report.val_criterion;
  if (result.report.best_epoch != kNoEpoch) summary["best_epoch"] = result.report.best_epoch;
  if (!result.report.history.empty()) {
    summary["final_train_nll"] = result.report.history.back().train_nll;
    if (result.report.best_epoch != kNoEpoch &&
        std::isfinite(result.report.history[result.report.best_epoch].val_metric)) {
      summary["best_val_metric"] = result.report.history[result.report.best_epoch].val_metric;
    }
  }
  summary["checkpoint"] = "model.ckpt";
  write_json_file(dir / "train_summary.json", summary);

  if (!args.quiet) {
    for (std::size_t e = 0; e < result.report.history.size(); ++e) {
      const auto& rec = result.report.history[e];
      std::cerr << "epoch " << e << " nll=" << rec.train_nll;
      if (std::isfinite(rec.val_metric))
        std::cerr << " val_" << result.report.val_criterion << "=" << rec.val_metric;
      std::cerr << " (" << rec.seconds << "s)\n";
    }
  }

  json options = {{"batch_size", args.config.batch_size},
                  {"learning_rate", args.config.learning_rate},
                  {"epochs", args.config.epochs},
                  {"num_coupling_layers", args.config.num_coupling_layers},
                  {"conditioner_depth", args.config.conditioner_depth},
                  {"conditioner_width", args.config.conditioner_width},
                  {"base", args.base},
                  {"scale_clamp", args.config.scale_clamp},
                  {"checkpoint_every", args.config.checkpoint_every},
                  {"early_stop_patience", args.config.early_stop_patience},
                  {"resampling_trunc", args.config.resampling_trunc},
                  {"resampling_ema_decay", args.config.resampling_ema_decay},
                  {"resampling_mc", args.config.resampling_mc},
                  {"threads", args.threads.threads}};
  json inputs = {{"train", args.train_path}};
  if (!args.val_path.empty()) inputs["val"] = args.val_path;
  write_manifest(dir, "train", args.config.seed, inputs, options,
                 {"model.ckpt", "train_report.csv", "train_summary.json"});
  std::cout << "train: epochs_run=" << result.report.history.size()
            << " checkpoint=" << model_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- score ---

struct ScoreArgs {
  std::string model_path;
  std::string data_path;
  std::string out_dir;
  ThreadsOption threads;
};

int run_score(const ScoreArgs& args) {
  args.threads.apply();
  require_file(args.model_path, "model");
  require_file(args.data_path, "data");
  const FlowModel model = load_checkpoint(args.model_path);
  const LabeledDataset data = load_dataset(args.data_path);
  const fs::path dir = ensure_out_dir(args.out_dir);
  const ScoreReport report = score_dataset(model, data, checkpoint_id(args.model_path));
  write_scores_csv(report, (dir / "scores.csv").string());

  json options = {{"model_id", report.model_id}, {"threads", args.threads.threads}};
  write_manifest(dir, "score", 0, {{"model", args.model_path}, {"data", args.data_path}}, options,
                 {"scores.csv"});
  std::cout << "score: rows=" << report.rows.size() << " model_id=" << report.model_id << "\n";
  return 0;
}

// ------------------------------------------------------------ threshold ---

struct ThresholdArgs {
  std::string scores_path;
  std::string out_dir;
};

int run_threshold(const ThresholdArgs& args) {
  require_file(args.scores_path, "scores");
  const LoadedScores scores = load_scores_csv(args.scores_path);
  const ThresholdResult result = select_threshold(scores.totals, scores.labels);
  const fs::path dir = ensure_out_dir(args.out_dir);

  std::size_t n_pos = 0, n_neg = 0;
  for (Label l : scores.labels) {
    if (l == Label::feasible) ++n_pos;
    else if (l == Label::infeasible) ++n_neg;
  }
  json out = {{"delta", result.delta},   {"youden_j", result.youden_j}, {"tpr", result.tpr},
              {"fpr", result.fpr},       {"n_feasible", n_pos},         {"n_infeasible", n_neg}};
  write_json_file(dir / "threshold.json", out);
  write_manifest(dir, "threshold", 0, {{"scores", args.scores_path}}, json::object(),
                 {"threshold.json"});
  std::cout << "threshold: delta=" << format_double(result.delta)
            << " youden_j=" << format_double(result.youden_j) << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ---

struct EvalArgs {
  std::string scores_path;
  std::string threshold_path;
  double delta = std::numeric_limits<double>::quiet_NaN();
  std::string out_dir;
};

int run_eval(const EvalArgs& args) {
  require_file(args.scores_path, "scores");
  const LoadedScores scores = load_scores_csv(args.scores_path);

  double delta = args.delta;
  if (!args.threshold_path.empty()) {
    require_file(args.threshold_path, "threshold");
    std::ifstream in(args.threshold_path);
    json t;
    try {
      in >> t;
      delta = t.at("delta").get<double>();
    } catch (const std::exception& e) {
      throw data_error("cannot parse threshold file " + args.threshold_path + ": " + e.what());
    }
  }

  const RocResult roc = roc_curve(scores.totals, scores.labels);
  const fs::path dir = ensure_out_dir(args.out_dir);
  write_roc_csv(roc, (dir / "roc.csv").string());

  std::size_t n_pos = 0, n_neg = 0;
  for (Label l : scores.labels) {
    if (l == Label::feasible) ++n_pos;
    else if (l == Label::infeasible) ++n_neg;
  }
  json metrics = {{"auroc", roc.auroc}, {"n_feasible", n_pos}, {"n_infeasible", n_neg}};
  std::vector<std::string> outputs = {"metrics.json", "roc.csv"};

  if (std::isfinite(delta)) {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::ofstream verdicts(dir / "verdicts.csv", std::ios::binary);
    verdicts << "id,label,total,verdict\n";
    for (std::size_t i = 0; i < scores.totals.size(); ++i) {
      const Label verdict = classify(scores.totals[i], delta);
      verdicts << scores.ids[i] << ',' << label_token(scores.labels[i]) << ','
               << format_double(scores.totals[i]) << ',' << label_token(verdict) << "\n";
      if (scores.labels[i] == Label::feasible) {
        (verdict == Label::feasible ? tp : fn) += 1;
      } else if (scores.labels[i] == Label::infeasible) {
        (verdict == Label::infeasible ? tn : fp) += 1;
      }
    }
    metrics["delta"] = delta;
    metrics["tp"] = tp;
    metrics["fp"] = fp;
    metrics["tn"] = tn;
    metrics["fn"] = fn;
    metrics["tpr"] = n_pos ? static_cast<double>(tp) / static_cast<double>(n_pos) : 0.0;
    metrics["fpr"] = n_neg ? static_cast<double>(fp) / static_cast<double>(n_neg) : 0.0;
    outputs.push_back("verdicts.csv");
  }
  write_json_file(dir / "metrics.json", metrics);

  json inputs = {{"scores", args.scores_path}};
  if (!args.threshold_path.empty()) inputs["threshold"] = args.threshold_path;
  json options = json::object();
  if (std::isfinite(delta)) options["delta"] = delta;
  write_manifest(dir, "eval", 0, inputs, options, outputs);
  std::cout << "eval: auroc=" << format_double(roc.auroc) << "\n";
  return 0;
}

// ------------------------------------------------------------- baseline ---

struct BaselineArgs {
  std::string train_path;
  std::string test_path;
  OcSvmFitOptions options;
  bool save_model = false;
  std::string out_dir;
  ThreadsOption threads;
};

int run_baseline(const BaselineArgs& args) {
  args.threads.apply();
  require_file(args.train_path, "training");
  require_file(args.test_path, "test");
  const LabeledDataset train_set = load_dataset(args.train_path);
  const LabeledDataset test_set = load_dataset(args.test_path);
  if (train_set.count(Label::infeasible) > 0)
    throw data_error("baseline: training set contains infeasible rows");
  if (test_set.dim != train_set.dim)
    throw data_error("baseline: test set dim does not match training set dim");

  const OcSvmModel model = ocsvm_fit(train_set.values, train_set.size(), train_set.dim,
                                     args.options);

  std::vector<double> scores(test_set.size());
  parallel_for(test_set.size(),
               [&](std::size_t i) { scores[i] = ocsvm_score(model, test_set.row(i)); });

  const fs::path dir = ensure_out_dir(args.out_dir);
  {
    std::ofstream out(dir / "baseline_scores.csv", std::ios::binary);
    if (!out) throw usage_error("cannot write baseline scores");
    out << "id,label,score\n";
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      out << test_set.ids[i] << ',' << label_token(test_set.labels[i]) << ','
          << format_double(scores[i]) << "\n";
    }
  }

  json metrics = {{"n_support", model.n_support()},
                  {"gamma", model.gamma},
                  {"nu", model.nu},
                  {"rho", model.rho}};
  if (test_set.has_both_classes()) metrics["auroc"] = auroc(scores, test_set.labels);
  write_json_file(dir / "metrics.json", metrics);

  std::vector<std::string> outputs = {"baseline_scores.csv", "metrics.json"};
  if (args.save_model) {
    save_ocsvm_checkpoint(model, (dir / "ocsvm.ckpt").string());
    outputs.push_back("ocsvm.ckpt");
  }
  json options = {{"nu", args.options.nu},
                  {"gamma", args.options.gamma},
                  {"tol", args.options.tol},
                  {"threads", args.threads.threads}};
  write_manifest(dir, "baseline", 0, {{"train", args.train_path}, {"test", args.test_path}},
                 options, outputs);
  if (metrics.contains("auroc"))
    std::cout << "baseline: auroc=" << format_double(metrics["auroc"].get<double>()) << "\n";
  else
    std::cout << "baseline: scored " << test_set.size() << " rows\n";
  return 0;
}

// -------------------------------------------------------------- inspect ---

struct InspectArgs {
  std::string model_path;
  std::string data_path;
  std::string out_dir;
  ThreadsOption threads;
};

int run_inspect(const InspectArgs& args) {
  args.threads.apply();
  require_file(args.model_path, "model");
  require_file(args.data_path, "data");
  const FlowModel model = load_checkpoint(args.model_path);
  const LabeledDataset data = load_dataset(args.data_path);
  const fs::path dir = ensure_out_dir(args.out_dir);

  const ScoreReport report = score_dataset(model, data, checkpoint_id(args.model_path));
  write_latents_csv(report, (dir / "latents.csv").string());

  Matrix inputs(data.size(), data.dim);
  std::copy(data.values.begin(), data.values.end(), inputs.values.begin());
  write_similarity_csv(cosine_similarity_matrix(inputs), data.ids,
                       (dir / "similarity_input.csv").string());
  write_similarity_csv(cosine_similarity_matrix(report.latents), data.ids,
                       (dir / "similarity_latent.csv").string());

  write_manifest(dir, "inspect", 0, {{"model", args.model_path}, {"data", args.data_path}},
                 {{"model_id", report.model_id}},
                 {"latents.csv", "similarity_input.csv", "similarity_latent.csv"});
  std::cout << "inspect: rows=" << data.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"density-based feasibility scoring with normalizing flows"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("flowood ") + kToolVersion);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic ID/OOD benchmark");
  synth->add_option("--dim", synth_args.spec.dim, "embedding dimension");
  synth->add_option("--n-id", synth_args.spec.n_id, "in-distribution rows");
  synth->add_option("--n-ood", synth_args.spec.n_ood, "out-of-distribution rows");
  synth->add_option("--components", synth_args.spec.components, "mixture components");
  synth->add_option("--mean-radius", synth_args.spec.mean_radius, "component mean ball radius");
  synth->add_option("--sigma-max", synth_args.spec.sigma_max, "max component sigma");
  synth->add_option("--ood-shift", synth_args.spec.ood_shift, "OOD mean shift in sigmas");
  synth->add_option("--cov-inflate", synth_args.spec.cov_inflation, "OOD covariance inflation");
  synth->add_option("--val-frac", synth_args.spec.val_frac, "validation fraction");
  synth->add_option("--test-frac", synth_args.spec.test_frac, "test fraction");
  synth->add_option("--seed", synth_args.seed, "random seed");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "fit a flow on feasible embeddings");
  train_cmd->set_config("--config", "", "key=value config file (flags override)");
  train_cmd->add_option("--train", train_args.train_path, "training CSV")->required();
  train_cmd->add_option("--val", train_args.val_path, "validation CSV");
  train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--batch-size", train_args.config.batch_size, "mini-batch size");
  train_cmd->add_option("--lr", train_args.config.learning_rate, "Adam learning rate");
  train_cmd->add_option("--epochs", train_args.config.epochs, "training epochs");
  train_cmd->add_option("--layers", train_args.config.num_coupling_layers, "coupling layers");
  train_cmd->add_option("--conditioner-depth", train_args.config.conditioner_depth,
                        "dense layers per conditioner");
  train_cmd->add_option("--conditioner-width", train_args.config.conditioner_width,
                        "hidden channels per conditioner layer");
  train_cmd->add_option("--base", train_args.base, "base distribution")
      ->check(CLI::IsMember({"gaussian", "resampling"}));
  train_cmd->add_option("--scale-clamp", train_args.config.scale_clamp, "scale clamp");
  train_cmd->add_option("--checkpoint-every", train_args.config.checkpoint_every,
                        "periodic checkpoint interval in epochs (0 = off)");
  train_cmd->add_option("--patience", train_args.config.early_stop_patience,
                        "early stopping patience (0 = off)");
  train_cmd->add_option("--trunc", train_args.config.resampling_trunc,
                        "resampling truncation count");
  train_cmd->add_option("--ema-decay", train_args.config.resampling_ema_decay,
                        "resampling Z EMA decay");
  train_cmd->add_option("--mc-samples", train_args.config.resampling_mc,
                        "Z update Monte-Carlo samples per step");
  train_cmd->add_option("--seed", train_args.config.seed, "random seed");
  train_cmd->add_flag("--quiet", train_args.quiet, "suppress per-epoch progress");
  train_args.threads.add_flag(train_cmd);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "score a dataset with a trained flow");
  score->add_option("--model", score_args.model_path, "model checkpoint")->required();
  score->add_option("--data", score_args.data_path, "dataset CSV")->required();
  score->add_option("--out", score_args.out_dir, "output directory")->required();
  score_args.threads.add_flag(score);

  ThresholdArgs threshold_args;
  auto* threshold = app.add_subcommand("threshold", "select delta on labeled scores");
  threshold->add_option("--scores", threshold_args.scores_path, "scores CSV")->required();
  threshold->add_option("--out", threshold_args.out_dir, "output directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "ROC/AUROC metrics from labeled scores");
  eval->add_option("--scores", eval_args.scores_path, "scores CSV")->required();
  eval->add_option("--delta", eval_args.delta, "decision threshold");
  eval->add_option("--threshold-file", eval_args.threshold_path, "threshold.json from `threshold`");
  eval->add_option("--out", eval_args.out_dir, "output directory")->required();

  BaselineArgs baseline_args;
  auto* baseline = app.add_subcommand("baseline", "one-class SVM baseline");
  baseline->add_option("--train", baseline_args.train_path, "training CSV")->required();
  baseline->add_option("--test", baseline_args.test_path, "test CSV")->required();
  baseline->add_option("--nu", baseline_args.options.nu, "nu parameter");
  baseline->add_option("--gamma", baseline_args.options.gamma, "RBF gamma (0 = heuristic)");
  baseline->add_option("--tol", baseline_args.options.tol, "KKT tolerance");
  baseline->add_flag("--save-model", baseline_args.save_model, "write ocsvm.ckpt");
  baseline->add_option("--out", baseline_args.out_dir, "output directory")->required();
  baseline_args.threads.add_flag(baseline);

  InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect", "export latents and similarity matrices");
  inspect->add_option("--model", inspect_args.model_path, "model checkpoint")->required();
  inspect->add_option("--data", inspect_args.data_path, "dataset CSV")->required();
  inspect->add_option("--out", inspect_args.out_dir, "output directory")->required();
  inspect_args.threads.add_flag(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error category=usage message=\"" << e.what() << "\"\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (score->parsed()) return run_score(score_args);
    if (threshold->parsed()) return run_threshold(threshold_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (baseline->parsed()) return run_baseline(baseline_args);
    if (inspect->parsed()) return run_inspect(inspect_args);
  } catch (const Error& e) {
    std::cerr << "error category=" << e.category_name() << " message=\"" << e.what() << "\"\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error category=numeric message=\"" << e.what() << "\"\n";
    return 4;
  }
  return 0;
}
