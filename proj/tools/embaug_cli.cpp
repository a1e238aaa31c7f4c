// embaug: train and evaluate sigmoid classifiers on pre-computed embeddings.
//
// Subcommands: gen, split, train, eval, sweep, experiment, report.
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "embaug/data_io.hpp"
#include "embaug/experiment.hpp"
#include "embaug/metrics.hpp"
#include "embaug/model.hpp"
#include "embaug/threshold.hpp"
#include "embaug/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace embaug;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

std::vector<ClassId> parse_class_list(const std::string& s) {
  std::vector<ClassId> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(static_cast<ClassId>(std::stoi(item)));
    } catch (const std::exception&) {
      throw ConfigError("invalid class index '" + item + "'");
    }
  }
  return out;
}

void print_summary(const EmbeddingDataset& ds, const std::string& label) {
  std::size_t none = 0;
  for (ClassId l : ds.labels) none += l == kNone;
  std::cout << label << ": n=" << ds.size() << " d=" << ds.dim() << " C=" << ds.num_classes()
            << " none=" << none << "\n";
}

PredictionSet predictions_for(const fs::path& model_path, const fs::path& data_path) {
  const MlpModel model = read_checkpoint(model_path);
  const EmbeddingDataset ds = read_dataset(data_path);
  if (static_cast<Eigen::Index>(ds.dim()) != model.input_dim() ||
      static_cast<Eigen::Index>(ds.num_classes()) != model.num_classes()) {
    throw DataError("dataset shape does not match the model");
  }
  return {predict(model, to_matrix(ds)), ds.labels};
}

struct GenArgs {
  SyntheticSpec spec;
  std::string out;
};

struct SplitArgs {
  std::string data, out, exclude;
  double train_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string train, val, out, method = "none", optimizer = "adam";
  TrainConfig cfg;
};

struct EvalArgs {
  std::string model, data, out;
  double threshold = 0.5;
  int bins = 10;
  double grid_step = 0.01;
};

struct ExperimentArgs {
  std::string manifest, out;
  int jobs = 0;
};

struct ReportArgs {
  std::string results, out;
};

int run_gen(const GenArgs& a) {
  const EmbeddingDataset ds = generate_synthetic(a.spec);
  const fs::path out = a.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_dataset(ds, out);
  write_text(out.string() + ".json", dataset_manifest(ds, "synthetic", a.spec.seed).dump(2) + "\n");
  print_summary(ds, out.string());
  return 0;
}

int run_split(const SplitArgs& a) {
  const EmbeddingDataset ds = read_dataset(a.data);
  SplitSpec spec{a.train_fraction, parse_class_list(a.exclude), a.seed};
  const SplitResult parts = split(ds, spec);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_dataset(parts.train, dir / "train.embd");
  write_dataset(parts.val, dir / "val.embd");
  write_text(dir / "train.embd.json", dataset_manifest(parts.train, a.data, a.seed).dump(2) + "\n");
  json val_manifest = dataset_manifest(parts.val, a.data, a.seed);
  val_manifest["excluded_classes"] = spec.excluded_classes;
  write_text(dir / "val.embd.json", val_manifest.dump(2) + "\n");
  write_text(dir / "val_original_labels.json", json(parts.val_original_labels).dump() + "\n");
  print_summary(parts.train, "train");
  print_summary(parts.val, "val");
  return 0;
}

int run_train(TrainArgs a) {
  a.cfg.augment.method = parse_augment_method(a.method);
  a.cfg.optimizer = parse_optimizer(a.optimizer);
  const EmbeddingDataset train_ds = read_dataset(a.train);
  const EmbeddingDataset val_ds = read_dataset(a.val);
  const TrainResult result = train(train_ds, val_ds, a.cfg);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_checkpoint(result.model, dir / "model.embm");
  const auto& c = a.cfg;
  json sidecar = {{"d", result.model.input_dim()},
                  {"C", result.model.num_classes()},
                  {"hidden_width", c.hidden_width},
                  {"dropout_p", c.dropout_p},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size},
                  {"lr_min", c.lr_min},
                  {"lr_max", c.lr_max},
                  {"cycle_epochs", c.cycle_epochs},
                  {"weight_decay", c.weight_decay},
                  {"snapshot_every", c.snapshot_every},
                  {"seed", c.seed},
                  {"optimizer", to_string(c.optimizer)},
                  {"augment", {{"method", to_string(c.augment.method)},
                               {"alpha", c.augment.alpha},
                               {"label_softness", c.augment.label_softness},
                               {"seed", c.augment.seed}}}};
  write_text(dir / "model.embm.json", sidecar.dump(2) + "\n");
  write_text(dir / "history.csv", history_csv(result.history));
  std::cout << "trained " << c.epochs << " epochs; checkpoint " << (dir / "model.embm").string() << "\n";
  if (!result.history.records.empty()) {
    const auto& last = result.history.records.back();
    std::cout << "final validation AUROC " << last.auroc << ", AUPR " << last.aupr << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  const PredictionSet p = predictions_for(a.model, a.data);
  const Evaluation e = evaluate(p, a.grid_step, a.bins);
  json out = to_json(e);
  out.erase("sweep");
  out["threshold"] = a.threshold;
  out["accuracy_at_threshold"] = to_json(accuracy_triplet(apply_threshold(p, a.threshold), p));
  const fs::path dir = a.out;
  write_text(dir / "metrics.json", out.dump(2) + "\n");
  std::cout << "AUROC " << e.auroc.weighted_average << "  AUPR " << e.aupr.weighted_average << "\n";
  return 0;
}

int run_sweep(const EvalArgs& a) {
  const PredictionSet p = predictions_for(a.model, a.data);
  const ThresholdSweep s = sweep(p, a.grid_step);
  const fs::path dir = a.out;
  write_text(dir / "sweep.csv", sweep_csv(s));
  json th = json::object();
  const bool has_none = std::find(p.labels.begin(), p.labels.end(), kNone) != p.labels.end();
  if (has_none) {
    const auto inter = heuristic_intersection(s);
    th["intersection"] = {{"threshold", inter.threshold}, {"crossed", inter.crossed}};
    const auto ratio = heuristic_ratio(s);
    th["ratio"] = {{"threshold", ratio.threshold},
                   {"objective", std::isinf(ratio.objective) ? json("inf") : json(ratio.objective)}};
    std::cout << "intersection threshold " << inter.threshold << (inter.crossed ? "" : " (no crossing)")
              << ", ratio threshold " << ratio.threshold << "\n";
  } else {
    std::cout << "no \"none\" examples; heuristics skipped\n";
  }
  th["monotone"] = sweep_is_monotone(s);
  write_text(dir / "thresholds.json", th.dump(2) + "\n");
  return 0;
}

int run_experiment_cmd(const ExperimentArgs& a) {
  ExperimentManifest m = load_manifest(a.manifest);
  if (!a.out.empty()) m.output_dir = a.out;
  if (a.jobs > 0) m.jobs = a.jobs;
  const json agg = run_experiment(m);
  for (const auto& [name, v] : agg.at("variants").items()) {
    const json& metrics = v.at("metrics");
    std::cout << name << ": " << v.at("trials_ok") << "/" << v.at("trials_total") << " trials ok";
    if (metrics.contains("auroc")) std::cout << ", AUROC " << metrics.at("auroc").at("mean");
    if (metrics.contains("aupr")) std::cout << ", AUPR " << metrics.at("aupr").at("mean");
    std::cout << "\n";
  }
  std::cout << "results in " << m.output_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-augmentation classifier toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic EMBD dataset");
  gen_cmd->add_option("--classes", gen.spec.n_classes, "Number of classes")->default_val(20);
  gen_cmd->add_option("--per-class", gen.spec.n_per_class, "Examples per class")->default_val(100);
  gen_cmd->add_option("--dim", gen.spec.d, "Embedding dimension")->default_val(64);
  gen_cmd->add_option("--prototype-scale", gen.spec.prototype_scale)->default_val(1.0);
  gen_cmd->add_option("--noise-scale", gen.spec.noise_scale)->default_val(0.3);
  gen_cmd->add_option("--seed", gen.spec.seed)->default_val(0);
  gen_cmd->add_option("--out", gen.out, "Output .embd path")->required();

  SplitArgs sp;
  auto* split_cmd = app.add_subcommand("split", "Split a dataset, excluding classes as \"none\"");
  split_cmd->add_option("--data", sp.data)->required();
  split_cmd->add_option("--train-fraction", sp.train_fraction)->default_val(0.1);
  split_cmd->add_option("--exclude", sp.exclude, "Comma-separated class indices");
  split_cmd->add_option("--seed", sp.seed)->default_val(0);
  split_cmd->add_option("--out", sp.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  train_cmd->add_option("--train", tr.train)->required();
  train_cmd->add_option("--val", tr.val)->required();
  train_cmd->add_option("--epochs", tr.cfg.epochs)->default_val(576);
  train_cmd->add_option("--batch-size", tr.cfg.batch_size)->default_val(128);
  train_cmd->add_option("--lr-min", tr.cfg.lr_min)->default_val(0.0003);
  train_cmd->add_option("--lr-max", tr.cfg.lr_max)->default_val(0.003);
  train_cmd->add_option("--cycle-epochs", tr.cfg.cycle_epochs)->default_val(12);
  train_cmd->add_option("--weight-decay", tr.cfg.weight_decay)->default_val(0.0001);
  train_cmd->add_option("--optimizer", tr.optimizer, "adam | sgd")->default_val("adam");
  train_cmd->add_option("--method", tr.method, "none | e_mixup | e_stitchup")->default_val("none");
  train_cmd->add_option("--alpha", tr.cfg.augment.alpha)->default_val(0.4);
  train_cmd->add_option("--label-softness", tr.cfg.augment.label_softness)->default_val(0.1);
  train_cmd->add_option("--augment-seed", tr.cfg.augment.seed)->default_val(1);
  train_cmd->add_option("--snapshot-every", tr.cfg.snapshot_every)->default_val(12);
  train_cmd->add_option("--hidden-width", tr.cfg.hidden_width)->default_val(250);
  train_cmd->add_option("--dropout", tr.cfg.dropout_p)->default_val(0.3);
  train_cmd->add_option("--seed", tr.cfg.seed)->default_val(0);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--threshold", ev.threshold)->default_val(0.5);
  eval_cmd->add_option("--bins", ev.bins)->default_val(10);
  eval_cmd->add_option("--grid-step", ev.grid_step)->default_val(0.01);
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  EvalArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep confidence thresholds and pick one");
  sweep_cmd->add_option("--model", sw.model)->required();
  sweep_cmd->add_option("--data", sw.data)->required();
  sweep_cmd->add_option("--grid-step", sw.grid_step)->default_val(0.01);
  sweep_cmd->add_option("--out", sw.out, "Output directory")->required();

  ExperimentArgs ex;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a multi-trial experiment from a manifest");
  exp_cmd->add_option("--manifest", ex.manifest)->required();
  exp_cmd->add_option("--out", ex.out, "Override the manifest output directory");
  exp_cmd->add_option("--jobs", ex.jobs, "Concurrent trials");

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "Emit plot-ready series from experiment results");
  report_cmd->add_option("--results", rp.results)->required();
  report_cmd->add_option("--out", rp.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*split_cmd) return run_split(sp);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*sweep_cmd) return run_sweep(sw);
    if (*exp_cmd) return run_experiment_cmd(ex);
    if (*report_cmd) {
      write_report(rp.results, rp.out);
      std::cout << "report written to " << rp.out << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
