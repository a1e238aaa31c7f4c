#include "embaug/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace embaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

std::optional<double> as_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw DataError("unexpected string where a number was expected: " + s);
  }
  return j.get<double>();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("manifest is missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void ExperimentManifest::validate() const {
  if (dataset_path.has_value() == synthetic.has_value()) {
    throw ConfigError("manifest needs exactly one of dataset.path or dataset.synthetic");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (n_excluded && *n_excluded < 0) throw ConfigError("n_excluded must be non-negative");
  train.validate();
  if (variants.empty()) throw ConfigError("manifest lists no variants");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("variant name must not be empty");
    if (!names.insert(v.name).second) throw ConfigError("duplicate variant name '" + v.name + "'");
    v.augment.validate();
  }
  if (!control.empty() && !names.count(control)) {
    throw ConfigError("control variant '" + control + "' is not defined");
  }
  if (trial_seeds.empty()) throw ConfigError("manifest lists no trial seeds");
  if (std::set<std::uint64_t>(trial_seeds.begin(), trial_seeds.end()).size() != trial_seeds.size()) {
    throw ConfigError("trial seeds must be distinct");
  }
  threshold_grid(grid_step);
  if (bins < 2) throw ConfigError("bins must be at least 2");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (jobs < 1) throw ConfigError("jobs must be positive");
}

ExperimentManifest parse_manifest(const json& j, const fs::path& base_dir) {
  ExperimentManifest m;
  try {
    const json& dataset = require(j, "dataset");
    if (dataset.contains("path")) {
      fs::path p = dataset.at("path").get<std::string>();
      m.dataset_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (dataset.contains("synthetic")) {
      const json& s = dataset.at("synthetic");
      SyntheticSpec spec;
      spec.n_classes = get_or(s, "n_classes", spec.n_classes);
      spec.n_per_class = get_or(s, "n_per_class", spec.n_per_class);
      spec.d = get_or(s, "d", spec.d);
      spec.prototype_scale = get_or(s, "prototype_scale", spec.prototype_scale);
      spec.noise_scale = get_or(s, "noise_scale", spec.noise_scale);
      spec.seed = get_or<std::uint64_t>(s, "seed", spec.seed);
      m.synthetic = spec;
    }

    const json& sp = require(j, "split");
    m.train_fraction = require(sp, "train_fraction").get<double>();
    if (sp.contains("n_excluded")) m.n_excluded = sp.at("n_excluded").get<int>();
    if (sp.contains("excluded_classes")) m.excluded_classes = sp.at("excluded_classes").get<std::vector<ClassId>>();

    const json& t = require(j, "train");
    TrainConfig& tc = m.train;
    tc.epochs = get_or(t, "epochs", tc.epochs);
    tc.batch_size = get_or(t, "batch_size", tc.batch_size);
    tc.lr_min = get_or(t, "lr_min", tc.lr_min);
    tc.lr_max = get_or(t, "lr_max", tc.lr_max);
    tc.cycle_epochs = get_or(t, "cycle_epochs", tc.cycle_epochs);
    tc.weight_decay = get_or(t, "weight_decay", tc.weight_decay);
    tc.snapshot_every = get_or(t, "snapshot_every", tc.snapshot_every);
    tc.hidden_width = get_or(t, "hidden_width", tc.hidden_width);
    tc.dropout_p = get_or(t, "dropout_p", tc.dropout_p);
    tc.reference_threshold = get_or(t, "reference_threshold", tc.reference_threshold);
    tc.optimizer = parse_optimizer(get_or<std::string>(t, "optimizer", to_string(tc.optimizer)));

    for (const json& v : require(j, "variants")) {
      Variant var;
      var.name = require(v, "name").get<std::string>();
      var.augment.method = parse_augment_method(get_or<std::string>(v, "method", "none"));
      var.augment.alpha = get_or(v, "alpha", var.augment.alpha);
      var.augment.label_softness = get_or(v, "label_softness", var.augment.label_softness);
      m.variants.push_back(var);
    }
    m.control = get_or<std::string>(j, "control", "");
    m.trial_seeds = require(j, "trial_seeds").get<std::vector<std::uint64_t>>();
    m.grid_step = get_or(j, "grid_step", m.grid_step);
    m.bins = get_or(j, "bins", m.bins);
    fs::path out = require(j, "output_dir").get<std::string>();
    m.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    m.jobs = get_or(j, "jobs", m.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

ExperimentManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_manifest(j, path.parent_path());
}

json manifest_to_json(const ExperimentManifest& m) {
  json dataset;
  if (m.dataset_path) dataset["path"] = m.dataset_path->string();
  if (m.synthetic) {
    const auto& s = *m.synthetic;
    dataset["synthetic"] = {{"n_classes", s.n_classes}, {"n_per_class", s.n_per_class}, {"d", s.d},
                            {"prototype_scale", s.prototype_scale}, {"noise_scale", s.noise_scale},
                            {"seed", s.seed}};
  }
  json split = {{"train_fraction", m.train_fraction}};
  if (m.n_excluded) {
    split["n_excluded"] = *m.n_excluded;
  } else {
    split["excluded_classes"] = m.excluded_classes;
  }
  const auto& t = m.train;
  json train = {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr_min", t.lr_min},
                {"lr_max", t.lr_max}, {"cycle_epochs", t.cycle_epochs}, {"weight_decay", t.weight_decay},
                {"snapshot_every", t.snapshot_every}, {"hidden_width", t.hidden_width},
                {"dropout_p", t.dropout_p}, {"reference_threshold", t.reference_threshold},
                {"optimizer", to_string(t.optimizer)}};
  json variants = json::array();
  for (const auto& v : m.variants) {
    variants.push_back({{"name", v.name}, {"method", to_string(v.augment.method)},
                        {"alpha", v.augment.alpha}, {"label_softness", v.augment.label_softness}});
  }
  return {{"dataset", dataset}, {"split", split}, {"train", train}, {"variants", variants},
          {"control", m.control}, {"trial_seeds", m.trial_seeds}, {"grid_step", m.grid_step},
          {"bins", m.bins}, {"output_dir", m.output_dir.string()}, {"jobs", m.jobs}};
}

bool sweep_is_monotone(const ThresholdSweep& s) {
  for (std::size_t k = 1; k < s.rows.size(); ++k) {
    const auto& prev = s.rows[k - 1].acc;
    const auto& cur = s.rows[k].acc;
    if (prev.none_acc && cur.none_acc && *cur.none_acc < *prev.none_acc) return false;
    if (prev.id_acc && cur.id_acc && *cur.id_acc > *prev.id_acc) return false;
  }
  return true;
}

Evaluation evaluate(const PredictionSet& p, double grid_step, int bins) {
  Evaluation e;
  e.auroc = roc_auc_ovr(p);
  e.aupr = pr_auc_ovr(p);
  e.reliability = reliability(p, bins);
  const auto non_empty = std::count_if(e.reliability.bins.begin(), e.reliability.bins.end(),
                                       [](const ReliabilityBin& b) { return b.count > 0; });
  if (non_empty >= 2) e.correlation = confidence_accuracy_correlation(e.reliability);
  e.per_example_correlation = per_example_confidence_correlation(p);
  e.histogram = confidence_histogram(p, bins);
  e.sweep = sweep(p, grid_step);
  e.sweep_monotone = sweep_is_monotone(e.sweep);
  const bool has_none = std::find(p.labels.begin(), p.labels.end(), kNone) != p.labels.end();
  if (has_none) {
    e.intersection = heuristic_intersection(e.sweep);
    e.at_intersection = accuracy_triplet(apply_threshold(p, e.intersection->threshold), p);
    try {
      e.ratio = heuristic_ratio(e.sweep);
      e.at_ratio = accuracy_triplet(apply_threshold(p, e.ratio->threshold), p);
    } catch (const DataError&) {
    }
  }
  return e;
}

json to_json(const Evaluation& e) {
  json sweep_rows = json::array();
  for (const auto& r : e.sweep.rows) {
    sweep_rows.push_back({{"threshold", r.threshold},
                          {"id_acc", opt(r.acc.id_acc)},
                          {"none_acc", opt(r.acc.none_acc)},
                          {"overall_acc", opt(r.acc.overall_acc)},
                          {"ratio_id", r.ratio_id ? number_or_inf(*r.ratio_id) : json(nullptr)},
                          {"ratio_none", r.ratio_none ? number_or_inf(*r.ratio_none) : json(nullptr)},
                          {"id_tp", r.id_tp}, {"id_fp", r.id_fp}, {"id_fn", r.id_fn},
                          {"none_tp", r.none_tp}, {"none_fp", r.none_fp}, {"none_fn", r.none_fn}});
  }
  std::size_t total = 0;
  for (auto c : e.histogram) total += c;
  json thresholds = json::object();
  if (e.intersection) {
    thresholds["intersection"] = {{"threshold", e.intersection->threshold},
                                  {"crossed", e.intersection->crossed},
                                  {"accuracy", to_json(e.at_intersection)}};
  }
  if (e.ratio) {
    thresholds["ratio"] = {{"threshold", e.ratio->threshold},
                           {"objective", number_or_inf(e.ratio->objective)},
                           {"accuracy", to_json(e.at_ratio)}};
  }
  return {{"auroc", to_json(e.auroc)},
          {"aupr", to_json(e.aupr)},
          {"reliability", to_json(e.reliability)},
          {"reliability_excludes_none_labels", true},
          {"confidence_accuracy_correlation", opt(e.correlation)},
          {"per_example_confidence_correlation", opt(e.per_example_correlation)},
          {"confidence_histogram", {{"counts", e.histogram},
                                    {"top_bin_fraction", total ? json(static_cast<double>(e.histogram.back()) /
                                                                      static_cast<double>(total))
                                                               : json(nullptr)}}},
          {"thresholds", thresholds},
          {"sweep_monotone", e.sweep_monotone},
          {"sweep", sweep_rows}};
}

std::vector<ClassId> draw_excluded_classes(std::size_t num_classes, int count, std::uint64_t seed) {
  if (count < 0 || static_cast<std::size_t>(count) >= num_classes) {
    throw ConfigError("cannot exclude " + std::to_string(count) + " of " + std::to_string(num_classes) + " classes");
  }
  std::vector<ClassId> classes(num_classes);
  std::iota(classes.begin(), classes.end(), ClassId{0});
  std::seed_seq seq{seed, std::uint64_t{0x6578636c}};
  Rng rng(seq);
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(static_cast<std::size_t>(count));
  std::sort(classes.begin(), classes.end());
  return classes;
}

namespace {

struct TrialOutput {
  json result;
  std::string history_csv;
  std::string sweep_csv;
  double seconds = 0.0;
};

// First snapshot epoch whose AUROC reaches `fraction` of the final one.
std::optional<int> convergence_epoch(const TrainingHistory& h, double fraction) {
  if (h.records.empty()) return std::nullopt;
  const double target = fraction * h.records.back().auroc;
  for (const auto& r : h.records) {
    if (r.auroc >= target) return r.epoch;
  }
  return std::nullopt;
}

json history_json(const TrainingHistory& h) {
  json rows = json::array();
  for (const auto& r : h.records) {
    rows.push_back({{"epoch", r.epoch}, {"loss", r.train_loss}, {"acc", opt(r.overall_acc)},
                    {"none_acc", opt(r.none_acc)}, {"auroc", r.auroc}, {"aupr", r.aupr}});
  }
  return rows;
}

TrialOutput run_trial(const ExperimentManifest& m, const EmbeddingDataset& ds, const Variant& variant,
                      std::size_t trial, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  TrialOutput out;
  json& r = out.result;
  r["variant"] = variant.name;
  r["trial"] = trial;
  r["seed"] = seed;
  try {
    SplitSpec spec;
    spec.train_fraction = m.train_fraction;
    spec.seed = seed;
    spec.excluded_classes = m.n_excluded ? draw_excluded_classes(ds.num_classes(), *m.n_excluded, seed)
                                         : m.excluded_classes;
    r["excluded_classes"] = spec.excluded_classes;
    const SplitResult parts = split(ds, spec);

    TrainConfig cfg = m.train;
    cfg.seed = seed;
    cfg.augment = variant.augment;
    cfg.augment.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    const TrainResult trained = train(parts.train, parts.val, cfg);

    const PredictionSet preds{predict(trained.model, to_matrix(parts.val)), parts.val.labels};
    const Evaluation eval = evaluate(preds, m.grid_step, m.bins);
    if (!eval.sweep_monotone) throw std::runtime_error("threshold sweep violates accuracy monotonicity");

    r["n_train"] = parts.train.size();
    r["n_val"] = parts.val.size();
    r["n_val_none"] = std::count(parts.val.labels.begin(), parts.val.labels.end(), kNone);
    r["evaluation"] = to_json(eval);
    r["history"] = history_json(trained.history);
    const auto conv = convergence_epoch(trained.history, 0.95);
    r["convergence_epoch_95"] = conv ? json(*conv) : json(nullptr);
    r["status"] = "ok";
    out.history_csv = history_csv(trained.history);
    out.sweep_csv = sweep_csv(eval.sweep);
  } catch (const std::exception& e) {
    r["status"] = "error";
    r["error"] = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Named scalar summaries extracted from a successful trial result.
std::map<std::string, std::optional<double>> trial_scalars(const json& r) {
  std::map<std::string, std::optional<double>> s;
  const json& e = r.at("evaluation");
  s["auroc"] = e.at("auroc").at("weighted_average").get<double>();
  s["aupr"] = e.at("aupr").at("weighted_average").get<double>();
  s["confidence_accuracy_correlation"] = as_opt(e.at("confidence_accuracy_correlation"));
  s["per_example_confidence_correlation"] = as_opt(e.at("per_example_confidence_correlation"));
  s["top_bin_fraction"] = as_opt(e.at("confidence_histogram").at("top_bin_fraction"));
  s["convergence_epoch_95"] = as_opt(r.at("convergence_epoch_95"));
  const json& th = e.at("thresholds");
  for (const char* h : {"intersection", "ratio"}) {
    if (!th.contains(h)) continue;
    const std::string prefix = h;
    s[prefix + "_threshold"] = th.at(h).at("threshold").get<double>();
    for (const char* k : {"id_acc", "none_acc", "overall_acc"}) {
      s[prefix + "_" + k] = as_opt(th.at(h).at("accuracy").at(k));
    }
  }
  return s;
}

json mean_std(const std::vector<double>& v) {
  if (v.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  json sd = nullptr;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return {{"mean", mean}, {"std", sd}, {"n", v.size()}};
}

json aggregate(const ExperimentManifest& m, const std::vector<std::vector<json>>& results) {
  json variants = json::object();
  // variant -> metric -> per-trial value (absent for failed trials)
  std::vector<std::map<std::string, std::vector<std::optional<double>>>> per_trial(m.variants.size());
  for (std::size_t v = 0; v < m.variants.size(); ++v) {
    std::size_t ok = 0;
    for (std::size_t t = 0; t < m.trial_seeds.size(); ++t) {
      const json& r = results[v][t];
      if (r.at("status") != "ok") continue;
      ++ok;
      for (const auto& [name, value] : trial_scalars(r)) {
        auto& column = per_trial[v][name];
        column.resize(m.trial_seeds.size());
        column[t] = value;
      }
    }
    json metrics = json::object();
    for (const auto& [name, column] : per_trial[v]) {
      std::vector<double> vals;
      for (const auto& x : column) if (x) vals.push_back(*x);
      metrics[name] = mean_std(vals);
    }
    variants[m.variants[v].name] = {{"trials_ok", ok}, {"trials_total", m.trial_seeds.size()},
                                    {"metrics", metrics}};
  }

  json deltas = json::object();
  if (!m.control.empty()) {
    const auto ctrl = static_cast<std::size_t>(
        std::find_if(m.variants.begin(), m.variants.end(), [&](const Variant& v) { return v.name == m.control; }) -
        m.variants.begin());
    for (std::size_t v = 0; v < m.variants.size(); ++v) {
      if (v == ctrl) continue;
      json dv = json::object();
      for (const auto& [name, column] : per_trial[v]) {
        const auto it = per_trial[ctrl].find(name);
        if (it == per_trial[ctrl].end()) continue;
        std::vector<double> paired, method_vals, control_vals;
        for (std::size_t t = 0; t < column.size() && t < it->second.size(); ++t) {
          if (!column[t] || !it->second[t]) continue;
          paired.push_back(*column[t] - *it->second[t]);
          method_vals.push_back(*column[t]);
          control_vals.push_back(*it->second[t]);
        }
        if (paired.empty()) continue;
        const auto mean_of = [](const std::vector<double>& x) {
          return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
        };
        const json spread = mean_std(paired);
        dv[name] = {{"delta", mean_of(method_vals) - mean_of(control_vals)},
                    {"paired_std", spread.at("std")},
                    {"paired", paired}};
      }
      deltas[m.variants[v].name] = dv;
    }
  }
  return {{"control", m.control}, {"variants", variants}, {"deltas_vs_control", deltas}};
}

}  // namespace

nlohmann::json run_experiment(const ExperimentManifest& m) {
  m.validate();
  const auto start = std::chrono::steady_clock::now();
  EmbeddingDataset ds;
  std::string source;
  if (m.dataset_path) {
    ds = read_dataset(*m.dataset_path);
    source = m.dataset_path->string();
  } else {
    ds = generate_synthetic(*m.synthetic);
    source = "synthetic";
  }

  fs::create_directories(m.output_dir);
  write_text(m.output_dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");

  const std::size_t n_var = m.variants.size();
  const std::size_t n_trial = m.trial_seeds.size();
  std::vector<TrialOutput> outputs(n_var * n_trial);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < outputs.size(); k = next++) {
      const std::size_t v = k / n_trial;
      const std::size_t t = k % n_trial;
      outputs[k] = run_trial(m, ds, m.variants[v], t, m.trial_seeds[t]);
    }
  };
  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(m.jobs), outputs.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::ostringstream log;
  std::vector<std::vector<json>> results(n_var);
  for (std::size_t v = 0; v < n_var; ++v) {
    const fs::path dir = m.output_dir / m.variants[v].name;
    for (std::size_t t = 0; t < n_trial; ++t) {
      const TrialOutput& o = outputs[v * n_trial + t];
      results[v].push_back(o.result);
      const std::string suffix = std::to_string(t);
      write_text(dir / ("trial_" + suffix + ".json"), o.result.dump(2) + "\n");
      if (o.result.at("status") == "ok") {
        write_text(dir / ("history_" + suffix + ".csv"), o.history_csv);
        write_text(dir / ("sweep_" + suffix + ".csv"), o.sweep_csv);
      }
      log << m.variants[v].name << " trial " << t << " seed " << m.trial_seeds[t] << ": "
          << o.result.at("status").get<std::string>() << " in " << o.seconds << " s\n";
    }
  }

  json agg = aggregate(m, results);
  agg["dataset"] = {{"source", source}, {"n", ds.size()}, {"d", ds.dim()}, {"C", ds.num_classes()}};
  write_text(m.output_dir / "aggregate.json", agg.dump(2) + "\n");
  log << "total " << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  write_text(m.output_dir / "run.log", log.str());
  return agg;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// Mean and sample standard deviation over present values; infinity propagates.
std::pair<std::optional<double>, std::optional<double>> column_stats(const std::vector<std::optional<double>>& xs) {
  std::vector<double> v;
  for (const auto& x : xs) if (x) v.push_back(*x);
  if (v.empty()) return {std::nullopt, std::nullopt};
  if (std::any_of(v.begin(), v.end(), [](double x) { return std::isinf(x); })) {
    return {std::numeric_limits<double>::infinity(), std::nullopt};
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, std::nullopt};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

void write_report(const fs::path& results_dir, const fs::path& out_dir) {
  const fs::path manifest_path = results_dir / "manifest.json";
  const fs::path aggregate_path = results_dir / "aggregate.json";
  if (!fs::exists(manifest_path) || !fs::exists(aggregate_path)) {
    throw DataError("missing manifest.json or aggregate.json in " + results_dir.string());
  }
  const json manifest = read_json(manifest_path);
  const json agg = read_json(aggregate_path);
  fs::create_directories(out_dir);

  json summary = {{"control", agg.at("control")}, {"variants", json::object()}};
  for (const json& variant : manifest.at("variants")) {
    const std::string name = variant.at("name").get<std::string>();
    std::vector<json> trials;
    for (std::size_t t = 0; t < manifest.at("trial_seeds").size(); ++t) {
      const fs::path p = results_dir / name / ("trial_" + std::to_string(t) + ".json");
      if (!fs::exists(p)) throw DataError("missing trial result " + p.string());
      json r = read_json(p);
      if (r.at("status") == "ok") trials.push_back(std::move(r));
    }
    if (trials.empty()) continue;

    // Accuracy-vs-threshold curves, averaged over trials.
    {
      const std::vector<std::string> cols{"id_acc", "none_acc", "overall_acc", "ratio_id", "ratio_none"};
      const json& rows0 = trials.front().at("evaluation").at("sweep");
      std::ostringstream mean_csv, std_csv;
      mean_csv << "threshold,id_acc,none_acc,overall_acc,ratio_id,ratio_none\n";
      std_csv << "threshold,id_acc,none_acc,overall_acc,ratio_id,ratio_none\n";
      for (std::size_t k = 0; k < rows0.size(); ++k) {
        mean_csv << fmt(rows0[k].at("threshold").get<double>());
        std_csv << fmt(rows0[k].at("threshold").get<double>());
        for (const auto& col : cols) {
          std::vector<std::optional<double>> xs;
          for (const auto& r : trials) xs.push_back(as_opt(r.at("evaluation").at("sweep").at(k).at(col)));
          const auto [mean, sd] = column_stats(xs);
          mean_csv << ',' << fmt(mean);
          std_csv << ',' << fmt(sd);
        }
        mean_csv << '\n';
        std_csv << '\n';
      }
      write_text(out_dir / (name + "_threshold_curves.csv"), mean_csv.str());
      write_text(out_dir / (name + "_threshold_curves_std.csv"), std_csv.str());
    }

    // Reliability diagram averaged over trials (per-bin means over trials with data).
    {
      const json& bins0 = trials.front().at("evaluation").at("reliability").at("bins");
      std::ostringstream csv;
      csv << "lower,upper,count,mean_confidence,accuracy\n";
      for (std::size_t b = 0; b < bins0.size(); ++b) {
        std::size_t count = 0;
        std::vector<std::optional<double>> conf, acc;
        for (const auto& r : trials) {
          const json& bin = r.at("evaluation").at("reliability").at("bins").at(b);
          count += bin.at("count").get<std::size_t>();
          conf.push_back(as_opt(bin.at("mean_confidence")));
          acc.push_back(as_opt(bin.at("accuracy")));
        }
        csv << fmt(bins0[b].at("lower").get<double>()) << ',' << fmt(bins0[b].at("upper").get<double>()) << ','
            << count << ',' << fmt(column_stats(conf).first) << ',' << fmt(column_stats(acc).first) << '\n';
      }
      write_text(out_dir / (name + "_reliability.csv"), csv.str());
    }

    // Training curves.
    {
      const json& hist0 = trials.front().at("history");
      std::ostringstream csv;
      csv << "epoch,loss,acc,none_acc,auroc,aupr\n";
      for (std::size_t k = 0; k < hist0.size(); ++k) {
        csv << hist0[k].at("epoch").get<int>();
        for (const char* col : {"loss", "acc", "none_acc", "auroc", "aupr"}) {
          std::vector<std::optional<double>> xs;
          for (const auto& r : trials) xs.push_back(as_opt(r.at("history").at(k).at(col)));
          csv << ',' << fmt(column_stats(xs).first);
        }
        csv << '\n';
      }
      write_text(out_dir / (name + "_training_curve.csv"), csv.str());
    }

    // Confidence histogram, pooled over trials.
    {
      const auto n_bins = trials.front().at("evaluation").at("confidence_histogram").at("counts").size();
      std::vector<std::size_t> counts(n_bins, 0);
      for (const auto& r : trials) {
        const auto c = r.at("evaluation").at("confidence_histogram").at("counts").get<std::vector<std::size_t>>();
        for (std::size_t b = 0; b < n_bins; ++b) counts[b] += c.at(b);
      }
      const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
      std::ostringstream csv;
      csv << "lower,upper,count,fraction\n";
      for (std::size_t b = 0; b < n_bins; ++b) {
        csv << fmt(static_cast<double>(b) / static_cast<double>(n_bins)) << ','
            << fmt(static_cast<double>(b + 1) / static_cast<double>(n_bins)) << ',' << counts[b] << ','
            << fmt(total > 0 ? static_cast<double>(counts[b]) / total : 0.0) << '\n';
      }
      write_text(out_dir / (name + "_confidence_histogram.csv"), csv.str());
    }

    summary["variants"][name] = agg.at("variants").at(name);
    if (agg.at("deltas_vs_control").contains(name)) {
      summary["variants"][name]["deltas_vs_control"] = agg.at("deltas_vs_control").at(name);
    }
  }
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace embaug
