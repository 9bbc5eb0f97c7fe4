#include "streamtree/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace streamtree {

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto bad = [&](const std::string& why) {
    throw std::invalid_argument("config key '" + key + "': " + why + " ('" + value + "')");
  };
  auto as_i64 = [&]() {
    try {
      return static_cast<std::int64_t>(std::stoll(value));
    } catch (const std::exception&) {
      bad("expected an integer");
      return std::int64_t{0};
    }
  };
  auto as_f64 = [&]() {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      bad("expected a number");
      return 0.0;
    }
  };

  if (key == "task") {
    if (value == "regression")
      cfg.cloud.task = Task::kRegression;
    else if (value == "classification")
      cfg.cloud.task = Task::kClassification;
    else
      bad("expected regression|classification");
  } else if (key == "leaf_model") {
    if (value == "constant")
      cfg.cloud.leaf_model = LeafModel::kConstant;
    else if (value == "linear")
      cfg.cloud.leaf_model = LeafModel::kLinear;
    else if (value == "multinomial")
      cfg.cloud.leaf_model = LeafModel::kMultinomial;
    else
      bad("expected constant|linear|multinomial");
  } else if (key == "particles") {
    cfg.cloud.n_particles = static_cast<int>(as_i64());
  } else if (key == "w") {
    if (value == "inf" || value == "full")
      cfg.cloud.capacity = -1;
    else
      cfg.cloud.capacity = as_i64();
  } else if (key == "lambda") {
    cfg.cloud.lambda = as_f64();
  } else if (key == "policy") {
    if (value == "historical")
      cfg.cloud.policy = DiscardPolicy::kHistorical;
    else if (value == "random")
      cfg.cloud.policy = DiscardPolicy::kRandom;
    else if (value == "alc")
      cfg.cloud.policy = DiscardPolicy::kAlc;
    else if (value == "entropy")
      cfg.cloud.policy = DiscardPolicy::kEntropy;
    else
      bad("expected historical|random|alc|entropy");
  } else if (key == "alpha") {
    cfg.cloud.tree_prior.alpha = as_f64();
  } else if (key == "beta") {
    cfg.cloud.tree_prior.beta = as_f64();
  } else if (key == "min_leaf") {
    cfg.cloud.tree_prior.min_leaf = static_cast<int>(as_i64());
  } else if (key == "classes") {
    cfg.cloud.n_classes = static_cast<int>(as_i64());
  } else if (key == "systematic_resampling") {
    cfg.cloud.systematic_resampling = as_i64() != 0;
  } else if (key == "stream") {
    if (value != "friedman" && value != "parabola" && value != "xor" && value != "csv")
      bad("expected friedman|parabola|xor|csv");
    cfg.stream = value;
  } else if (key == "stream_n") {
    cfg.stream_n = as_i64();
  } else if (key == "drift") {
    if (value == "none")
      cfg.drift.kind = FriedmanDrift::Kind::kNone;
    else if (value == "sine")
      cfg.drift.kind = FriedmanDrift::Kind::kSine;
    else if (value == "step")
      cfg.drift.kind = FriedmanDrift::Kind::kStep;
    else
      bad("expected none|sine|step");
  } else if (key == "drift_k") {
    cfg.drift.k = as_f64();
  } else if (key == "step_amp") {
    cfg.drift.step_amp = as_f64();
  } else if (key == "step_begin") {
    cfg.drift.step_begin = as_i64();
  } else if (key == "step_end") {
    cfg.drift.step_end = as_i64();
  } else if (key == "rotation_rate") {
    cfg.rotation_rate = as_f64();
  } else if (key == "blob_sd") {
    cfg.blob_sd = as_f64();
  } else if (key == "csv_path") {
    cfg.csv_path = value;
  } else if (key == "csv_label_col") {
    cfg.csv_label_col = static_cast<int>(as_i64());
  } else if (key == "csv_header") {
    cfg.csv_header = as_i64() != 0;
  } else if (key == "init") {
    cfg.init = static_cast<int>(as_i64());
  } else if (key == "batch") {
    cfg.batch = static_cast<int>(as_i64());
  } else if (key == "repeats") {
    cfg.repeats = static_cast<int>(as_i64());
  } else if (key == "threads") {
    cfg.threads = static_cast<int>(as_i64());
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(as_i64());
  } else if (key == "out") {
    cfg.out_dir = value;
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& why) { throw std::invalid_argument(why); };
  if (cfg.cloud.n_particles < 1) fail("particles must be >= 1");
  if (cfg.cloud.capacity > 0 && cfg.cloud.capacity < cfg.cloud.tree_prior.min_leaf)
    fail("w must be >= min_leaf (or inf)");
  if (cfg.cloud.lambda < 0.0 || cfg.cloud.lambda > 1.0) fail("lambda must be in [0,1]");
  if (!(cfg.cloud.tree_prior.alpha > 0.0 && cfg.cloud.tree_prior.alpha < 1.0))
    fail("alpha must be in (0,1)");
  if (!(cfg.cloud.tree_prior.beta > 0.0)) fail("beta must be > 0");
  if (cfg.cloud.task == Task::kClassification && cfg.cloud.policy == DiscardPolicy::kAlc)
    fail("ALC discarding requires a regression task");
  if (cfg.cloud.task == Task::kRegression && cfg.cloud.policy == DiscardPolicy::kEntropy)
    fail("entropy discarding requires a classification task");
  if (cfg.init < cfg.cloud.tree_prior.min_leaf) fail("init must be >= min_leaf");
  if (cfg.stream == "csv" && cfg.csv_path.empty()) fail("csv stream needs csv_path");
  if (cfg.repeats < 1) fail("repeats must be >= 1");
}

}  // namespace

ExperimentConfig config_from_pairs(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kv) apply_kv(cfg, key, value);
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line is not key=value: " + line);
      apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override is not key=value: " + ov);
    apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

std::vector<Observation> make_stream(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.stream == "friedman") return gen_friedman(cfg.stream_n, seed, cfg.drift);
  if (cfg.stream == "parabola") return gen_parabola(cfg.stream_n, seed);
  if (cfg.stream == "xor")
    return gen_moving_xor(cfg.stream_n, seed, cfg.rotation_rate, cfg.blob_sd);
  CsvSchema schema;
  schema.label_col = cfg.csv_label_col;
  schema.task = cfg.cloud.task;
  schema.has_header = cfg.csv_header;
  return load_csv(cfg.csv_path, schema);
}

const std::vector<std::string>& RunSummary::metric_names(Task task) {
  static const std::vector<std::string> reg{"rmse", "mean_density"};
  static const std::vector<std::string> cls{"ccr", "auc", "mean_density"};
  return task == Task::kClassification ? cls : reg;
}

namespace {
double metric_of(const MetricTrace& trace, const std::string& metric) {
  if (metric == "rmse") return trace.rmse();
  if (metric == "mean_density") return trace.mean_density();
  if (metric == "ccr") return trace.ccr();
  if (metric == "auc") return trace.auc();
  throw std::invalid_argument("unknown metric " + metric);
}
}  // namespace

double RunSummary::mean(const std::string& metric) const {
  double s = 0.0;
  for (const MetricTrace& tr : traces) s += metric_of(tr, metric);
  return s / static_cast<double>(traces.size());
}

double RunSummary::quantile(const std::string& metric, double q) const {
  std::vector<double> vals;
  vals.reserve(traces.size());
  for (const MetricTrace& tr : traces) vals.push_back(metric_of(tr, metric));
  std::sort(vals.begin(), vals.end());
  const double pos = q * static_cast<double>(vals.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, vals.size() - 1);
  return vals[lo] + (pos - static_cast<double>(lo)) * (vals[hi] - vals[lo]);
}

namespace {

MetricTrace single_run(const ExperimentConfig& cfg, int run) {
  std::vector<Observation> stream = make_stream(cfg, mix_seed(cfg.seed, 2 * run));
  if (static_cast<int>(stream.size()) <= cfg.init)
    throw std::runtime_error("stream shorter than init batch");
  CloudConfig ccfg = cfg.cloud;
  ccfg.seed = mix_seed(cfg.seed, 2 * run + 1);
  std::vector<Observation> head(stream.begin(), stream.begin() + cfg.init);
  std::vector<Observation> tail(stream.begin() + cfg.init, stream.end());
  ParticleCloud cloud = ParticleCloud::init(head, ccfg);
  return prequential_eval(cloud, tail, cfg.batch);
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, bool write_outputs) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.traces.resize(cfg.repeats);
  if (cfg.threads > 1 && cfg.repeats > 1) {
    std::vector<std::future<MetricTrace>> futures;
    futures.reserve(cfg.repeats);
    for (int run = 0; run < cfg.repeats; ++run)
      futures.push_back(
          std::async(std::launch::async, [&cfg, run] { return single_run(cfg, run); }));
    for (int run = 0; run < cfg.repeats; ++run) summary.traces[run] = futures[run].get();
  } else {
    for (int run = 0; run < cfg.repeats; ++run) summary.traces[run] = single_run(cfg, run);
  }

  if (write_outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    for (int run = 0; run < cfg.repeats; ++run)
      write_trace_csv(summary.traces[run],
                      (fs::path(cfg.out_dir) / ("trace_" + std::to_string(run) + ".csv"))
                          .string());
    std::ofstream sum((fs::path(cfg.out_dir) / "summary.csv").string());
    sum << "metric,mean,q05,q95\n";
    sum.precision(17);
    for (const std::string& metric : RunSummary::metric_names(cfg.cloud.task))
      sum << metric << ',' << summary.mean(metric) << ',' << summary.quantile(metric, 0.05)
          << ',' << summary.quantile(metric, 0.95) << '\n';

    const auto wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json meta;
    meta["stream"] = cfg.stream;
    meta["task"] = cfg.cloud.task == Task::kClassification ? "classification" : "regression";
    meta["particles"] = cfg.cloud.n_particles;
    meta["w"] = cfg.cloud.capacity;
    meta["lambda"] = cfg.cloud.lambda;
    meta["repeats"] = cfg.repeats;
    meta["seed"] = cfg.seed;
    meta["batch"] = cfg.batch;
    meta["wall_seconds"] = wall;
    meta["height_convention"] = "root-only tree has height 1";
    meta["csv_preprocessing"] = "none (values ingested as-is)";
    std::ofstream((fs::path(cfg.out_dir) / "meta.json").string()) << meta.dump(2) << "\n";
  }
  return summary;
}

std::vector<SweepRow> sweep_experiment(const ExperimentConfig& cfg,
                                       const std::string& parameter,
                                       const std::vector<double>& values,
                                       bool write_outputs) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig sub = cfg;
    sub.out_dir.clear();
    if (parameter == "lambda")
      sub.cloud.lambda = v;
    else if (parameter == "k")
      sub.drift.k = v;
    else if (parameter == "w")
      sub.cloud.capacity = static_cast<std::int64_t>(v);
    else
      throw std::invalid_argument("sweep parameter must be lambda|k|w");
    RunSummary summary = run_experiment(sub, false);
    for (const std::string& metric : RunSummary::metric_names(cfg.cloud.task))
      rows.push_back(SweepRow{v, metric, summary.mean(metric),
                              summary.quantile(metric, 0.05),
                              summary.quantile(metric, 0.95)});
  }
  if (write_outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::ofstream out((fs::path(cfg.out_dir) / "sweep.csv").string());
    out << "value,metric,mean,q05,q95\n";
    out.precision(17);
    for (const SweepRow& r : rows)
      out << r.value << ',' << r.metric << ',' << r.mean << ',' << r.q05 << ',' << r.q95
          << '\n';
  }
  return rows;
}

HeightTrace height_study(const ExperimentConfig& cfg, bool write_outputs) {
  if (cfg.cloud.task != Task::kRegression)
    throw std::invalid_argument("height study is a regression experiment");
  HeightTrace out;
  struct Variant {
    std::int64_t capacity;
    double lambda;
    std::vector<double>* dest;
  };
  Variant variants[3] = {{-1, 1.0, &out.full},
                         {cfg.cloud.capacity, 1.0, &out.lambda1},
                         {cfg.cloud.capacity, 0.9, &out.lambda09}};
  std::vector<Observation> stream = make_stream(cfg, mix_seed(cfg.seed, 0));
  for (const Variant& variant : variants) {
    CloudConfig ccfg = cfg.cloud;
    ccfg.capacity = variant.capacity;
    ccfg.lambda = variant.lambda;
    ccfg.seed = mix_seed(cfg.seed, 1);
    std::vector<Observation> head(stream.begin(), stream.begin() + cfg.init);
    ParticleCloud cloud = ParticleCloud::init(head, ccfg);
    variant.dest->reserve(stream.size() - cfg.init);
    for (std::size_t i = cfg.init; i < stream.size(); ++i) {
      cloud.update(stream[i]);
      variant.dest->push_back(cloud.mean_height());
    }
  }
  if (write_outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::ofstream file((fs::path(cfg.out_dir) / "heights.csv").string());
    file << "t,height_full,height_lambda1,height_lambda09\n";
    for (std::size_t i = 0; i < out.full.size(); ++i)
      file << i << ',' << out.full[i] << ',' << out.lambda1[i] << ',' << out.lambda09[i]
           << '\n';
  }
  return out;
}

}  // namespace streamtree
