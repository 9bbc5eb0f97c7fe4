#ifndef STREAMTREE_EXPERIMENT_HPP
#define STREAMTREE_EXPERIMENT_HPP

#include <map>
#include <string>
#include <vector>

#include "streamtree/streams.hpp"

namespace streamtree {

/// Flat key=value experiment description; see parse_config for the keys.
struct ExperimentConfig {
  CloudConfig cloud;
  std::string stream = "friedman";  // friedman | parabola | xor | csv
  std::int64_t stream_n = 2000;
  FriedmanDrift drift;
  double rotation_rate = 2.0 * 3.14159265358979323846 / 5000.0;
  double blob_sd = 0.5;
  std::string csv_path;
  int csv_label_col = -1;
  bool csv_header = false;
  int init = 10;    // observations consumed by ParticleCloud::init
  int batch = 1;    // prequential batch size
  int repeats = 1;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

/// Parse `key = value` lines (# comments) and apply overrides on top.
/// Throws std::invalid_argument with a message naming the bad key.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides);
ExperimentConfig config_from_pairs(const std::map<std::string, std::string>& kv);

std::vector<Observation> make_stream(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunSummary {
  std::vector<MetricTrace> traces;  // one per repeat
  double mean(const std::string& metric) const;
  double quantile(const std::string& metric, double q) const;
  static const std::vector<std::string>& metric_names(Task task);
};

/// `repeats` independent prequential runs with derived seeds; when
/// `write_outputs`, emits trace_<run>.csv, summary.csv and meta.json
/// under cfg.out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, bool write_outputs);

/// One run_experiment per value of `parameter` (lambda | k | w); returns
/// the long-format rows (value, metric, mean, q05, q95) written to
/// sweep.csv when requested.
struct SweepRow {
  double value;
  std::string metric;
  double mean, q05, q95;
};
std::vector<SweepRow> sweep_experiment(const ExperimentConfig& cfg,
                                       const std::string& parameter,
                                       const std::vector<double>& values,
                                       bool write_outputs);

/// Mean-over-particles tree height per step for three variants:
/// no discarding, capped pool with lambda=1, capped pool with lambda=0.9.
struct HeightTrace {
  std::vector<double> full, lambda1, lambda09;
};
HeightTrace height_study(const ExperimentConfig& cfg, bool write_outputs);

}  // namespace streamtree

#endif  // STREAMTREE_EXPERIMENT_HPP
