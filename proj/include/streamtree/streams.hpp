#ifndef STREAMTREE_STREAMS_HPP
#define STREAMTREE_STREAMS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamtree/observation.hpp"
#include "streamtree/smc.hpp"

namespace streamtree {

/// Drift applied to the sine term of the Friedman surface.
struct FriedmanDrift {
  enum class Kind { kNone, kSine, kStep };
  Kind kind = Kind::kNone;
  double k = 1.0;            // sine: cycles per 1000 steps
  double step_amp = 10.0;    // step: amplitude inside the window
  std::int64_t step_begin = 10000;
  std::int64_t step_end = 20000;

  double amplitude(std::int64_t t) const;
};

double friedman_mean(const Eigen::VectorXd& x, double a);

std::vector<Observation> gen_friedman(std::int64_t n, std::uint64_t seed,
                                      const FriedmanDrift& drift = {},
                                      double noise_sd = 1.0);

/// 1-d parabola stream: y = x + x^2 + N(0,1), x ~ U(-3, 2).
std::vector<Observation> gen_parabola(std::int64_t n, std::uint64_t seed,
                                      double noise_sd = 1.0);

/// Rotating fuzzy-XOR two-class stream ("moving target"): Gaussian blobs
/// at (+-1, +-1) with XOR labels, frame rotated by rotation_rate * t.
std::vector<Observation> gen_moving_xor(std::int64_t n, std::uint64_t seed,
                                        double rotation_rate, double blob_sd = 0.5);

struct CsvSchema {
  std::vector<int> feature_cols;  // empty = all but label column
  int label_col = -1;             // -1 = last column
  Task task = Task::kClassification;
  bool has_header = false;
};

std::vector<Observation> load_csv(const std::string& path, const CsvSchema& schema);

struct MetricRecord {
  std::int64_t t = 0;
  double prediction = 0.0;   // mean (regression) or argmax class
  double truth = 0.0;
  double log_density = 0.0;  // log predictive density / probability of truth
  double sq_error = 0.0;     // squared error (regression)
  bool correct = false;      // classification 0/1 accuracy
  double score = 0.0;        // probability of class 1 (binary AUC)
};

struct MetricTrace {
  Task task = Task::kRegression;
  std::vector<MetricRecord> records;

  double rmse() const;
  double mean_density() const;  // average predictive density of the truth
  double ccr() const;
  double auc() const;  // binary classification only
};

/// AUC by the Mann-Whitney rank statistic with midranks for ties.
double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);
/// AUC by explicit trapezoidal ROC integration (test oracle).
double auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels);

/// One-step-ahead (test-then-train) evaluation: predict each next batch,
/// record metrics, then update the cloud with it. `stream` excludes the
/// cloud's init batch.
MetricTrace prequential_eval(ParticleCloud& cloud, const std::vector<Observation>& stream,
                             int batch = 1);

void write_trace_csv(const MetricTrace& trace, const std::string& path);

}  // namespace streamtree

#endif  // STREAMTREE_STREAMS_HPP
