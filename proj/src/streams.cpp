#include "streamtree/streams.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace streamtree {

double FriedmanDrift::amplitude(std::int64_t t) const {
  switch (kind) {
    case Kind::kNone:
      return 1.0;
    case Kind::kSine:
      return 2.0 * std::sin(2.0 * std::numbers::pi * k * static_cast<double>(t) / 1000.0) +
             1.0;
    case Kind::kStep:
      return (t >= step_begin && t < step_end) ? step_amp : 0.0;
  }
  return 1.0;
}

double friedman_mean(const Eigen::VectorXd& x, double a) {
  return 10.0 * a * std::sin(std::numbers::pi * x[0] * x[1]) +
         20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
}

std::vector<Observation> gen_friedman(std::int64_t n, std::uint64_t seed,
                                      const FriedmanDrift& drift, double noise_sd) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::int64_t t = 0; t < n; ++t) {
    Observation obs;
    obs.x = Eigen::VectorXd::NullaryExpr(5, [&](Eigen::Index) { return unif(rng); });
    obs.y = friedman_mean(obs.x, drift.amplitude(t)) + noise_sd * noise(rng);
    obs.t = t;
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<Observation> gen_parabola(std::int64_t n, std::uint64_t seed,
                                      double noise_sd) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-3.0, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::int64_t t = 0; t < n; ++t) {
    Observation obs;
    obs.x = Eigen::VectorXd::Constant(1, unif(rng));
    obs.y = obs.x[0] + obs.x[0] * obs.x[0] + noise_sd * noise(rng);
    obs.t = t;
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<Observation> gen_moving_xor(std::int64_t n, std::uint64_t seed,
                                        double rotation_rate, double blob_sd) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_blob(0, 3);
  std::normal_distribution<double> noise(0.0, blob_sd);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::int64_t t = 0; t < n; ++t) {
    const int blob = pick_blob(rng);
    const double cx = (blob & 1) ? 1.0 : -1.0;
    const double cy = (blob & 2) ? 1.0 : -1.0;
    const double px = cx + noise(rng);
    const double py = cy + noise(rng);
    const double theta = rotation_rate * static_cast<double>(t);
    const double c = std::cos(theta), s = std::sin(theta);
    Observation obs;
    obs.x = Eigen::VectorXd(2);
    obs.x << c * px - s * py, s * px + c * py;
    obs.label = (cx * cy > 0.0) ? 1 : 0;  // XOR: same-sign blobs are class 1
    obs.t = t;
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<Observation> load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Observation> out;
  std::string line;
  std::int64_t lineno = 0, t = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && schema.has_header) continue;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        fields.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": malformed value at line " +
                                 std::to_string(lineno));
      }
    }
    const int ncols = static_cast<int>(fields.size());
    const int label_col = schema.label_col >= 0 ? schema.label_col : ncols - 1;
    if (label_col >= ncols)
      throw std::runtime_error(path + ": too few columns at line " +
                               std::to_string(lineno));
    std::vector<int> fcols = schema.feature_cols;
    if (fcols.empty())
      for (int c = 0; c < ncols; ++c)
        if (c != label_col) fcols.push_back(c);
    Observation obs;
    obs.x = Eigen::VectorXd(fcols.size());
    for (std::size_t i = 0; i < fcols.size(); ++i) {
      if (fcols[i] >= ncols)
        throw std::runtime_error(path + ": too few columns at line " +
                                 std::to_string(lineno));
      obs.x[static_cast<Eigen::Index>(i)] = fields[fcols[i]];
    }
    if (schema.task == Task::kClassification)
      obs.label = static_cast<int>(std::lround(fields[label_col]));
    else
      obs.y = fields[label_col];
    obs.t = t++;
    out.push_back(std::move(obs));
  }
  return out;
}

double MetricTrace::rmse() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const MetricRecord& r : records) s += r.sq_error;
  return std::sqrt(s / static_cast<double>(records.size()));
}

double MetricTrace::mean_density() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const MetricRecord& r : records) s += std::exp(r.log_density);
  return s / static_cast<double>(records.size());
}

double MetricTrace::ccr() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const MetricRecord& r : records) s += r.correct ? 1.0 : 0.0;
  return s / static_cast<double>(records.size());
}

double MetricTrace::auc() const {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(records.size());
  for (const MetricRecord& r : records) {
    scores.push_back(r.score);
    labels.push_back(static_cast<int>(r.truth));
  }
  return auc_rank(scores, labels);
}

double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // midranks over tied score groups
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      rank_pos += rank[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  return (rank_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double n_pos = 0.0, n_neg = 0.0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1.0;
  if (n_pos == 0.0 || n_neg == 0.0) return 0.5;
  double auc = 0.0, tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double dtp = 0.0, dfp = 0.0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? dtp : dfp) += 1.0;
      ++j;
    }
    auc += dfp / n_neg * (tp + 0.5 * dtp) / n_pos;
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return auc;
}

MetricTrace prequential_eval(ParticleCloud& cloud, const std::vector<Observation>& stream,
                             int batch) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  MetricTrace trace;
  trace.task = cloud.config().task;
  trace.records.reserve(stream.size());
  std::size_t i = 0;
  while (i < stream.size()) {
    const std::size_t end = std::min(stream.size(), i + static_cast<std::size_t>(batch));
    for (std::size_t j = i; j < end; ++j) {
      const Observation& obs = stream[j];
      MetricRecord rec;
      rec.t = cloud.step();
      if (trace.task == Task::kClassification) {
        Prediction pred = cloud.predict(obs.x);
        Eigen::Index argmax;
        pred.probs.maxCoeff(&argmax);
        rec.prediction = static_cast<double>(argmax);
        rec.truth = obs.label;
        rec.log_density = std::log(pred.probs[obs.label]);
        rec.correct = static_cast<int>(argmax) == obs.label;
        rec.score = pred.probs.size() > 1 ? pred.probs[1] : 0.0;
      } else {
        Prediction pred = cloud.predict(obs.x);
        rec.prediction = pred.mean;
        rec.truth = obs.y;
        rec.log_density = cloud.log_predictive_density(obs.x, obs.y);
        rec.sq_error = (pred.mean - obs.y) * (pred.mean - obs.y);
      }
      trace.records.push_back(rec);
    }
    for (std::size_t j = i; j < end; ++j) cloud.update(stream[j]);
    i = end;
  }
  return trace;
}

void write_trace_csv(const MetricTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,prediction,truth,log_density,sq_error,correct,score\n";
  out.precision(17);
  for (const MetricRecord& r : trace.records)
    out << r.t << ',' << r.prediction << ',' << r.truth << ',' << r.log_density << ','
        << r.sq_error << ',' << (r.correct ? 1 : 0) << ',' << r.score << '\n';
}

}  // namespace streamtree
