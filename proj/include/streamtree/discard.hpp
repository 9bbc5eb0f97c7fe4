#ifndef STREAMTREE_DISCARD_HPP
#define STREAMTREE_DISCARD_HPP

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "streamtree/leaf.hpp"
#include "streamtree/pool.hpp"

namespace streamtree {

enum class DiscardPolicy { kHistorical, kRandom, kAlc, kEntropy };

/// Exact value of the rectangle integral
///   int_{a_1}^{b_1} ... int_{a_m}^{b_m} (c + sum_i g_i z_i)^2 dz
/// via the four-term closed form; O(m^2) arithmetic.
double rect_integral(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const Eigen::VectorXd& gx, double c);

/// ALC variance-reduction statistic for active location x in a regression
/// leaf over rectangle [a, b]. The count terms (1/|eta| and the degrees of
/// freedom |eta| - m - 3) use the active count `n_active` when given,
/// falling back to the total effective mass otherwise. Returns +inf when
/// the leaf is improper or holds too few active points to give up one
/// (|eta| <= m + 3); such points are never selected for discarding.
double alc_reduction(const RegressionPosterior& post, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& b, const Eigen::VectorXd& x,
                     double n_active = 0.0);

double entropy_of(const Eigen::VectorXd& probs);

/// Particle-averaged AD statistics per pool id. Regression stores one
/// value per point (the ALC reduction); classification stores the
/// per-particle class probability vectors, so the entropy of the
/// particle-averaged predictive can be formed at selection time.
/// NaN contributions mark particles where the point's leaf is improper;
/// they are skipped rather than averaged.
struct AdTotals {
  int stride = 1;
  std::vector<double> sum;
  std::vector<int> count;

  explicit AdTotals(int stride_ = 1) : stride(stride_) {}

  void ensure(int id) {
    if ((id + 1) * stride > static_cast<int>(sum.size())) {
      sum.resize(static_cast<std::size_t>(id + 1) * stride, 0.0);
      count.resize(id + 1, 0);
    }
  }
  void add(int id, const double* v) {
    ensure(id);
    if (std::isnan(v[0])) return;
    for (int s = 0; s < stride; ++s) sum[static_cast<std::size_t>(id) * stride + s] += v[s];
    ++count[id];
  }
  void sub(int id, const double* v) {
    ensure(id);
    if (std::isnan(v[0])) return;
    for (int s = 0; s < stride; ++s) sum[static_cast<std::size_t>(id) * stride + s] -= v[s];
    --count[id];
  }
  void clear_id(int id) {
    ensure(id);
    for (int s = 0; s < stride; ++s) sum[static_cast<std::size_t>(id) * stride + s] = 0.0;
    count[id] = 0;
  }
  /// Scalar selection score (mean ALC or entropy of mean probabilities);
  /// +inf when no particle contributed.
  double score(int id, DiscardPolicy policy) const;
};

/// Pick the pool id to retire under `policy`. ALC/entropy take the argmin
/// of the particle-averaged statistic with ties broken by age; `historical`
/// takes the oldest point and `random` a uniform one.
int select_retiree(const DataPool& pool, const AdTotals& totals, DiscardPolicy policy,
                   std::mt19937_64& rng);

}  // namespace streamtree

#endif  // STREAMTREE_DISCARD_HPP
