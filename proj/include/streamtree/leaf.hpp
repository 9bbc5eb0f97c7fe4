#ifndef STREAMTREE_LEAF_HPP
#define STREAMTREE_LEAF_HPP

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "streamtree/observation.hpp"

namespace streamtree {

enum class LeafModel { kConstant, kLinear, kMultinomial };

// A leaf is proper only once it has accumulated this many effective points
// (retired mass plus active count).
inline constexpr double kMinProperPoints = 5.0;

// Condition-number threshold beyond which the combined Grahm matrix is
// treated as singular and the linear model falls back to the constant one.
inline constexpr double kMaxGramCondition = 1e10;

// Vague fallback density used while a leaf is still improper.
inline constexpr double kBaselineSd = 100.0;

/// Running sums for the Gaussian (constant/linear) leaf family over
/// augmented design rows [1, x']. Serves both as the retired-data prior
/// and as the accumulator for active data; the two combine additively.
struct RegressionStats {
  double n = 0.0;              // effective count (fractional under forgetting)
  Eigen::MatrixXd gram;        // (d+1)x(d+1) running X'X
  Eigen::VectorXd xy;          // running X'y
  double yy = 0.0;             // running sum of y^2

  RegressionStats() = default;
  explicit RegressionStats(int d_input)
      : gram(Eigen::MatrixXd::Zero(d_input + 1, d_input + 1)),
        xy(Eigen::VectorXd::Zero(d_input + 1)) {}

  int cols() const { return static_cast<int>(xy.size()); }
  bool empty() const { return n == 0.0; }

  void add(const Eigen::VectorXd& x, double y);
  void remove(const Eigen::VectorXd& x, double y);
  /// Exponential decay of the whole record (forgetting-factor step).
  void scale(double f);
  void add_scaled(const RegressionStats& other, double f);
};

/// Dirichlet pseudo-counts for the multinomial leaf. When used as a prior
/// the baseline (1,...,1) is included in `a`; active counts live in a plain
/// count vector with no baseline.
struct DirichletStats {
  Eigen::VectorXd a;

  DirichletStats() = default;
  explicit DirichletStats(int n_classes) : a(Eigen::VectorXd::Ones(n_classes)) {}

  int classes() const { return static_cast<int>(a.size()); }
  /// Informative mass above the (1,...,1) baseline.
  double retired_mass() const { return a.sum() - static_cast<double>(a.size()); }
};

/// Retired-information prior of a single leaf: exactly one of the two
/// payloads is meaningful, selected by the leaf model.
struct LeafPrior {
  RegressionStats reg;
  DirichletStats dir;

  static LeafPrior Regression(int d_input) {
    LeafPrior p;
    p.reg = RegressionStats(d_input);
    return p;
  }
  static LeafPrior Multinomial(int n_classes) {
    LeafPrior p;
    p.dir = DirichletStats(n_classes);
    return p;
  }
};

/// Fold one retiree into the prior with forgetting factor `lambda`.
/// lambda = 1 is exact conjugate updating; lambda = 0 resets the history.
/// For the multinomial only the mass above the baseline decays.
void retire_into_prior(LeafPrior& prior, LeafModel model, const Observation& obs,
                       double lambda);

/// Additive pooling of two sibling priors into the parent prior (prune).
LeafPrior pool_priors(const LeafPrior& left, const LeafPrior& right, LeafModel model);

/// Proportional split of a prior between two children (grow); `alpha` is the
/// fraction of active points going left. pool_priors undoes this exactly.
std::pair<LeafPrior, LeafPrior> split_prior(const LeafPrior& prior, LeafModel model,
                                            double alpha);

/// Derived posterior of a regression leaf from combined (prior + active)
/// sufficient statistics. Falls back from linear to constant when the
/// combined Grahm matrix is ill conditioned or the degrees of freedom run
/// out; improper leaves predict from a vague baseline.
class RegressionPosterior {
 public:
  RegressionPosterior() = default;
  RegressionPosterior(LeafModel model, const RegressionStats& prior,
                      const RegressionStats& active);

  bool proper() const { return proper_; }
  bool constant_fallback() const { return fallback_; }
  double n_total() const { return n_; }
  double dof() const { return nu_; }
  double s2() const { return s2_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  double intercept() const { return beta_.size() ? beta_[0] : 0.0; }
  int model_cols() const { return q_; }

  double mean(const Eigen::VectorXd& x) const;
  double variance(const Eigen::VectorXd& x) const;
  /// Student-t one-step predictive log density at (x, y); baseline normal
  /// when improper.
  double log_predictive(const Eigen::VectorXd& x, double y) const;
  /// Solve G_combined^{-1} v for the (possibly reduced) model columns.
  Eigen::VectorXd gram_solve(const Eigen::VectorXd& v) const;
  /// x'G^{-1}x for the augmented row of x (reduced to model columns).
  double gram_quad(const Eigen::VectorXd& x) const;
  Eigen::VectorXd augment(const Eigen::VectorXd& x) const;

  /// log of the improper-prior "partition function" of the combined stats;
  /// differences of this across nested stats give exact marginal
  /// likelihoods. Only valid for proper states.
  double log_partition() const;

 private:
  bool proper_ = false;
  bool fallback_ = false;
  int q_ = 0;  // model columns actually used (1 for constant)
  double n_ = 0.0, nu_ = 0.0, s2_ = 0.0, rss_ = 0.0;
  Eigen::VectorXd beta_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double half_logdet_ = 0.0;
  double baseline_mean_ = 0.0;
};

/// Multinomial leaf posterior: Dirichlet pseudo-counts plus active counts.
class MultinomialPosterior {
 public:
  MultinomialPosterior() = default;
  MultinomialPosterior(const DirichletStats& prior, const Eigen::VectorXd& counts);

  const Eigen::VectorXd& probs() const { return probs_; }
  double log_predictive(int label) const;
  double entropy() const;

 private:
  Eigen::VectorXd probs_;
};

/// Log marginal likelihood of `active` under the retired-data prior,
/// equal to the chained one-point log predictive densities. Points are
/// absorbed in the order given; while the running state is improper the
/// baseline density is used, after which the closed form takes over.
double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               std::span<const Observation* const> active);
/// Fast variant: uses precomputed active sufficient statistics and the
/// closed-form partition-function difference whenever the prior state is
/// already proper; falls back to the pointwise chain otherwise.
double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               const RegressionStats& active,
                               std::span<const Observation* const> points);
double log_marginal_multinomial(const DirichletStats& prior,
                                const Eigen::VectorXd& counts);

/// Spec-surface convenience overloads taking observation lists directly.
RegressionPosterior posterior_regression(LeafModel model, const RegressionStats& prior,
                                         std::span<const Observation> active);
double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               std::span<const Observation> active);

}  // namespace streamtree

#endif  // STREAMTREE_LEAF_HPP
