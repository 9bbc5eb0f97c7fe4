#ifndef STREAMTREE_SMC_HPP
#define STREAMTREE_SMC_HPP

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "streamtree/discard.hpp"
#include "streamtree/tree.hpp"

namespace streamtree {

struct CloudConfig {
  Task task = Task::kRegression;
  LeafModel leaf_model = LeafModel::kLinear;
  int n_particles = 100;
  std::int64_t capacity = 200;  // active pool cap w; <= 0 keeps everything
  double lambda = 1.0;
  DiscardPolicy policy = DiscardPolicy::kHistorical;
  TreePriorConfig tree_prior;
  int n_classes = 2;
  bool systematic_resampling = false;
  std::uint64_t seed = 1;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd probs;  // classification only
};

/// SMC posterior approximation: N dynamic-tree particles over a shared
/// active data pool. Each update resamples by one-step predictive weight,
/// propagates every particle through a stochastic local move, and retires
/// one point once the pool exceeds its capacity.
class ParticleCloud {
 public:
  static ParticleCloud init(const std::vector<Observation>& first_batch,
                            const CloudConfig& cfg);

  void update(const Observation& obs);

  Prediction predict(const Eigen::VectorXd& x) const;
  /// Model-averaged one-step predictive log density (regression) or log
  /// probability of the label (classification, y = label).
  double log_predictive_density(const Eigen::VectorXd& x, double y) const;

  const CloudConfig& config() const { return cfg_; }
  std::int64_t step() const { return t_; }
  std::size_t pool_size() const { return pool_.size(); }
  double last_ess() const { return last_ess_; }
  int degeneracy_warnings() const { return degeneracy_; }
  double mean_height() const;
  int max_nodes_alive() const;

  const DataPool& pool() const { return pool_; }
  const std::vector<Tree>& particles() const { return particles_; }
  const AdTotals& ad_totals() const { return totals_; }
  /// From-scratch recomputation of the AD totals (test oracle).
  AdTotals rebuild_ad_totals() const;

  void save(std::ostream& out) const;
  static ParticleCloud load(std::istream& in);

 private:
  ParticleCloud() = default;

  double leaf_log_marginal(const Tree& tree, const LeafPrior& prior,
                           const std::vector<int>& ids) const;
  double leaf_log_marginal(const Tree& tree, const LeafPrior& prior,
                           const RegressionStats* active,
                           const std::vector<int>& ids) const;
  void expand_box(const Eigen::VectorXd& x);
  void propagate(Tree& tree, int id);
  void subtract_tree_ad(const Tree& tree);
  void add_tree_ad(const Tree& tree);
  void subtract_leaf_ad(const Tree& tree, int leaf);
  void refresh_leaf_ad(Tree& tree, int leaf);
  void set_point_ad(Tree& tree, int leaf, int pos);
  bool use_ad() const {
    return cfg_.policy == DiscardPolicy::kAlc || cfg_.policy == DiscardPolicy::kEntropy;
  }

  CloudConfig cfg_;
  DataPool pool_;
  std::vector<Tree> particles_;
  Eigen::VectorXd box_lo_, box_hi_;
  std::mt19937_64 rng_;
  std::int64_t t_ = 0;
  AdTotals totals_;
  double last_ess_ = 0.0;
  int degeneracy_ = 0;
};

double effective_sample_size(const std::vector<double>& weights);

}  // namespace streamtree

#endif  // STREAMTREE_SMC_HPP
