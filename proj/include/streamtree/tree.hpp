#ifndef STREAMTREE_TREE_HPP
#define STREAMTREE_TREE_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamtree/leaf.hpp"
#include "streamtree/pool.hpp"

namespace streamtree {

/// x goes right iff x[dim] >= threshold.
struct SplitRule {
  int dim = -1;
  double threshold = 0.0;
};

struct TreePriorConfig {
  double alpha = 0.95;  // split probability base, in (0,1)
  double beta = 2.0;    // depth penalty exponent, > 0
  int min_leaf = 5;     // minimum active points per child for a grow
};

/// Leaf payload: active ids into the shared pool, retired-data prior,
/// running active sufficient statistics, and cached AD statistics
/// (stride = 1 for regression, K for classification; NaN = not computed).
struct LeafData {
  std::vector<int> ids;
  LeafPrior prior;
  RegressionStats active_reg;
  Eigen::VectorXd active_counts;
  std::vector<double> ad;
};

struct Node {
  int parent = -1;
  int left = -1;  // leaf iff left < 0
  int right = -1;
  int depth = 0;
  SplitRule rule;
  LeafData leaf;

  bool is_leaf() const { return left < 0; }
};

/// Recursive binary partition owned by one particle. Nodes live in an
/// arena with slot reuse so that memory stays bounded under grow/prune
/// churn; trees are plain value types and copy with the particle.
class Tree {
 public:
  Tree() = default;
  Tree(Task task, LeafModel model, int d_input, int n_classes);

  Task task() const { return task_; }
  LeafModel model() const { return model_; }
  int input_dim() const { return d_; }
  int n_classes() const { return k_; }
  int root() const { return root_; }
  const Node& node(int idx) const { return nodes_[idx]; }
  Node& node(int idx) { return nodes_[idx]; }

  int leaf_of(const Eigen::VectorXd& x) const;

  /// Leaf hyper-rectangle: split constraints along the root path
  /// intersected with the outer bounding box [lo, hi].
  void leaf_rect(int leaf, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                 Eigen::VectorXd* a, Eigen::VectorXd* b) const;

  double log_tree_prior(const TreePriorConfig& cfg) const;
  /// Local prior ratio of growing `leaf` (log pi(T') - log pi(T)).
  double grow_log_prior_ratio(int leaf, const TreePriorConfig& cfg) const;

  /// Insert pool observation `id` into its leaf; returns the leaf index.
  int insert(int id, const DataPool& pool);

  /// Move the observation from the active set of its leaf into the leaf
  /// prior, with forgetting factor lambda.
  void retire(int id, const DataPool& pool, double lambda);

  /// Split `leaf` by `rule`: ids partitioned, prior split at the active
  /// fraction, child active stats rebuilt. AD caches of the children are
  /// reset to NaN. Returns {left, right} node indices.
  std::pair<int, int> grow(int leaf, const SplitRule& rule, const DataPool& pool);

  /// Merge the two child leaves of `internal` back into one leaf: ids
  /// unioned, priors pooled, active stats summed. Exact inverse of grow.
  void prune(int internal);

  int count_right(int leaf, const SplitRule& rule, const DataPool& pool) const;

  int n_leaves() const;
  int n_nodes_alive() const;
  /// Height with the root-only tree at 1.
  int height() const;
  double total_retired_mass() const;
  int total_active() const;
  void leaf_indices(std::vector<int>* out) const;

  /// Ids of a leaf sorted by arrival time (chain-rule evaluation order).
  std::vector<int> leaf_ids_by_arrival(int leaf, const DataPool& pool) const;

  /// Structured-text snapshot for debugging; not a stable format.
  std::string to_text() const;

  void save(std::ostream& out) const;
  static Tree load(std::istream& in);

 private:
  int alloc_node();
  void free_node(int idx);
  LeafData make_empty_leaf() const;

  Task task_ = Task::kRegression;
  LeafModel model_ = LeafModel::kConstant;
  int d_ = 0;
  int k_ = 0;
  int root_ = -1;
  std::vector<Node> nodes_;
  std::vector<int> free_;
};

int ad_stride(Task task, int n_classes);

/// log pi(T_grow) - log pi(T) for splitting a leaf at the given depth.
double grow_log_prior_ratio_at_depth(const TreePriorConfig& cfg, int depth);

}  // namespace streamtree

#endif  // STREAMTREE_TREE_HPP
