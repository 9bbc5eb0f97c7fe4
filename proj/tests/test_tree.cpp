#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "streamtree/tree.hpp"

using namespace streamtree;

namespace {

int pool_insert(DataPool& pool, Tree& tree, const Eigen::VectorXd& x, double y,
                std::int64_t t) {
  const int id = pool.insert(Observation{x, y, 0, t});
  tree.insert(id, pool);
  return id;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

/// Random tree over fresh uniform points; returns the pool alongside.
struct RandomTree {
  DataPool pool;
  Tree tree;
};

RandomTree make_random_tree(std::mt19937_64& rng, int n_points, int max_grows) {
  RandomTree rt;
  rt.tree = Tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n_points; ++i)
    pool_insert(rt.pool, rt.tree, vec2(unif(rng), unif(rng)), gauss(rng), i);
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd hi = Eigen::VectorXd::Ones(2);
  for (int g = 0; g < max_grows; ++g) {
    std::vector<int> leaves;
    rt.tree.leaf_indices(&leaves);
    const int leaf = leaves[rng() % leaves.size()];
    SplitRule rule;
    rule.dim = static_cast<int>(rng() % 2);
    Eigen::VectorXd a, b;
    rt.tree.leaf_rect(leaf, lo, hi, &a, &b);
    rule.threshold = a[rule.dim] + unif(rng) * (b[rule.dim] - a[rule.dim]);
    const int nr = rt.tree.count_right(leaf, rule, rt.pool);
    const int n = static_cast<int>(rt.tree.node(leaf).leaf.ids.size());
    if (nr >= 2 && n - nr >= 2) rt.tree.grow(leaf, rule, rt.pool);
  }
  return rt;
}

}  // namespace

TEST_CASE("leaf_of: single leaf, rule convention, nested partition") {
  DataPool pool;
  Tree tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  for (int i = 0; i < 20; ++i)
    pool_insert(pool, tree, vec2(i % 7 - 1.0, i % 5 - 3.0), 0.0, i);
  CHECK(tree.leaf_of(vec2(100.0, -100.0)) == tree.root());

  // split (x1 >= 3): x1 means dimension 0 here
  tree.grow(tree.root(), SplitRule{0, 3.0}, pool);
  const int right = tree.node(tree.root()).right;
  const int left = tree.node(tree.root()).left;
  CHECK(tree.leaf_of(vec2(4.0, 0.0)) == right);
  CHECK(tree.leaf_of(vec2(3.0, 0.0)) == right);  // boundary goes right
  CHECK(tree.leaf_of(vec2(2.9, 0.0)) == left);

  // nested: (x1 >= 3) then (x2 < -1) inside the right region
  tree.grow(right, SplitRule{1, -1.0}, pool);
  CHECK(tree.leaf_of(vec2(2.0, -2.0)) == left);  // x1 = 2 stays in (x1 < 3)
  CHECK(tree.leaf_of(vec2(4.0, -2.0)) == tree.node(right).left);
  CHECK(tree.leaf_of(vec2(4.0, 0.0)) == tree.node(right).right);
  CHECK(tree.height() == 3);
}

TEST_CASE("log_tree_prior: closed forms") {
  DataPool pool;
  Tree tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  TreePriorConfig cfg;
  cfg.alpha = 0.95;
  cfg.beta = 2.0;
  CHECK(tree.log_tree_prior(cfg) == doctest::Approx(std::log(0.05)));

  for (int i = 0; i < 10; ++i)
    pool_insert(pool, tree, vec2(i / 10.0, 0.0), 0.0, i);
  tree.grow(tree.root(), SplitRule{0, 0.5}, pool);
  TreePriorConfig cfg2;
  cfg2.alpha = 0.5;
  cfg2.beta = 1.0;
  CHECK(tree.log_tree_prior(cfg2) ==
        doctest::Approx(std::log(0.5) + 2.0 * std::log(1.0 - 0.25)));
  CHECK(tree.height() == 2);
}

TEST_CASE("grow prior ratio: local equals full recomputation on random trees") {
  std::mt19937_64 rng(41);
  TreePriorConfig cfg;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int iter = 0; iter < 50; ++iter) {
    RandomTree rt = make_random_tree(rng, 60, 6);
    std::vector<int> leaves;
    rt.tree.leaf_indices(&leaves);
    const int leaf = leaves[rng() % leaves.size()];
    const double local = rt.tree.grow_log_prior_ratio(leaf, cfg);

    const double before = rt.tree.log_tree_prior(cfg);
    SplitRule rule;
    rule.dim = static_cast<int>(rng() % 2);
    Eigen::VectorXd a, b;
    rt.tree.leaf_rect(leaf, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), &a, &b);
    rule.threshold = a[rule.dim] + unif(rng) * (b[rule.dim] - a[rule.dim]);
    rt.tree.grow(leaf, rule, rt.pool);
    const double after = rt.tree.log_tree_prior(cfg);
    CHECK(local == doctest::Approx(after - before).epsilon(1e-10));
  }
}

TEST_CASE("apply_move: grow then prune restores everything") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int iter = 0; iter < 200; ++iter) {
    RandomTree rt = make_random_tree(rng, 40, 3);
    // retire a few points so priors are non-trivial
    std::vector<int> live = rt.pool.live_ids();
    for (int k = 0; k < 8; ++k) {
      const int id = live[k];
      rt.tree.retire(id, rt.pool, 0.95);
      rt.pool.erase(id);
    }
    std::vector<int> leaves;
    rt.tree.leaf_indices(&leaves);
    const int leaf = leaves[rng() % leaves.size()];
    const Node& nd = rt.tree.node(leaf);
    const LeafPrior prior_before = nd.leaf.prior;
    const RegressionStats active_before = nd.leaf.active_reg;
    std::vector<int> ids_before = nd.leaf.ids;
    std::sort(ids_before.begin(), ids_before.end());

    SplitRule rule;
    rule.dim = static_cast<int>(rng() % 2);
    Eigen::VectorXd a, b;
    rt.tree.leaf_rect(leaf, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), &a, &b);
    rule.threshold = a[rule.dim] + unif(rng) * (b[rule.dim] - a[rule.dim]);
    const int nr = rt.tree.count_right(leaf, rule, rt.pool);
    const int n = static_cast<int>(ids_before.size());
    if (nr < 1 || n - nr < 1) continue;

    rt.tree.grow(leaf, rule, rt.pool);
    rt.tree.prune(leaf);

    const Node& back = rt.tree.node(leaf);
    CHECK(back.is_leaf());
    std::vector<int> ids_after = back.leaf.ids;
    std::sort(ids_after.begin(), ids_after.end());
    CHECK(ids_after == ids_before);
    CHECK((back.leaf.prior.reg.gram - prior_before.reg.gram).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(back.leaf.prior.reg.n - prior_before.reg.n) <= 1e-12);
    CHECK((back.leaf.active_reg.gram - active_before.gram).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(back.leaf.active_reg.yy - active_before.yy) <= 1e-9);
  }
}

TEST_CASE("prune pools retired mass additively") {
  DataPool pool;
  Tree tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  std::vector<int> ids;
  for (int i = 0; i < 12; ++i)
    ids.push_back(pool.insert(Observation{vec2(i < 6 ? 0.2 : 0.8, 0.5), 1.0, 0, i}));
  for (int id : ids) tree.insert(id, pool);
  tree.grow(tree.root(), SplitRule{0, 0.5}, pool);
  const int left = tree.node(tree.root()).left;
  const int right = tree.node(tree.root()).right;
  // retire 2 from the left leaf, 3 from the right
  for (int i = 0; i < 2; ++i) {
    tree.retire(ids[i], pool, 1.0);
    pool.erase(ids[i]);
  }
  for (int i = 6; i < 9; ++i) {
    tree.retire(ids[i], pool, 1.0);
    pool.erase(ids[i]);
  }
  CHECK(tree.node(left).leaf.prior.reg.n == doctest::Approx(2.0));
  CHECK(tree.node(right).leaf.prior.reg.n == doctest::Approx(3.0));
  tree.prune(tree.root());
  CHECK(tree.node(tree.root()).leaf.prior.reg.n == doctest::Approx(5.0));
  CHECK(tree.total_retired_mass() == doctest::Approx(5.0));
}

TEST_CASE("partition invariant and conservation under random move churn") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RandomTree rt = make_random_tree(rng, 80, 0);
  double retired_mass = 0.0;
  for (int step = 0; step < 400; ++step) {
    const int what = static_cast<int>(rng() % 3);
    std::vector<int> leaves;
    rt.tree.leaf_indices(&leaves);
    const int leaf = leaves[rng() % leaves.size()];
    if (what == 0) {  // grow attempt
      SplitRule rule;
      rule.dim = static_cast<int>(rng() % 2);
      Eigen::VectorXd a, b;
      rt.tree.leaf_rect(leaf, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), &a, &b);
      if (b[rule.dim] <= a[rule.dim]) continue;
      rule.threshold = a[rule.dim] + unif(rng) * (b[rule.dim] - a[rule.dim]);
      const int nr = rt.tree.count_right(leaf, rule, rt.pool);
      const int n = static_cast<int>(rt.tree.node(leaf).leaf.ids.size());
      if (nr >= 1 && n - nr >= 1) rt.tree.grow(leaf, rule, rt.pool);
    } else if (what == 1) {  // prune attempt
      const int parent = rt.tree.node(leaf).parent;
      if (parent >= 0 && rt.tree.node(rt.tree.node(parent).left).is_leaf() &&
          rt.tree.node(rt.tree.node(parent).right).is_leaf())
        rt.tree.prune(parent);
    } else {  // retire a point (if any) or insert a new one
      if (!rt.tree.node(leaf).leaf.ids.empty() && rt.pool.size() > 20) {
        const int id = rt.tree.node(leaf).leaf.ids[rng() % rt.tree.node(leaf).leaf.ids.size()];
        rt.tree.retire(id, rt.pool, 1.0);
        rt.pool.erase(id);
        retired_mass += 1.0;
      } else {
        pool_insert(rt.pool, rt.tree, vec2(unif(rng), unif(rng)), unif(rng),
                    1000 + step);
      }
    }
    // invariants after every event
    CHECK(rt.tree.total_active() == static_cast<int>(rt.pool.size()));
    CHECK(rt.tree.total_retired_mass() == doctest::Approx(retired_mass));
    std::vector<int> check_leaves;
    rt.tree.leaf_indices(&check_leaves);
    for (int id : rt.pool.live_ids()) {
      const int home = rt.tree.leaf_of(rt.pool.at(id).x);
      int containing = 0;
      for (int lf : check_leaves) {
        const auto& lids = rt.tree.node(lf).leaf.ids;
        if (std::find(lids.begin(), lids.end(), id) != lids.end()) {
          ++containing;
          CHECK(lf == home);
        }
      }
      CHECK(containing == 1);
    }
  }
}

TEST_CASE("leaf rectangle: nested bounds and uniform threshold sampling") {
  DataPool pool;
  Tree tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  for (int i = 0; i < 10; ++i)
    pool_insert(pool, tree, vec2(i / 10.0, i / 10.0), 0.0, i);
  tree.grow(tree.root(), SplitRule{0, 0.4}, pool);
  const int right = tree.node(tree.root()).right;
  tree.grow(right, SplitRule{1, 0.6}, pool);

  Eigen::VectorXd a, b;
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd hi = Eigen::VectorXd::Ones(2);
  tree.leaf_rect(tree.node(right).right, lo, hi, &a, &b);
  CHECK(a[0] == doctest::Approx(0.4));
  CHECK(b[0] == doctest::Approx(1.0));
  CHECK(a[1] == doctest::Approx(0.6));
  CHECK(b[1] == doctest::Approx(1.0));

  // threshold proposals drawn over this projection are uniform (KS test)
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> draw(a[0], b[0]);
  const int n = 10000;
  std::vector<double> xs(n);
  for (double& v : xs) v = draw(rng);
  std::sort(xs.begin(), xs.end());
  double d_stat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = (xs[i] - a[0]) / (b[0] - a[0]);
    d_stat = std::max({d_stat, std::abs(u - (i + 1.0) / n), std::abs(u - i * 1.0 / n)});
  }
  // KS critical value at alpha = 0.01
  CHECK(d_stat < 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("height convention and node bookkeeping") {
  DataPool pool;
  Tree tree(Task::kRegression, LeafModel::kLinear, 2, 0);
  CHECK(tree.height() == 1);
  CHECK(tree.n_leaves() == 1);
  for (int i = 0; i < 10; ++i)
    pool_insert(pool, tree, vec2(i / 10.0, 0.0), 0.0, i);
  tree.grow(tree.root(), SplitRule{0, 0.5}, pool);
  CHECK(tree.height() == 2);
  CHECK(tree.n_leaves() == 2);
  CHECK(tree.n_nodes_alive() == 3);
  tree.prune(tree.root());
  CHECK(tree.n_leaves() == 1);
  // arena reuses slots: grow again does not enlarge the arena
  const int before = static_cast<int>(tree.n_nodes_alive());
  tree.grow(tree.root(), SplitRule{0, 0.5}, pool);
  tree.prune(tree.root());
  CHECK(tree.n_nodes_alive() == before);
}

TEST_CASE("tree save/load round trip") {
  std::mt19937_64 rng(53);
  RandomTree rt = make_random_tree(rng, 50, 5);
  std::stringstream buf;
  rt.tree.save(buf);
  Tree copy = Tree::load(buf);
  CHECK(copy.n_leaves() == rt.tree.n_leaves());
  CHECK(copy.height() == rt.tree.height());
  CHECK(copy.to_text() == rt.tree.to_text());
  for (int id : rt.pool.live_ids())
    CHECK(copy.leaf_of(rt.pool.at(id).x) == rt.tree.leaf_of(rt.pool.at(id).x));
}
