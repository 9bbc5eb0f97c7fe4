#include "streamtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace streamtree {

int ad_stride(Task task, int n_classes) {
  return task == Task::kClassification ? n_classes : 1;
}

Tree::Tree(Task task, LeafModel model, int d_input, int n_classes)
    : task_(task), model_(model), d_(d_input), k_(n_classes) {
  root_ = alloc_node();
  nodes_[root_].depth = 0;
}

LeafData Tree::make_empty_leaf() const {
  LeafData leaf;
  if (task_ == Task::kClassification) {
    leaf.prior = LeafPrior::Multinomial(k_);
    leaf.active_counts = Eigen::VectorXd::Zero(k_);
  } else {
    leaf.prior = LeafPrior::Regression(d_);
    leaf.active_reg = RegressionStats(d_);
  }
  return leaf;
}

int Tree::alloc_node() {
  int idx;
  if (!free_.empty()) {
    idx = free_.back();
    free_.pop_back();
    nodes_[idx] = Node{};
  } else {
    idx = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
  }
  nodes_[idx].leaf = make_empty_leaf();
  return idx;
}

void Tree::free_node(int idx) {
  nodes_[idx] = Node{};
  free_.push_back(idx);
}

int Tree::leaf_of(const Eigen::VectorXd& x) const {
  int idx = root_;
  while (!nodes_[idx].is_leaf()) {
    const SplitRule& r = nodes_[idx].rule;
    idx = x[r.dim] >= r.threshold ? nodes_[idx].right : nodes_[idx].left;
  }
  return idx;
}

void Tree::leaf_rect(int leaf, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                     Eigen::VectorXd* a, Eigen::VectorXd* b) const {
  *a = lo;
  *b = hi;
  int idx = leaf;
  while (nodes_[idx].parent >= 0) {
    const int parent = nodes_[idx].parent;
    const SplitRule& r = nodes_[parent].rule;
    if (nodes_[parent].right == idx)
      (*a)[r.dim] = std::max((*a)[r.dim], r.threshold);
    else
      (*b)[r.dim] = std::min((*b)[r.dim], r.threshold);
    idx = parent;
  }
  // Clamp inverted intervals from box shrink races to empty-at-a-point.
  for (int i = 0; i < a->size(); ++i)
    if ((*b)[i] < (*a)[i]) (*b)[i] = (*a)[i];
}

namespace {
double log_p_split(const TreePriorConfig& cfg, int depth) {
  return std::log(cfg.alpha) - cfg.beta * std::log1p(static_cast<double>(depth));
}
double log_1m_p_split(const TreePriorConfig& cfg, int depth) {
  return std::log1p(-cfg.alpha * std::pow(1.0 + depth, -cfg.beta));
}
}  // namespace

double Tree::log_tree_prior(const TreePriorConfig& cfg) const {
  double logp = 0.0;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    const Node& nd = nodes_[idx];
    if (nd.is_leaf()) {
      logp += log_1m_p_split(cfg, nd.depth);
    } else {
      logp += log_p_split(cfg, nd.depth);
      stack.push_back(nd.left);
      stack.push_back(nd.right);
    }
  }
  return logp;
}

double grow_log_prior_ratio_at_depth(const TreePriorConfig& cfg, int depth) {
  return log_p_split(cfg, depth) + 2.0 * log_1m_p_split(cfg, depth + 1) -
         log_1m_p_split(cfg, depth);
}

double Tree::grow_log_prior_ratio(int leaf, const TreePriorConfig& cfg) const {
  return grow_log_prior_ratio_at_depth(cfg, nodes_[leaf].depth);
}

int Tree::insert(int id, const DataPool& pool) {
  const Observation& obs = pool.at(id);
  const int leaf = leaf_of(obs.x);
  LeafData& ld = nodes_[leaf].leaf;
  ld.ids.push_back(id);
  const int stride = ad_stride(task_, k_);
  for (int s = 0; s < stride; ++s)
    ld.ad.push_back(std::numeric_limits<double>::quiet_NaN());
  if (task_ == Task::kClassification)
    ld.active_counts[obs.label] += 1.0;
  else
    ld.active_reg.add(obs.x, obs.y);
  return leaf;
}

void Tree::retire(int id, const DataPool& pool, double lambda) {
  const Observation& obs = pool.at(id);
  const int leaf = leaf_of(obs.x);
  LeafData& ld = nodes_[leaf].leaf;
  auto it = std::find(ld.ids.begin(), ld.ids.end(), id);
  if (it == ld.ids.end()) throw std::logic_error("retire: id not in its leaf");
  const int pos = static_cast<int>(it - ld.ids.begin());
  const int stride = ad_stride(task_, k_);
  // swap-remove from ids and the parallel AD cache
  ld.ids[pos] = ld.ids.back();
  ld.ids.pop_back();
  for (int s = 0; s < stride; ++s)
    ld.ad[pos * stride + s] = ld.ad[(ld.ids.size()) * stride + s];
  ld.ad.resize(ld.ids.size() * stride);
  if (task_ == Task::kClassification)
    ld.active_counts[obs.label] -= 1.0;
  else
    ld.active_reg.remove(obs.x, obs.y);
  retire_into_prior(ld.prior, model_, obs, lambda);
}

int Tree::count_right(int leaf, const SplitRule& rule, const DataPool& pool) const {
  int n = 0;
  for (int id : nodes_[leaf].leaf.ids)
    if (pool.at(id).x[rule.dim] >= rule.threshold) ++n;
  return n;
}

std::pair<int, int> Tree::grow(int leaf, const SplitRule& rule, const DataPool& pool) {
  if (!nodes_[leaf].is_leaf()) throw std::logic_error("grow: not a leaf");
  const int li = alloc_node();
  const int ri = alloc_node();
  Node& parent = nodes_[leaf];
  LeafData moved = std::move(parent.leaf);
  parent.leaf = LeafData{};
  parent.rule = rule;
  parent.left = li;
  parent.right = ri;

  Node& lnode = nodes_[li];
  Node& rnode = nodes_[ri];
  lnode.parent = rnode.parent = leaf;
  lnode.depth = rnode.depth = parent.depth + 1;

  for (int id : moved.ids) {
    const Observation& obs = pool.at(id);
    LeafData& ld = obs.x[rule.dim] >= rule.threshold ? rnode.leaf : lnode.leaf;
    ld.ids.push_back(id);
    if (task_ == Task::kClassification)
      ld.active_counts[obs.label] += 1.0;
    else
      ld.active_reg.add(obs.x, obs.y);
  }
  const double total = static_cast<double>(moved.ids.size());
  const double alpha =
      total > 0.0 ? static_cast<double>(lnode.leaf.ids.size()) / total : 0.5;
  auto [lp, rp] = split_prior(moved.prior, model_, alpha);
  lnode.leaf.prior = std::move(lp);
  rnode.leaf.prior = std::move(rp);

  const int stride = ad_stride(task_, k_);
  lnode.leaf.ad.assign(lnode.leaf.ids.size() * stride,
                       std::numeric_limits<double>::quiet_NaN());
  rnode.leaf.ad.assign(rnode.leaf.ids.size() * stride,
                       std::numeric_limits<double>::quiet_NaN());
  return {li, ri};
}

void Tree::prune(int internal) {
  Node& nd = nodes_[internal];
  if (nd.is_leaf()) throw std::logic_error("prune: not an internal node");
  Node& lc = nodes_[nd.left];
  Node& rc = nodes_[nd.right];
  if (!lc.is_leaf() || !rc.is_leaf())
    throw std::logic_error("prune: children are not both leaves");

  LeafData merged;
  merged.ids = std::move(lc.leaf.ids);
  merged.ids.insert(merged.ids.end(), rc.leaf.ids.begin(), rc.leaf.ids.end());
  merged.prior = pool_priors(lc.leaf.prior, rc.leaf.prior, model_);
  if (task_ == Task::kClassification) {
    merged.active_counts = lc.leaf.active_counts + rc.leaf.active_counts;
  } else {
    merged.active_reg = lc.leaf.active_reg;
    merged.active_reg.add_scaled(rc.leaf.active_reg, 1.0);
  }
  merged.ad.assign(merged.ids.size() * ad_stride(task_, k_),
                   std::numeric_limits<double>::quiet_NaN());

  free_node(nd.left);
  free_node(nd.right);
  nd.left = nd.right = -1;
  nd.rule = SplitRule{};
  nd.leaf = std::move(merged);
}

int Tree::n_leaves() const {
  int n = 0;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    if (nodes_[idx].is_leaf()) {
      ++n;
    } else {
      stack.push_back(nodes_[idx].left);
      stack.push_back(nodes_[idx].right);
    }
  }
  return n;
}

int Tree::n_nodes_alive() const {
  return static_cast<int>(nodes_.size() - free_.size());
}

int Tree::height() const {
  int h = 0;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    if (nodes_[idx].is_leaf()) {
      h = std::max(h, nodes_[idx].depth + 1);
    } else {
      stack.push_back(nodes_[idx].left);
      stack.push_back(nodes_[idx].right);
    }
  }
  return h;
}

double Tree::total_retired_mass() const {
  double mass = 0.0;
  std::vector<int> leaves;
  leaf_indices(&leaves);
  for (int idx : leaves) {
    const LeafData& ld = nodes_[idx].leaf;
    mass += task_ == Task::kClassification ? ld.prior.dir.retired_mass()
                                           : ld.prior.reg.n;
  }
  return mass;
}

int Tree::total_active() const {
  int n = 0;
  std::vector<int> leaves;
  leaf_indices(&leaves);
  for (int idx : leaves) n += static_cast<int>(nodes_[idx].leaf.ids.size());
  return n;
}

void Tree::leaf_indices(std::vector<int>* out) const {
  out->clear();
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    if (nodes_[idx].is_leaf()) {
      out->push_back(idx);
    } else {
      stack.push_back(nodes_[idx].left);
      stack.push_back(nodes_[idx].right);
    }
  }
}

std::vector<int> Tree::leaf_ids_by_arrival(int leaf, const DataPool& pool) const {
  std::vector<int> ids = nodes_[leaf].leaf.ids;
  std::sort(ids.begin(), ids.end(),
            [&](int a, int b) { return pool.at(a).t < pool.at(b).t; });
  return ids;
}

namespace {
void render(const Tree& tree, int idx, int indent, std::ostringstream& out) {
  const Node& nd = tree.node(idx);
  out << std::string(static_cast<std::size_t>(indent) * 2, ' ');
  if (nd.is_leaf()) {
    const double mass = tree.task() == Task::kClassification
                            ? nd.leaf.prior.dir.retired_mass()
                            : nd.leaf.prior.reg.n;
    out << "leaf depth=" << nd.depth << " active=" << nd.leaf.ids.size()
        << " retired=" << mass << "\n";
  } else {
    out << "split x" << nd.rule.dim << " @ " << nd.rule.threshold << "\n";
    render(tree, nd.left, indent + 1, out);
    render(tree, nd.right, indent + 1, out);
  }
}
}  // namespace

std::string Tree::to_text() const {
  std::ostringstream out;
  render(*this, root_, 0, out);
  return out.str();
}

}  // namespace streamtree
