#include "streamtree/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace streamtree {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

RegressionPosterior regression_posterior(const Tree& tree, int leaf) {
  const LeafData& ld = tree.node(leaf).leaf;
  return RegressionPosterior(tree.model(), ld.prior.reg, ld.active_reg);
}

MultinomialPosterior multinomial_posterior(const Tree& tree, int leaf) {
  const LeafData& ld = tree.node(leaf).leaf;
  return MultinomialPosterior(ld.prior.dir, ld.active_counts);
}

double particle_log_predictive(const Tree& tree, const Eigen::VectorXd& x, double y,
                               Task task) {
  const int leaf = tree.leaf_of(x);
  if (task == Task::kClassification)
    return multinomial_posterior(tree, leaf).log_predictive(static_cast<int>(y));
  return regression_posterior(tree, leaf).log_predictive(x, y);
}

}  // namespace

double effective_sample_size(const std::vector<double>& weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

ParticleCloud ParticleCloud::init(const std::vector<Observation>& first_batch,
                                  const CloudConfig& cfg) {
  if (static_cast<int>(first_batch.size()) < cfg.tree_prior.min_leaf)
    throw std::invalid_argument("init: need at least min_leaf observations");
  if (cfg.n_particles < 1) throw std::invalid_argument("init: need N >= 1");
  if (cfg.capacity > 0 && cfg.capacity < cfg.tree_prior.min_leaf)
    throw std::invalid_argument("init: capacity below min_leaf");
  if (cfg.task == Task::kClassification && cfg.policy == DiscardPolicy::kAlc)
    throw std::invalid_argument("ALC discarding requires regression leaves");
  if (cfg.task == Task::kRegression && cfg.policy == DiscardPolicy::kEntropy)
    throw std::invalid_argument("entropy discarding requires classification leaves");

  ParticleCloud cloud;
  cloud.cfg_ = cfg;
  if (cfg.task == Task::kClassification) cloud.cfg_.leaf_model = LeafModel::kMultinomial;
  cloud.rng_.seed(cfg.seed);
  cloud.totals_ = AdTotals(ad_stride(cfg.task, cfg.n_classes));

  const int d = static_cast<int>(first_batch.front().x.size());
  cloud.box_lo_ = first_batch.front().x;
  cloud.box_hi_ = first_batch.front().x;

  std::vector<int> ids;
  for (std::size_t i = 0; i < first_batch.size(); ++i) {
    Observation obs = first_batch[i];
    obs.t = static_cast<std::int64_t>(i);
    cloud.expand_box(obs.x);
    ids.push_back(cloud.pool_.insert(std::move(obs)));
  }
  cloud.t_ = static_cast<std::int64_t>(first_batch.size());

  cloud.particles_.reserve(cfg.n_particles);
  for (int i = 0; i < cfg.n_particles; ++i) {
    Tree tree(cloud.cfg_.task, cloud.cfg_.leaf_model, d, cfg.n_classes);
    for (int id : ids) tree.insert(id, cloud.pool_);
    if (cloud.use_ad()) cloud.refresh_leaf_ad(tree, tree.root());
    cloud.particles_.push_back(std::move(tree));
  }
  return cloud;
}

void ParticleCloud::expand_box(const Eigen::VectorXd& x) {
  box_lo_ = box_lo_.cwiseMin(x);
  box_hi_ = box_hi_.cwiseMax(x);
}

double ParticleCloud::leaf_log_marginal(const Tree& tree, const LeafPrior& prior,
                                        const std::vector<int>& ids) const {
  return leaf_log_marginal(tree, prior, nullptr, ids);
}

double ParticleCloud::leaf_log_marginal(const Tree& tree, const LeafPrior& prior,
                                        const RegressionStats* active,
                                        const std::vector<int>& ids) const {
  if (cfg_.task == Task::kClassification) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(cfg_.n_classes);
    for (int id : ids) counts[pool_.at(id).label] += 1.0;
    return log_marginal_multinomial(prior.dir, counts);
  }
  const RegressionStats& pr = prior.reg;
  const int q = pr.cols();
  const RegressionStats none(q - 1);
  const auto by_arrival = [&](int a, int b) { return pool_.at(a).t < pool_.at(b).t; };
  if (active != nullptr) {
    const LeafModel model = tree.model();
    RegressionPosterior pstate(model, pr, none);
    if (pstate.proper()) {
      RegressionPosterior cstate(model, pr, *active);
      if (cstate.proper() && cstate.model_cols() == pstate.model_cols())
        return cstate.log_partition() - pstate.log_partition();
    } else {
      // improper prior: chain only the earliest points until the running
      // state is proper, then take the closed-form difference against the
      // cached full active statistics; avoids sorting/gathering the whole
      // leaf on every evaluation
      const int qm = model == LeafModel::kLinear ? q : 1;
      int need = std::max(0, static_cast<int>(std::ceil(kMinProperPoints - pr.n)));
      need = std::max(need, qm + 1 - static_cast<int>(std::floor(pr.n))) + 2;
      if (need < static_cast<int>(ids.size())) {
        std::vector<int> first(static_cast<std::size_t>(need));
        std::partial_sort_copy(ids.begin(), ids.end(), first.begin(), first.end(),
                               by_arrival);
        RegressionStats acc = pr;
        double logp = 0.0;
        bool ready = false;
        for (int id : first) {
          RegressionPosterior post(model, acc, none);
          if (post.proper() &&
              (model != LeafModel::kLinear || !post.constant_fallback())) {
            ready = true;
            break;
          }
          const Observation& obs = pool_.at(id);
          logp += post.log_predictive(obs.x, obs.y);
          acc.add(obs.x, obs.y);
        }
        if (ready) {
          RegressionPosterior start(model, acc, none);
          RegressionPosterior end(model, pr, *active);
          if (end.proper() && end.model_cols() == start.model_cols())
            return logp + end.log_partition() - start.log_partition();
        }
      }
    }
  }
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end(), by_arrival);
  std::vector<const Observation*> pts;
  pts.reserve(sorted.size());
  for (int id : sorted) pts.push_back(&pool_.at(id));
  if (active != nullptr)
    return log_marginal_regression(tree.model(), prior.reg, *active, pts);
  return log_marginal_regression(tree.model(), prior.reg, pts);
}

void ParticleCloud::set_point_ad(Tree& tree, int leaf, int pos) {
  LeafData& ld = tree.node(leaf).leaf;
  const int stride = totals_.stride;
  double* slot = &ld.ad[static_cast<std::size_t>(pos) * stride];
  totals_.sub(ld.ids[pos], slot);
  if (cfg_.task == Task::kClassification) {
    const Eigen::VectorXd probs = multinomial_posterior(tree, leaf).probs();
    for (int s = 0; s < stride; ++s) slot[s] = probs[s];
  } else {
    RegressionPosterior post = regression_posterior(tree, leaf);
    Eigen::VectorXd a, b;
    tree.leaf_rect(leaf, box_lo_, box_hi_, &a, &b);
    const double val = alc_reduction(post, a, b, pool_.at(ld.ids[pos]).x,
                                     static_cast<double>(ld.ids.size()));
    slot[0] = std::isfinite(val) ? val : std::numeric_limits<double>::quiet_NaN();
  }
  totals_.add(ld.ids[pos], slot);
}

void ParticleCloud::refresh_leaf_ad(Tree& tree, int leaf) {
  LeafData& ld = tree.node(leaf).leaf;
  const int stride = totals_.stride;
  if (cfg_.task == Task::kClassification) {
    const Eigen::VectorXd probs = multinomial_posterior(tree, leaf).probs();
    for (std::size_t pos = 0; pos < ld.ids.size(); ++pos) {
      double* slot = &ld.ad[pos * stride];
      totals_.sub(ld.ids[pos], slot);
      for (int s = 0; s < stride; ++s) slot[s] = probs[s];
      totals_.add(ld.ids[pos], slot);
    }
  } else {
    RegressionPosterior post = regression_posterior(tree, leaf);
    Eigen::VectorXd a, b;
    tree.leaf_rect(leaf, box_lo_, box_hi_, &a, &b);
    for (std::size_t pos = 0; pos < ld.ids.size(); ++pos) {
      double* slot = &ld.ad[pos * stride];
      totals_.sub(ld.ids[pos], slot);
      const double val = alc_reduction(post, a, b, pool_.at(ld.ids[pos]).x,
                                       static_cast<double>(ld.ids.size()));
      slot[0] = std::isfinite(val) ? val : std::numeric_limits<double>::quiet_NaN();
      totals_.add(ld.ids[pos], slot);
    }
  }
}

void ParticleCloud::subtract_leaf_ad(const Tree& tree, int leaf) {
  const LeafData& ld = tree.node(leaf).leaf;
  for (std::size_t pos = 0; pos < ld.ids.size(); ++pos)
    totals_.sub(ld.ids[pos], &ld.ad[pos * totals_.stride]);
}

void ParticleCloud::subtract_tree_ad(const Tree& tree) {
  std::vector<int> leaves;
  tree.leaf_indices(&leaves);
  for (int leaf : leaves) subtract_leaf_ad(tree, leaf);
}

void ParticleCloud::add_tree_ad(const Tree& tree) {
  std::vector<int> leaves;
  tree.leaf_indices(&leaves);
  for (int leaf : leaves) {
    const LeafData& ld = tree.node(leaf).leaf;
    for (std::size_t pos = 0; pos < ld.ids.size(); ++pos)
      totals_.add(ld.ids[pos], &ld.ad[pos * totals_.stride]);
  }
}

void ParticleCloud::propagate(Tree& tree, int id) {
  const Observation& obs = pool_.at(id);
  const int leaf = tree.insert(id, pool_);
  const Node& nd = tree.node(leaf);
  const std::vector<int>& ids = nd.leaf.ids;
  const int n_active = static_cast<int>(ids.size());
  const int d = tree.input_dim();

  enum { kStay = 0, kGrow = 1, kPrune = 2 };
  double score[3] = {0.0, kNegInf, kNegInf};

  // grow proposal: one sampled (dimension, threshold) pair, no retry
  SplitRule rule;
  bool grow_ok = false;
  std::vector<int> left_ids, right_ids;
  {
    std::uniform_int_distribution<int> pick_dim(0, d - 1);
    rule.dim = pick_dim(rng_);
    Eigen::VectorXd a, b;
    tree.leaf_rect(leaf, box_lo_, box_hi_, &a, &b);
    if (b[rule.dim] > a[rule.dim]) {
      std::uniform_real_distribution<double> pick_thr(a[rule.dim], b[rule.dim]);
      rule.threshold = pick_thr(rng_);
      for (int pid : ids)
        (pool_.at(pid).x[rule.dim] >= rule.threshold ? right_ids : left_ids)
            .push_back(pid);
      grow_ok = static_cast<int>(left_ids.size()) >= cfg_.tree_prior.min_leaf &&
                static_cast<int>(right_ids.size()) >= cfg_.tree_prior.min_leaf;
    }
  }

  const int parent = nd.parent;
  const bool prune_ok =
      parent >= 0 && tree.node(tree.node(parent).left).is_leaf() &&
      tree.node(tree.node(parent).right).is_leaf();

  const bool regression = cfg_.task != Task::kClassification;
  double lml_leaf = 0.0;
  if (grow_ok || prune_ok)
    lml_leaf = leaf_log_marginal(tree, nd.leaf.prior,
                                 regression ? &nd.leaf.active_reg : nullptr, ids);

  if (grow_ok) {
    const double alpha = static_cast<double>(left_ids.size()) / n_active;
    auto [lp, rp] = split_prior(nd.leaf.prior, tree.model(), alpha);
    double lml_children;
    if (regression) {
      RegressionStats left_act(d);
      for (int pid : left_ids) {
        const Observation& p = pool_.at(pid);
        left_act.add(p.x, p.y);
      }
      RegressionStats right_act = nd.leaf.active_reg;
      right_act.add_scaled(left_act, -1.0);
      lml_children = leaf_log_marginal(tree, lp, &left_act, left_ids) +
                     leaf_log_marginal(tree, rp, &right_act, right_ids);
    } else {
      lml_children = leaf_log_marginal(tree, lp, left_ids) +
                     leaf_log_marginal(tree, rp, right_ids);
    }
    score[kGrow] = std::log(1.0 / 3.0) +
                   tree.grow_log_prior_ratio(leaf, cfg_.tree_prior) +
                   lml_children - lml_leaf;
  }
  if (prune_ok) {
    const int sib = tree.node(parent).left == leaf ? tree.node(parent).right
                                                   : tree.node(parent).left;
    const LeafData& sd = tree.node(sib).leaf;
    const double lml_sib =
        leaf_log_marginal(tree, sd.prior, regression ? &sd.active_reg : nullptr,
                          sd.ids);
    LeafPrior merged_prior = pool_priors(nd.leaf.prior, sd.prior, tree.model());
    std::vector<int> merged_ids = ids;
    merged_ids.insert(merged_ids.end(), sd.ids.begin(), sd.ids.end());
    RegressionStats merged_act;
    const RegressionStats* merged_act_ptr = nullptr;
    if (regression) {
      merged_act = nd.leaf.active_reg;
      merged_act.add_scaled(sd.active_reg, 1.0);
      merged_act_ptr = &merged_act;
    }
    const double lml_merged =
        leaf_log_marginal(tree, merged_prior, merged_act_ptr, merged_ids);
    score[kPrune] =
        std::log(1.0 / 3.0) -
        grow_log_prior_ratio_at_depth(cfg_.tree_prior, tree.node(parent).depth) +
        lml_merged - lml_leaf - lml_sib;
  }
  // unavailable move mass is reassigned to stay
  const double p_stay = 1.0 - (grow_ok + prune_ok) / 3.0;
  score[kStay] = std::log(p_stay);

  const double mx = std::max({score[0], score[1], score[2]});
  double w[3], wsum = 0.0;
  for (int k = 0; k < 3; ++k) {
    w[k] = std::isfinite(score[k]) ? std::exp(score[k] - mx) : 0.0;
    wsum += w[k];
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng_) * wsum;
  int move = kStay;
  if (u >= w[kStay]) move = (u < w[kStay] + w[kGrow]) ? kGrow : kPrune;

  if (move == kGrow) {
    if (use_ad()) subtract_leaf_ad(tree, leaf);
    auto [li, ri] = tree.grow(leaf, rule, pool_);
    if (use_ad()) {
      refresh_leaf_ad(tree, li);
      refresh_leaf_ad(tree, ri);
    }
  } else if (move == kPrune) {
    if (use_ad()) {
      subtract_leaf_ad(tree, tree.node(parent).left);
      subtract_leaf_ad(tree, tree.node(parent).right);
    }
    tree.prune(parent);
    if (use_ad()) refresh_leaf_ad(tree, parent);
  } else {
    // stay: only the new point's statistic needs computing
    if (use_ad())
      set_point_ad(tree, leaf, static_cast<int>(tree.node(leaf).leaf.ids.size()) - 1);
  }
}

void ParticleCloud::update(const Observation& obs_in) {
  const int n = cfg_.n_particles;
  Observation obs = obs_in;
  obs.t = t_;
  expand_box(obs.x);

  // 1. one-step predictive weights
  std::vector<double> logw(n);
  for (int i = 0; i < n; ++i)
    logw[i] = particle_log_predictive(
        particles_[i], obs.x,
        cfg_.task == Task::kClassification ? obs.label : obs.y, cfg_.task);
  const double mx = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(n);
  double wsum = 0.0;
  if (std::isfinite(mx)) {
    for (int i = 0; i < n; ++i) {
      w[i] = std::exp(logw[i] - mx);
      wsum += w[i];
    }
  }
  if (!(wsum > 0.0)) {
    // all particles assign zero density: degrade to uniform resampling
    std::fill(w.begin(), w.end(), 1.0);
    wsum = static_cast<double>(n);
    ++degeneracy_;
  }
  last_ess_ = effective_sample_size(w);

  // 2. resample
  std::vector<double> cum(n);
  std::partial_sum(w.begin(), w.end(), cum.begin());
  std::vector<int> counts(n, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (cfg_.systematic_resampling) {
    const double step = wsum / n;
    double u = unif(rng_) * step;
    int j = 0;
    for (int i = 0; i < n; ++i) {
      while (cum[j] < u) ++j;
      ++counts[j];
      u += step;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double u = unif(rng_) * wsum;
      const auto it = std::lower_bound(cum.begin(), cum.end(), u);
      ++counts[std::min<int>(static_cast<int>(it - cum.begin()), n - 1)];
    }
  }

  if (use_ad())
    for (int i = 0; i < n; ++i)
      if (counts[i] == 0) subtract_tree_ad(particles_[i]);

  std::vector<Tree> next;
  next.reserve(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 1; c < counts[i]; ++c) {
      next.push_back(particles_[i]);  // duplicate
      if (use_ad()) add_tree_ad(next.back());
    }
    if (counts[i] > 0) next.push_back(std::move(particles_[i]));
  }
  particles_ = std::move(next);

  // 3. insert and propagate
  const int id = pool_.insert(std::move(obs));
  for (Tree& tree : particles_) propagate(tree, id);

  // 4. retirement once over capacity
  if (cfg_.capacity > 0 && static_cast<std::int64_t>(pool_.size()) > cfg_.capacity) {
    const int rid = select_retiree(pool_, totals_, cfg_.policy, rng_);
    for (Tree& tree : particles_) {
      if (use_ad()) {
        const int leaf = tree.leaf_of(pool_.at(rid).x);
        const LeafData& ld = tree.node(leaf).leaf;
        const auto it = std::find(ld.ids.begin(), ld.ids.end(), rid);
        const auto pos = static_cast<std::size_t>(it - ld.ids.begin());
        totals_.sub(rid, &ld.ad[pos * totals_.stride]);
      }
      tree.retire(rid, pool_, cfg_.lambda);
    }
    totals_.clear_id(rid);
    pool_.erase(rid);
  }

  ++t_;
  // resync aggregated AD totals occasionally to stop rounding drift
  if (use_ad() && t_ % 4096 == 0) totals_ = rebuild_ad_totals();
}

Prediction ParticleCloud::predict(const Eigen::VectorXd& x) const {
  Prediction out;
  const int n = cfg_.n_particles;
  if (cfg_.task == Task::kClassification) {
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(cfg_.n_classes);
    for (const Tree& tree : particles_)
      probs += multinomial_posterior(tree, tree.leaf_of(x)).probs();
    out.probs = probs / n;
    return out;
  }
  double mean = 0.0, second = 0.0;
  for (const Tree& tree : particles_) {
    RegressionPosterior post = regression_posterior(tree, tree.leaf_of(x));
    const double m = post.mean(x);
    const double v = post.variance(x);
    mean += m;
    second += v + m * m;
  }
  mean /= n;
  out.mean = mean;
  out.variance = second / n - mean * mean;
  if (out.variance < 0.0) out.variance = 0.0;
  return out;
}

double ParticleCloud::log_predictive_density(const Eigen::VectorXd& x, double y) const {
  double mx = kNegInf;
  std::vector<double> lp(particles_.size());
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    lp[i] = particle_log_predictive(particles_[i], x, y, cfg_.task);
    mx = std::max(mx, lp[i]);
  }
  if (!std::isfinite(mx)) return kNegInf;
  double s = 0.0;
  for (double v : lp) s += std::exp(v - mx);
  return mx + std::log(s / static_cast<double>(particles_.size()));
}

double ParticleCloud::mean_height() const {
  double h = 0.0;
  for (const Tree& tree : particles_) h += tree.height();
  return h / static_cast<double>(particles_.size());
}

int ParticleCloud::max_nodes_alive() const {
  int m = 0;
  for (const Tree& tree : particles_) m = std::max(m, tree.n_nodes_alive());
  return m;
}

AdTotals ParticleCloud::rebuild_ad_totals() const {
  AdTotals fresh(totals_.stride);
  fresh.ensure(static_cast<int>(pool_.capacity_slots()) - 1);
  for (const Tree& tree : particles_) {
    std::vector<int> leaves;
    tree.leaf_indices(&leaves);
    for (int leaf : leaves) {
      const LeafData& ld = tree.node(leaf).leaf;
      for (std::size_t pos = 0; pos < ld.ids.size(); ++pos)
        fresh.add(ld.ids[pos], &ld.ad[pos * fresh.stride]);
    }
  }
  return fresh;
}

}  // namespace streamtree
