#include <sstream>

#include "streamtree/detail/binio.hpp"
#include "streamtree/smc.hpp"

namespace streamtree {

using detail::get;
using detail::get_eigen_mat;
using detail::get_eigen_vec;
using detail::get_str;
using detail::get_vec;
using detail::put;
using detail::put_eigen;
using detail::put_str;
using detail::put_vec;

namespace {

constexpr std::uint32_t kMagic = 0x53544331;  // "STC1"

void put_obs(std::ostream& out, const Observation& obs) {
  put_eigen(out, obs.x);
  put(out, obs.y);
  put(out, obs.label);
  put(out, obs.t);
}

Observation get_obs(std::istream& in) {
  Observation obs;
  obs.x = get_eigen_vec(in);
  obs.y = get<double>(in);
  obs.label = get<int>(in);
  obs.t = get<std::int64_t>(in);
  return obs;
}

void put_reg(std::ostream& out, const RegressionStats& s) {
  put(out, s.n);
  put_eigen(out, s.gram);
  put_eigen(out, s.xy);
  put(out, s.yy);
}

RegressionStats get_reg(std::istream& in) {
  RegressionStats s;
  s.n = get<double>(in);
  s.gram = get_eigen_mat(in);
  s.xy = get_eigen_vec(in);
  s.yy = get<double>(in);
  return s;
}

void put_leafdata(std::ostream& out, const LeafData& ld) {
  put_vec(out, ld.ids);
  put_reg(out, ld.prior.reg);
  put_eigen(out, Eigen::VectorXd(ld.prior.dir.a));
  put_reg(out, ld.active_reg);
  put_eigen(out, Eigen::VectorXd(ld.active_counts));
  put_vec(out, ld.ad);
}

LeafData get_leafdata(std::istream& in) {
  LeafData ld;
  ld.ids = get_vec<int>(in);
  ld.prior.reg = get_reg(in);
  ld.prior.dir.a = get_eigen_vec(in);
  ld.active_reg = get_reg(in);
  ld.active_counts = get_eigen_vec(in);
  ld.ad = get_vec<double>(in);
  return ld;
}

}  // namespace

void DataPool::save(std::ostream& out) const {
  put<std::uint64_t>(out, slots_.size());
  for (const Slot& slot : slots_) {
    put(out, slot.live);
    put_obs(out, slot.obs);
  }
  put_vec(out, free_);
  put_vec(out, live_);
  put_vec(out, pos_);
}

void DataPool::load(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  slots_.clear();
  slots_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Slot slot;
    slot.live = get<bool>(in);
    slot.obs = get_obs(in);
    slots_.push_back(std::move(slot));
  }
  free_ = get_vec<int>(in);
  live_ = get_vec<int>(in);
  pos_ = get_vec<int>(in);
}

void Tree::save(std::ostream& out) const {
  put(out, static_cast<int>(task_));
  put(out, static_cast<int>(model_));
  put(out, d_);
  put(out, k_);
  put(out, root_);
  put<std::uint64_t>(out, nodes_.size());
  for (const Node& nd : nodes_) {
    put(out, nd.parent);
    put(out, nd.left);
    put(out, nd.right);
    put(out, nd.depth);
    put(out, nd.rule.dim);
    put(out, nd.rule.threshold);
    put_leafdata(out, nd.leaf);
  }
  put_vec(out, free_);
}

Tree Tree::load(std::istream& in) {
  Tree tree;
  tree.task_ = static_cast<Task>(get<int>(in));
  tree.model_ = static_cast<LeafModel>(get<int>(in));
  tree.d_ = get<int>(in);
  tree.k_ = get<int>(in);
  tree.root_ = get<int>(in);
  const auto n = get<std::uint64_t>(in);
  tree.nodes_.resize(n);
  for (Node& nd : tree.nodes_) {
    nd.parent = get<int>(in);
    nd.left = get<int>(in);
    nd.right = get<int>(in);
    nd.depth = get<int>(in);
    nd.rule.dim = get<int>(in);
    nd.rule.threshold = get<double>(in);
    nd.leaf = get_leafdata(in);
  }
  tree.free_ = get_vec<int>(in);
  return tree;
}

void ParticleCloud::save(std::ostream& out) const {
  put(out, kMagic);
  put(out, static_cast<int>(cfg_.task));
  put(out, static_cast<int>(cfg_.leaf_model));
  put(out, cfg_.n_particles);
  put(out, cfg_.capacity);
  put(out, cfg_.lambda);
  put(out, static_cast<int>(cfg_.policy));
  put(out, cfg_.tree_prior.alpha);
  put(out, cfg_.tree_prior.beta);
  put(out, cfg_.tree_prior.min_leaf);
  put(out, cfg_.n_classes);
  put(out, cfg_.systematic_resampling);
  put(out, cfg_.seed);

  std::ostringstream rng_state;
  rng_state << rng_;
  put_str(out, rng_state.str());

  put_eigen(out, box_lo_);
  put_eigen(out, box_hi_);
  put(out, t_);
  put(out, last_ess_);
  put(out, degeneracy_);
  put(out, totals_.stride);
  put_vec(out, totals_.sum);
  put_vec(out, totals_.count);

  pool_.save(out);
  put<std::uint64_t>(out, particles_.size());
  for (const Tree& tree : particles_) tree.save(out);
}

ParticleCloud ParticleCloud::load(std::istream& in) {
  if (get<std::uint32_t>(in) != kMagic)
    throw std::runtime_error("not a streamtree checkpoint");
  ParticleCloud cloud;
  cloud.cfg_.task = static_cast<Task>(get<int>(in));
  cloud.cfg_.leaf_model = static_cast<LeafModel>(get<int>(in));
  cloud.cfg_.n_particles = get<int>(in);
  cloud.cfg_.capacity = get<std::int64_t>(in);
  cloud.cfg_.lambda = get<double>(in);
  cloud.cfg_.policy = static_cast<DiscardPolicy>(get<int>(in));
  cloud.cfg_.tree_prior.alpha = get<double>(in);
  cloud.cfg_.tree_prior.beta = get<double>(in);
  cloud.cfg_.tree_prior.min_leaf = get<int>(in);
  cloud.cfg_.n_classes = get<int>(in);
  cloud.cfg_.systematic_resampling = get<bool>(in);
  cloud.cfg_.seed = get<std::uint64_t>(in);

  std::istringstream rng_state(get_str(in));
  rng_state >> cloud.rng_;

  cloud.box_lo_ = get_eigen_vec(in);
  cloud.box_hi_ = get_eigen_vec(in);
  cloud.t_ = get<std::int64_t>(in);
  cloud.last_ess_ = get<double>(in);
  cloud.degeneracy_ = get<int>(in);
  cloud.totals_ = AdTotals(get<int>(in));
  cloud.totals_.sum = get_vec<double>(in);
  cloud.totals_.count = get_vec<int>(in);

  cloud.pool_.load(in);
  const auto n = get<std::uint64_t>(in);
  cloud.particles_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) cloud.particles_.push_back(Tree::load(in));
  return cloud;
}

}  // namespace streamtree
