#include "streamtree/leaf.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace streamtree {

namespace {

Eigen::VectorXd augmented(const Eigen::VectorXd& x, int q) {
  Eigen::VectorXd xa(q);
  xa[0] = 1.0;
  for (int i = 1; i < q; ++i) xa[i] = x[i - 1];
  return xa;
}

double log_normal_pdf(double y, double mu, double sd) {
  const double z = (y - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_student_t_pdf(double y, double mu, double scale2, double nu) {
  const double z2 = (y - mu) * (y - mu) / scale2;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi * scale2) -
         0.5 * (nu + 1.0) * std::log1p(z2 / nu);
}

}  // namespace

void RegressionStats::add(const Eigen::VectorXd& x, double y) {
  const int q = cols();
  Eigen::VectorXd xa = augmented(x, q);
  gram.noalias() += xa * xa.transpose();
  xy.noalias() += xa * y;
  yy += y * y;
  n += 1.0;
}

void RegressionStats::remove(const Eigen::VectorXd& x, double y) {
  const int q = cols();
  Eigen::VectorXd xa = augmented(x, q);
  gram.noalias() -= xa * xa.transpose();
  xy.noalias() -= xa * y;
  yy -= y * y;
  n -= 1.0;
}

void RegressionStats::scale(double f) {
  gram *= f;
  xy *= f;
  yy *= f;
  n *= f;
}

void RegressionStats::add_scaled(const RegressionStats& other, double f) {
  gram.noalias() += f * other.gram;
  xy.noalias() += f * other.xy;
  yy += f * other.yy;
  n += f * other.n;
}

void retire_into_prior(LeafPrior& prior, LeafModel model, const Observation& obs,
                       double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("forgetting factor must lie in [0,1]");
  if (model == LeafModel::kMultinomial) {
    Eigen::VectorXd& a = prior.dir.a;
    if (obs.label < 0 || obs.label >= a.size())
      throw std::invalid_argument("class label out of range");
    // Decay only the informative mass above the (1,...,1) baseline.
    a = Eigen::VectorXd::Ones(a.size()) + lambda * (a.array() - 1.0).matrix();
    a[obs.label] += 1.0;
  } else {
    if (obs.x.size() + 1 != prior.reg.cols())
      throw std::invalid_argument("observation dimension mismatch");
    prior.reg.scale(lambda);
    prior.reg.add(obs.x, obs.y);
  }
}

LeafPrior pool_priors(const LeafPrior& left, const LeafPrior& right, LeafModel model) {
  LeafPrior out;
  if (model == LeafModel::kMultinomial) {
    if (left.dir.classes() != right.dir.classes())
      throw std::invalid_argument("class count mismatch");
    out.dir.a = left.dir.a + right.dir.a -
                Eigen::VectorXd::Ones(left.dir.classes());
  } else {
    if (left.reg.cols() != right.reg.cols())
      throw std::invalid_argument("prior dimension mismatch");
    out.reg = left.reg;
    out.reg.add_scaled(right.reg, 1.0);
  }
  return out;
}

std::pair<LeafPrior, LeafPrior> split_prior(const LeafPrior& prior, LeafModel model,
                                            double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("split fraction must lie in [0,1]");
  LeafPrior left, right;
  if (model == LeafModel::kMultinomial) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(prior.dir.classes());
    left.dir.a = ones + alpha * (prior.dir.a - ones);
    right.dir.a = ones + (1.0 - alpha) * (prior.dir.a - ones);
  } else {
    left.reg = RegressionStats(prior.reg.cols() - 1);
    right.reg = RegressionStats(prior.reg.cols() - 1);
    left.reg.add_scaled(prior.reg, alpha);
    right.reg.add_scaled(prior.reg, 1.0 - alpha);
  }
  return {std::move(left), std::move(right)};
}

RegressionPosterior::RegressionPosterior(LeafModel model, const RegressionStats& prior,
                                         const RegressionStats& active) {
  const int q_full = prior.cols();
  n_ = prior.n + active.n;
  baseline_mean_ = 0.0;
  if (n_ > 0.0) {
    const double g00 = prior.gram(0, 0) + active.gram(0, 0);
    if (g00 > 0.0) baseline_mean_ = (prior.xy[0] + active.xy[0]) / g00;
  }
  if (n_ < kMinProperPoints) return;  // improper: too little combined mass

  // Try the requested model first, degrading linear -> constant on
  // insufficient dof or an ill-conditioned Grahm matrix.
  for (int q : (model == LeafModel::kLinear) ? std::vector<int>{q_full, 1}
                                             : std::vector<int>{1}) {
    const double nu = n_ - static_cast<double>(q);
    if (nu < 1.0) continue;
    Eigen::MatrixXd g = prior.gram.topLeftCorner(q, q) + active.gram.topLeftCorner(q, q);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd ldiag = llt.matrixL().toDenseMatrix().diagonal();
    const double dmin = ldiag.minCoeff(), dmax = ldiag.maxCoeff();
    if (!(dmin > 0.0) ||
        (dmax / dmin) * (dmax / dmin) > kMaxGramCondition)
      continue;
    Eigen::VectorXd xyq = prior.xy.head(q) + active.xy.head(q);
    beta_ = llt.solve(xyq);
    rss_ = (prior.yy + active.yy) - xyq.dot(beta_);
    if (rss_ < 0.0) rss_ = 0.0;  // rounding on near-perfect fits
    q_ = q;
    nu_ = nu;
    s2_ = rss_ / nu_;
    llt_ = std::move(llt);
    half_logdet_ = ldiag.array().log().sum();
    proper_ = true;
    fallback_ = (model == LeafModel::kLinear && q == 1);
    return;
  }
}

Eigen::VectorXd RegressionPosterior::augment(const Eigen::VectorXd& x) const {
  return augmented(x, q_);
}

double RegressionPosterior::mean(const Eigen::VectorXd& x) const {
  if (!proper_) return baseline_mean_;
  return beta_.dot(augmented(x, q_));
}

Eigen::VectorXd RegressionPosterior::gram_solve(const Eigen::VectorXd& v) const {
  return llt_.solve(v);
}

double RegressionPosterior::gram_quad(const Eigen::VectorXd& x) const {
  Eigen::VectorXd xa = augmented(x, q_);
  return xa.dot(llt_.solve(xa));
}

double RegressionPosterior::variance(const Eigen::VectorXd& x) const {
  if (!proper_) return kBaselineSd * kBaselineSd;
  const double scale2 = s2_ * (1.0 + gram_quad(x));
  // Student-t variance; infinite for nu <= 2, report the scale then.
  return nu_ > 2.0 ? scale2 * nu_ / (nu_ - 2.0) : scale2;
}

double RegressionPosterior::log_predictive(const Eigen::VectorXd& x, double y) const {
  if (!proper_) return log_normal_pdf(y, baseline_mean_, kBaselineSd);
  const double mu = beta_.dot(augmented(x, q_));
  double scale2 = s2_ * (1.0 + gram_quad(x));
  constexpr double kMinScale2 = 1e-12;
  if (scale2 < kMinScale2) scale2 = kMinScale2;  // noiseless exact fits
  return log_student_t_pdf(y, mu, scale2, nu_);
}

double RegressionPosterior::log_partition() const {
  // log of (2pi)^{-nu/2} |G|^{-1/2} Gamma(nu/2) (rss/2)^{-nu/2}; only
  // differences across nested statistics are ever used.
  constexpr double kMinRss = 1e-12;
  const double rss = rss_ < kMinRss ? kMinRss : rss_;
  return -0.5 * nu_ * std::log(2.0 * std::numbers::pi) - half_logdet_ +
         std::lgamma(0.5 * nu_) - 0.5 * nu_ * std::log(0.5 * rss);
}

MultinomialPosterior::MultinomialPosterior(const DirichletStats& prior,
                                           const Eigen::VectorXd& counts) {
  Eigen::VectorXd total = prior.a + counts;
  probs_ = total / total.sum();
}

double MultinomialPosterior::log_predictive(int label) const {
  return std::log(probs_[label]);
}

double MultinomialPosterior::entropy() const {
  double h = 0.0;
  for (int i = 0; i < probs_.size(); ++i)
    if (probs_[i] > 0.0) h -= probs_[i] * std::log(probs_[i]);
  return h;
}

double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               std::span<const Observation* const> active) {
  RegressionStats acc = prior;
  RegressionStats none(prior.cols() - 1);
  double logp = 0.0;
  std::size_t i = 0;
  for (; i < active.size(); ++i) {
    RegressionPosterior post(model, acc, none);
    if (post.proper() && !post.constant_fallback()) break;
    if (post.proper() && model == LeafModel::kConstant) break;
    logp += post.log_predictive(active[i]->x, active[i]->y);
    acc.add(active[i]->x, active[i]->y);
  }
  if (i == active.size()) return logp;
  // Closed form for the rest: difference of log partition functions.
  RegressionPosterior start(model, acc, none);
  for (; i < active.size(); ++i) acc.add(active[i]->x, active[i]->y);
  RegressionPosterior end(model, acc, none);
  if (!end.proper() || end.model_cols() != start.model_cols()) {
    // Conditioning degraded along the way; fall back to the plain chain.
    // (Rare: near-collinear active sets.)
    acc = prior;
    logp = 0.0;
    for (const Observation* obs : active) {
      RegressionPosterior post(model, acc, none);
      logp += post.log_predictive(obs->x, obs->y);
      acc.add(obs->x, obs->y);
    }
    return logp;
  }
  return logp + end.log_partition() - start.log_partition();
}

double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               const RegressionStats& active,
                               std::span<const Observation* const> points) {
  RegressionStats none(prior.cols() - 1);
  RegressionPosterior pstate(model, prior, none);
  if (pstate.proper()) {
    RegressionPosterior cstate(model, prior, active);
    if (cstate.proper() && cstate.model_cols() == pstate.model_cols())
      return cstate.log_partition() - pstate.log_partition();
  }
  return log_marginal_regression(model, prior, points);
}

double log_marginal_multinomial(const DirichletStats& prior,
                                const Eigen::VectorXd& counts) {
  const double a_sum = prior.a.sum();
  const double n = counts.sum();
  double logp = std::lgamma(a_sum) - std::lgamma(a_sum + n);
  for (int j = 0; j < counts.size(); ++j)
    logp += std::lgamma(prior.a[j] + counts[j]) - std::lgamma(prior.a[j]);
  return logp;
}

RegressionPosterior posterior_regression(LeafModel model, const RegressionStats& prior,
                                         std::span<const Observation> active) {
  RegressionStats act(prior.cols() - 1);
  for (const Observation& obs : active) act.add(obs.x, obs.y);
  return RegressionPosterior(model, prior, act);
}

double log_marginal_regression(LeafModel model, const RegressionStats& prior,
                               std::span<const Observation> active) {
  std::vector<const Observation*> ptrs;
  ptrs.reserve(active.size());
  for (const Observation& obs : active) ptrs.push_back(&obs);
  return log_marginal_regression(model, prior, std::span<const Observation* const>(ptrs));
}

}  // namespace streamtree
