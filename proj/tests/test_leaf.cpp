#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "streamtree/leaf.hpp"

using namespace streamtree;

namespace {

Observation make_obs(const Eigen::VectorXd& x, double y, std::int64_t t = 0) {
  return Observation{x, y, 0, t};
}

std::vector<Observation> random_points(int n, int d, std::mt19937_64& rng,
                                       double noise = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::vector<Observation> out;
  Eigen::VectorXd beta = Eigen::VectorXd::NullaryExpr(d + 1, [&](int) { return unif(rng); });
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(d, [&](int) { return unif(rng); });
    double y = beta[0];
    for (int j = 0; j < d; ++j) y += beta[j + 1] * x[j];
    y += noise * gauss(rng);
    out.push_back(make_obs(x, y, i));
  }
  return out;
}

RegressionStats stats_of(std::span<const Observation> pts, int d) {
  RegressionStats s(d);
  for (const Observation& p : pts) s.add(p.x, p.y);
  return s;
}

}  // namespace

TEST_CASE("retire examples: multinomial count increment") {
  LeafPrior p = LeafPrior::Multinomial(3);
  Eigen::VectorXd x(1);
  x << 0.0;
  Observation obs{x, 0.0, 2, 0};
  retire_into_prior(p, LeafModel::kMultinomial, obs, 1.0);
  CHECK(p.dir.a[0] == doctest::Approx(1.0));
  CHECK(p.dir.a[1] == doctest::Approx(1.0));
  CHECK(p.dir.a[2] == doctest::Approx(2.0));
}

TEST_CASE("retire examples: forgetting n_eff 5 -> 5.5 at lambda 0.9") {
  LeafPrior p = LeafPrior::Regression(1);
  Eigen::VectorXd x(1);
  x << 0.5;
  for (int i = 0; i < 5; ++i) retire_into_prior(p, LeafModel::kLinear, make_obs(x, 1.0), 1.0);
  CHECK(p.reg.n == doctest::Approx(5.0));
  retire_into_prior(p, LeafModel::kLinear, make_obs(x, 1.0), 0.9);
  CHECK(p.reg.n == doctest::Approx(5.5));
}

TEST_CASE("retire examples: constant model running sums y=1 then y=3") {
  LeafPrior p = LeafPrior::Regression(0);
  Eigen::VectorXd x(0);
  retire_into_prior(p, LeafModel::kConstant, make_obs(x, 1.0), 1.0);
  retire_into_prior(p, LeafModel::kConstant, make_obs(x, 3.0), 1.0);
  CHECK(p.reg.gram(0, 0) == doctest::Approx(2.0));
  CHECK(p.reg.xy[0] == doctest::Approx(4.0));
  CHECK(p.reg.yy == doctest::Approx(10.0));
}

TEST_CASE("retire errors: bad lambda and dimension mismatch") {
  LeafPrior p = LeafPrior::Regression(2);
  Eigen::VectorXd x(1);
  x << 0.0;
  CHECK_THROWS_AS(retire_into_prior(p, LeafModel::kLinear, make_obs(x, 0.0), 1.0),
                  std::invalid_argument);
  Eigen::VectorXd x2(2);
  x2 << 0.0, 0.0;
  CHECK_THROWS_AS(retire_into_prior(p, LeafModel::kLinear, make_obs(x2, 0.0), 1.5),
                  std::invalid_argument);
}

TEST_CASE("pool examples: additive rule and identity") {
  std::mt19937_64 rng(1);
  auto pts = random_points(5, 2, rng);
  LeafPrior a = LeafPrior::Regression(2), b = LeafPrior::Regression(2);
  for (int i = 0; i < 2; ++i) retire_into_prior(a, LeafModel::kLinear, pts[i], 1.0);
  for (int i = 2; i < 5; ++i) retire_into_prior(b, LeafModel::kLinear, pts[i], 1.0);
  LeafPrior sum = pool_priors(a, b, LeafModel::kLinear);
  CHECK(sum.reg.n == doctest::Approx(5.0));
  RegressionStats all = stats_of(pts, 2);
  CHECK((sum.reg.gram - all.gram).norm() == doctest::Approx(0.0).epsilon(1e-12));

  LeafPrior empty = LeafPrior::Regression(2);
  LeafPrior same = pool_priors(a, empty, LeafModel::kLinear);
  CHECK((same.reg.gram - a.reg.gram).norm() == 0.0);
  CHECK(same.reg.n == a.reg.n);
}

TEST_CASE("split examples: proportional split, boundary, dirichlet baseline") {
  LeafPrior p = LeafPrior::Regression(1);
  Eigen::VectorXd x(1);
  x << 1.0;
  for (int i = 0; i < 10; ++i) retire_into_prior(p, LeafModel::kLinear, make_obs(x, 2.0), 1.0);
  auto [l, r] = split_prior(p, LeafModel::kLinear, 0.6);
  CHECK(l.reg.n == doctest::Approx(6.0));
  CHECK(r.reg.n == doctest::Approx(4.0));

  auto [l1, r1] = split_prior(p, LeafModel::kLinear, 1.0);
  CHECK((l1.reg.gram - p.reg.gram).norm() == doctest::Approx(0.0));
  CHECK(r1.reg.n == 0.0);
  CHECK(r1.reg.gram.norm() == 0.0);

  LeafPrior d = LeafPrior::Multinomial(2);
  d.dir.a << 2.0, 4.0;
  auto [dl, dr] = split_prior(d, LeafModel::kMultinomial, 0.5);
  CHECK(dl.dir.a[0] == doctest::Approx(1.5));
  CHECK(dl.dir.a[1] == doctest::Approx(2.5));
  CHECK(dr.dir.a[0] == doctest::Approx(1.5));
  CHECK(dr.dir.a[1] == doctest::Approx(2.5));
}

TEST_CASE("split/pool reversibility: 1000 random priors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(0.0, 1.0);
  for (int iter = 0; iter < 1000; ++iter) {
    const int d = 1 + static_cast<int>(rng() % 3);
    auto pts = random_points(3 + static_cast<int>(rng() % 10), d, rng);
    LeafPrior p = LeafPrior::Regression(d);
    for (const auto& obs : pts) retire_into_prior(p, LeafModel::kLinear, obs, 1.0);
    const double alpha = ua(rng);
    auto [l, r] = split_prior(p, LeafModel::kLinear, alpha);
    LeafPrior back = pool_priors(l, r, LeafModel::kLinear);
    CHECK((back.reg.gram - p.reg.gram).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + p.reg.gram.cwiseAbs().maxCoeff()));
    CHECK((back.reg.xy - p.reg.xy).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + p.reg.xy.cwiseAbs().maxCoeff()));
    CHECK(std::abs(back.reg.yy - p.reg.yy) <= 1e-12 * (1.0 + std::abs(p.reg.yy)));
    CHECK(std::abs(back.reg.n - p.reg.n) <= 1e-12 * p.reg.n);
  }
}

TEST_CASE("posterior examples: constant prior mean and residual") {
  // prior {G=2, Xy=4, r=10} from retired points y=1,3
  LeafPrior p = LeafPrior::Regression(0);
  Eigen::VectorXd x(0);
  retire_into_prior(p, LeafModel::kConstant, make_obs(x, 1.0), 1.0);
  retire_into_prior(p, LeafModel::kConstant, make_obs(x, 3.0), 1.0);
  RegressionStats active(0);
  RegressionPosterior post(LeafModel::kConstant, p.reg, active);
  // n = 2 < 5 so improper, but the baseline mean is still Xy/G = 2
  CHECK(!post.proper());
  CHECK(post.mean(x) == doctest::Approx(2.0));
  // residual sum r - Xy^2/G = 10 - 8 = 2
  CHECK(p.reg.yy - p.reg.xy[0] * p.reg.xy[0] / p.reg.gram(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("posterior examples: multinomial Laplace rule") {
  DirichletStats prior(2);
  Eigen::VectorXd counts(2);
  counts << 1.0, 0.0;
  MultinomialPosterior post(prior, counts);
  CHECK(post.probs()[0] == doctest::Approx(2.0 / 3.0));
  CHECK(post.probs()[1] == doctest::Approx(1.0 / 3.0));
  CHECK(post.probs().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("posterior examples: perfect line from retired data only") {
  LeafPrior p = LeafPrior::Regression(1);
  for (double xv : {0.0, 1.0, 2.0, 3.0, 4.0}) {
    Eigen::VectorXd x(1);
    x << xv;
    retire_into_prior(p, LeafModel::kLinear, make_obs(x, 2.0 * xv + 1.0), 1.0);
  }
  RegressionStats active(1);
  RegressionPosterior post(LeafModel::kLinear, p.reg, active);
  REQUIRE(post.proper());
  CHECK(post.beta()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(post.beta()[1] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(post.s2() == doctest::Approx(0.0).epsilon(1e-9));
  Eigen::VectorXd q(1);
  q << 5.0;
  CHECK(post.mean(q) == doctest::Approx(11.0).epsilon(1e-9));
}

TEST_CASE("predictive examples: symmetric data and uniform dirichlet") {
  DirichletStats prior(3);
  MultinomialPosterior mp(prior, Eigen::VectorXd::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(mp.probs()[i] == doctest::Approx(1.0 / 3.0));

  LeafPrior p = LeafPrior::Regression(0);
  Eigen::VectorXd x(0);
  for (int i = 0; i < 4; ++i) {
    retire_into_prior(p, LeafModel::kConstant, make_obs(x, -1.0), 1.0);
    retire_into_prior(p, LeafModel::kConstant, make_obs(x, 1.0), 1.0);
  }
  RegressionPosterior post(LeafModel::kConstant, p.reg, RegressionStats(0));
  REQUIRE(post.proper());
  CHECK(post.mean(x) == doctest::Approx(0.0));
  CHECK(post.variance(x) > 0.0);
}

TEST_CASE("batch-oracle equivalence over 500 random cases") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 500; ++iter) {
    const int d = 1 + static_cast<int>(rng() % 3);
    const int n = 8 + static_cast<int>(rng() % 20);
    auto pts = random_points(n, d, rng);
    const int n_ret = static_cast<int>(rng() % (n - 5));
    LeafPrior p = LeafPrior::Regression(d);
    for (int i = 0; i < n_ret; ++i) retire_into_prior(p, LeafModel::kLinear, pts[i], 1.0);
    RegressionStats active(d);
    for (int i = n_ret; i < n; ++i) active.add(pts[i].x, pts[i].y);

    RegressionPosterior split_post(LeafModel::kLinear, p.reg, active);
    RegressionStats all = stats_of(pts, d);
    RegressionPosterior batch_post(LeafModel::kLinear, RegressionStats(d), all);
    REQUIRE(split_post.proper() == batch_post.proper());
    if (!split_post.proper()) continue;
    CHECK((split_post.beta() - batch_post.beta()).norm() <=
          1e-9 * (1.0 + batch_post.beta().norm()));
    CHECK(std::abs(split_post.s2() - batch_post.s2()) <=
          1e-9 * (1.0 + std::abs(batch_post.s2())));
    CHECK(split_post.dof() == doctest::Approx(batch_post.dof()));
  }
}

TEST_CASE("posterior oracle: beta matches least squares, s2 matches RSS/nu") {
  std::mt19937_64 rng(23);
  auto pts = random_points(40, 3, rng);
  RegressionStats active = stats_of(pts, 3);
  RegressionPosterior post(LeafModel::kLinear, RegressionStats(3), active);
  REQUIRE(post.proper());

  Eigen::MatrixXd X(40, 4);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = 1.0;
    X.row(i).tail(3) = pts[i].x.transpose();
    y[i] = pts[i].y;
  }
  Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const double rss = (y - X * beta).squaredNorm();
  CHECK((post.beta() - beta).norm() <= 1e-8 * (1.0 + beta.norm()));
  CHECK(post.s2() == doctest::Approx(rss / (40 - 4)).epsilon(1e-8));
  CHECK(post.dof() == doctest::Approx(36.0));
}

TEST_CASE("propriety: thresholds and fallbacks") {
  std::mt19937_64 rng(3);
  auto pts = random_points(4, 1, rng);
  RegressionStats active = stats_of(pts, 1);
  // 4 points < 5 -> improper regardless of dof
  CHECK(!RegressionPosterior(LeafModel::kLinear, RegressionStats(1), active).proper());

  // 5 collinear-in-x points: linear singular -> constant fallback
  RegressionStats degen(1);
  Eigen::VectorXd x(1);
  x << 2.0;
  for (int i = 0; i < 6; ++i) degen.add(x, static_cast<double>(i));
  RegressionPosterior post(LeafModel::kLinear, RegressionStats(1), degen);
  CHECK(post.proper());
  CHECK(post.constant_fallback());
  CHECK(post.model_cols() == 1);
  CHECK(post.mean(x) == doctest::Approx(2.5));
}

TEST_CASE("retirement invariance: predictive density unchanged by lambda=1 retire") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int checked = 0;
  for (int iter = 0; iter < 200; ++iter) {
    const int d = 1 + static_cast<int>(rng() % 2);
    auto pts = random_points(12, d, rng);
    LeafPrior prior = LeafPrior::Regression(d);
    for (int i = 0; i < 3; ++i) retire_into_prior(prior, LeafModel::kLinear, pts[i], 1.0);
    std::vector<Observation> active(pts.begin() + 3, pts.end());

    // retire one active point
    const std::size_t pick = rng() % active.size();
    LeafPrior after = prior;
    retire_into_prior(after, LeafModel::kLinear, active[pick], 1.0);
    std::vector<Observation> remaining = active;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));

    RegressionPosterior before_post = posterior_regression(LeafModel::kLinear, prior.reg, active);
    RegressionPosterior after_post = posterior_regression(LeafModel::kLinear, after.reg, remaining);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd q = Eigen::VectorXd::NullaryExpr(d, [&](int) { return gauss(rng); });
      const double yq = gauss(rng);
      const double lb = before_post.log_predictive(q, yq);
      const double la = after_post.log_predictive(q, yq);
      CHECK(std::abs(lb - la) <= 1e-9 * (1.0 + std::abs(lb)));
      ++checked;
    }
  }
  CHECK(checked == 1000);
}

TEST_CASE("forgetting bound: n_eff <= max(n0, 1/(1-lambda))") {
  const double lambda = 0.9;
  LeafPrior p = LeafPrior::Regression(1);
  Eigen::VectorXd x(1);
  x << 0.3;
  double bound = 1.0 / (1.0 - lambda);
  for (int i = 0; i < 200; ++i) {
    retire_into_prior(p, LeafModel::kLinear, make_obs(x, 1.0), lambda);
    CHECK(p.reg.n <= bound + 1e-9);
  }
  CHECK(p.reg.n == doctest::Approx(bound).epsilon(1e-6));
}

TEST_CASE("multinomial forgetting keeps the baseline floor") {
  LeafPrior p = LeafPrior::Multinomial(3);
  Eigen::VectorXd x(1);
  x << 0.0;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    Observation obs{x, 0.0, static_cast<int>(rng() % 3), i};
    retire_into_prior(p, LeafModel::kMultinomial, obs, 0.7);
    for (int j = 0; j < 3; ++j) CHECK(p.dir.a[j] >= 1.0 - 1e-12);
    CHECK(p.dir.retired_mass() <= 1.0 / (1.0 - 0.7) + 1e-9);
  }
  // lambda = 0 resets the history to baseline plus the new point
  retire_into_prior(p, LeafModel::kMultinomial, Observation{x, 0.0, 1, 100}, 0.0);
  CHECK(p.dir.a[0] == doctest::Approx(1.0));
  CHECK(p.dir.a[1] == doctest::Approx(2.0));
  CHECK(p.dir.a[2] == doctest::Approx(1.0));
}

TEST_CASE("log marginal examples: multinomial chain rule") {
  DirichletStats prior(2);
  Eigen::VectorXd one_count(2), two_count(2);
  one_count << 1.0, 0.0;
  two_count << 2.0, 0.0;
  CHECK(log_marginal_multinomial(prior, one_count) == doctest::Approx(std::log(0.5)));
  CHECK(log_marginal_multinomial(prior, two_count) ==
        doctest::Approx(std::log(0.5 * 2.0 / 3.0)));
}

TEST_CASE("log marginal equals chained one-point predictives") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 50; ++iter) {
    const int d = 1 + static_cast<int>(rng() % 2);
    auto pts = random_points(15, d, rng);
    LeafPrior prior = LeafPrior::Regression(d);
    for (int i = 0; i < 4; ++i) retire_into_prior(prior, LeafModel::kLinear, pts[i], 1.0);
    std::vector<Observation> active(pts.begin() + 4, pts.end());

    // oracle: explicit chain of one-point predictives
    double chain = 0.0;
    LeafPrior acc = prior;
    std::vector<Observation> seen;
    for (const Observation& obs : active) {
      RegressionPosterior post = posterior_regression(LeafModel::kLinear, acc.reg, seen);
      chain += post.log_predictive(obs.x, obs.y);
      seen.push_back(obs);
    }
    const double lml = log_marginal_regression(LeafModel::kLinear, prior.reg, active);
    CHECK(lml == doctest::Approx(chain).epsilon(1e-8));

    // fast overload agrees with the pointwise definition
    RegressionStats act(d);
    std::vector<const Observation*> ptrs;
    for (const Observation& obs : active) {
      act.add(obs.x, obs.y);
      ptrs.push_back(&obs);
    }
    const double fast = log_marginal_regression(
        LeafModel::kLinear, prior.reg, act, std::span<const Observation* const>(ptrs));
    CHECK(fast == doctest::Approx(lml).epsilon(1e-8));
  }
}

TEST_CASE("log marginal decomposition: lml(A+B) = lml(A) + lml(B | A absorbed)") {
  std::mt19937_64 rng(17);
  auto pts = random_points(20, 2, rng);
  LeafPrior prior = LeafPrior::Regression(2);
  for (int i = 0; i < 3; ++i) retire_into_prior(prior, LeafModel::kLinear, pts[i], 1.0);
  std::vector<Observation> a(pts.begin() + 3, pts.begin() + 12);
  std::vector<Observation> b(pts.begin() + 12, pts.end());
  std::vector<Observation> ab(pts.begin() + 3, pts.end());

  LeafPrior mid = prior;
  for (const Observation& obs : a) retire_into_prior(mid, LeafModel::kLinear, obs, 1.0);
  const double whole = log_marginal_regression(LeafModel::kLinear, prior.reg, ab);
  const double part = log_marginal_regression(LeafModel::kLinear, prior.reg, a) +
                      log_marginal_regression(LeafModel::kLinear, mid.reg, b);
  CHECK(whole == doctest::Approx(part).epsilon(1e-8));
}

TEST_CASE("student-t predictive density integrates to 1") {
  std::mt19937_64 rng(19);
  auto pts = random_points(12, 1, rng);
  RegressionPosterior post = posterior_regression(LeafModel::kLinear, RegressionStats(1), pts);
  REQUIRE(post.proper());
  Eigen::VectorXd q(1);
  q << 0.5;
  const double mu = post.mean(q);
  double integral = 0.0;
  const double lo = mu - 60.0, hi = mu + 60.0;
  const int steps = 600000;
  const double h = (hi - lo) / steps;
  for (int i = 0; i <= steps; ++i) {
    const double y = lo + i * h;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    integral += w * std::exp(post.log_predictive(q, y));
  }
  integral *= h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}
