#include "streamtree/discard.hpp"

#include <cmath>
#include <limits>

namespace streamtree {

double rect_integral(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const Eigen::VectorXd& gx, double c) {
  const int m = static_cast<int>(a.size());
  Eigen::VectorXd len = b - a;
  const double area = m == 0 ? 1.0 : len.prod();
  if (m == 0) return area * c * c;

  // products of side lengths excluding one index
  Eigen::VectorXd area_wo(m);
  for (int i = 0; i < m; ++i) {
    double p = 1.0;
    for (int k = 0; k < m; ++k)
      if (k != i) p *= len[k];
    area_wo[i] = p;
  }
  Eigen::VectorXd d2(m), d3(m);
  for (int i = 0; i < m; ++i) {
    d2[i] = b[i] * b[i] - a[i] * a[i];
    d3[i] = b[i] * b[i] * b[i] - a[i] * a[i] * a[i];
  }

  double val = area * c * c;
  for (int i = 0; i < m; ++i) {
    val += c * area_wo[i] * gx[i] * d2[i];
    val += area_wo[i] * gx[i] * gx[i] / 3.0 * d3[i];
    for (int j = 0; j < i; ++j) {
      double p = 1.0;
      for (int k = 0; k < m; ++k)
        if (k != i && k != j) p *= len[k];
      val += p * gx[i] * gx[j] / 2.0 * d2[i] * d2[j];
    }
  }
  return val;
}

double alc_reduction(const RegressionPosterior& post, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& b, const Eigen::VectorXd& x,
                     double n_active) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (!post.proper()) return kInf;
  const int m_model = post.model_cols() - 1;
  const double n = n_active > 0.0 ? n_active : post.n_total();
  if (n <= static_cast<double>(m_model) + 3.0) return kInf;

  const Eigen::VectorXd g = post.gram_solve(post.augment(x));
  const double quad = post.augment(x).dot(g);
  const double c = 1.0 / n + g[0];
  Eigen::VectorXd gx = Eigen::VectorXd::Zero(a.size());
  for (int i = 0; i < m_model; ++i) gx[i] = g[i + 1];

  const double integral = rect_integral(a, b, gx, c);
  const double factor =
      post.s2() / ((n - m_model - 3.0) * (1.0 + 1.0 / n + quad));
  const double val = factor * integral;
  return val < 0.0 ? 0.0 : val;
}

double entropy_of(const Eigen::VectorXd& probs) {
  double h = 0.0;
  for (int i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return h;
}

double AdTotals::score(int id, DiscardPolicy policy) const {
  if (id >= static_cast<int>(count.size()) || count[id] <= 0)
    return std::numeric_limits<double>::infinity();
  if (policy == DiscardPolicy::kEntropy) {
    Eigen::VectorXd probs(stride);
    for (int s = 0; s < stride; ++s)
      probs[s] = sum[static_cast<std::size_t>(id) * stride + s] / count[id];
    const double total = probs.sum();
    if (total <= 0.0) return std::numeric_limits<double>::infinity();
    return entropy_of(probs / total);
  }
  return sum[static_cast<std::size_t>(id) * stride] / count[id];
}

int select_retiree(const DataPool& pool, const AdTotals& totals, DiscardPolicy policy,
                   std::mt19937_64& rng) {
  if (pool.size() == 0) throw std::logic_error("select_retiree: empty pool");
  switch (policy) {
    case DiscardPolicy::kHistorical:
      return pool.oldest();
    case DiscardPolicy::kRandom: {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      return pool.live_ids()[pick(rng)];
    }
    case DiscardPolicy::kAlc:
    case DiscardPolicy::kEntropy: {
      int best = -1;
      double best_score = std::numeric_limits<double>::infinity();
      for (int id : pool.live_ids()) {
        const double s = totals.score(id, policy);
        const bool better =
            best < 0 || s < best_score ||
            (s == best_score && pool.at(id).t < pool.at(best).t);
        if (better) {
          best = id;
          best_score = s;
        }
      }
      return best;
    }
  }
  return pool.oldest();
}

}  // namespace streamtree
