#include "o2b/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "o2b/errors.hpp"
#include "o2b/rng.hpp"

namespace o2b {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double log_capped(double x) { return std::log(std::max(x, 1.0)); }

double bound_theorem1(double regret, double gamma, double delta, int T) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw std::domain_error("bound_theorem1: delta in (0,1)");
  if (T < 1) throw std::domain_error("bound_theorem1: T must be >= 1");
  return (2.0 * regret + 2.0 * gamma * std::log(1.0 / delta)) / T;
}

double bound_discrete(int d, int T, double delta, bool* flagged) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw std::domain_error("bound_discrete: delta in (0,1)");
  if (flagged != nullptr) *flagged = !(T > 4 * d);
  return (22.0 * d + 28.0 * log_capped(T) * std::log(1.0 / delta)) / T;
}

double bound_glm(const BoundParams& p, bool* flagged) {
  if (!(p.delta > 0.0) || !(p.delta < 1.0)) throw std::domain_error("bound_glm: delta in (0,1)");
  if (flagged != nullptr) *flagged = p.T < 2 * p.d;
  const double rb2 = (p.r * p.b) * (p.r * p.b);
  const double lead = p.d * (3.0 + std::log(2.0 + p.kappa * rb2 * p.T / (p.d * p.d)));
  const double conf = (8.0 * log_capped(static_cast<double>(p.T) / p.d) + 8.0 * p.m) *
                      std::log(1.0 / p.delta);
  return (lead + conf) / p.T;
}

double glm_bound_with_mu(const BoundParams& p) {
  if (!(p.delta > 0.0) || !(p.delta < 1.0)) {
    throw std::domain_error("glm_bound_with_mu: delta in (0,1)");
  }
  const double rb2 = (p.r * p.b) * (p.r * p.b);
  const double lead = p.d * (1.0 + std::log(2.0 + p.kappa * rb2 * p.T / (p.d * p.d)));
  return lead / p.T + 8.0 * std::max(1.0, p.m) * std::log(1.0 / p.delta) / p.T + 2.0 * p.mu;
}

double vaw_regret_bound(int d, int T, double r, double l, double b) {
  return 4.0 * l * l * d * std::log(1.0 + T * b * b * r * r / (4.0 * d * d * l * l));
}

double bound_linreg(const BoundParams& p, LinRegBound mode) {
  if (!(p.delta > 0.0) || !(p.delta < 1.0)) throw std::domain_error("bound_linreg: delta in (0,1)");
  const double l2 = p.l * p.l;
  if (mode == LinRegBound::EwaClipped) {
    const double ratio = p.r * p.b / (2.0 * p.l * p.d);
    const double lead = 8.0 * l2 * p.d / p.T * (1.0 + std::log(2.0 + ratio * ratio * p.T));
    return lead + 64.0 * l2 * std::log(1.0 / p.delta) / p.T;
  }
  const double lead = 2.0 * vaw_regret_bound(p.d, p.T, p.r, p.l, p.b);
  const double conf = 64.0 * std::max(l2, p.b * p.b * p.r * p.r) * std::log(1.0 / p.delta);
  return (lead + conf) / p.T;
}

double kl_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_discrete: size mismatch");
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;  // 0 log 0 = 0
    if (q[i] <= 0.0) return kInf;
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

double entropy(const Eigen::VectorXd& p) {
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) acc -= p[i] * std::log(p[i]);
  }
  return acc;
}

double bregman_entropy_residual(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_star) {
  const Eigen::VectorXd mid = 0.5 * p_hat + 0.5 * p_star;
  return entropy(p_star) + kl_discrete(p_hat, p_star) - (2.0 * entropy(mid) - entropy(p_hat));
}

MartingaleGen rademacher_martingale() {
  return [](Rng& rng, int T, std::vector<MartingaleStep>& out) {
    out.resize(T);
    for (int t = 0; t < T; ++t) out[t] = {rng.bernoulli(0.5) ? 1.0 : -1.0, 1.0};
  };
}

MartingaleGen centered_bernoulli_martingale(double q) {
  return [q](Rng& rng, int T, std::vector<MartingaleStep>& out) {
    out.resize(T);
    const double var = q * (1.0 - q);
    for (int t = 0; t < T; ++t) {
      out[t] = {(rng.bernoulli(q) ? 1.0 : 0.0) - q, var};
    }
  };
}

double freedman_violation_rate(const MartingaleGen& gen, double R, double lambda, double delta,
                               int trials, int T, std::uint64_t seed) {
  if (!(lambda > 0.0) || lambda > 1.0 / R + 1e-15) {
    throw std::domain_error("freedman_violation_rate: lambda must lie in (0, 1/R]");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw std::domain_error("freedman_violation_rate: delta in (0,1)");
  }
  const double e_minus_2 = std::exp(1.0) - 2.0;
  std::vector<MartingaleStep> steps;
  int violations = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, trial));
    gen(rng, T, steps);
    double sum = 0.0, var = 0.0;
    for (const MartingaleStep& s : steps) {
      sum += s.x;
      var += s.cond_second_moment;
    }
    if (sum > lambda * e_minus_2 * var + std::log(1.0 / delta) / lambda) ++violations;
  }
  return static_cast<double>(violations) / trials;
}

double nearest_rank_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw std::invalid_argument("nearest_rank_quantile: empty sample");
  std::sort(values.begin(), values.end());
  const int n = static_cast<int>(values.size());
  int rank = static_cast<int>(std::ceil(level * n));
  rank = std::clamp(rank, 1, n);
  return values[rank - 1];
}

RiskReport excess_risk_quantiles(const std::vector<double>& risks, double delta, double bound,
                                 std::uint64_t bootstrap_seed, int bootstrap_rounds) {
  if (risks.size() < 20) throw ConfigError("excess_risk_quantiles: need >= 20 replications");
  RiskReport rep;
  rep.risks = risks;
  rep.delta = delta;
  rep.quantile = nearest_rank_quantile(risks, 1.0 - delta);
  rep.median = nearest_rank_quantile(risks, 0.5);
  rep.mean = 0.0;
  for (double v : risks) rep.mean += v;
  rep.mean /= static_cast<double>(risks.size());
  rep.bound = bound;
  if (std::isfinite(bound)) {
    int viol = 0;
    for (double v : risks) {
      if (v > bound) ++viol;
    }
    rep.violation_rate = static_cast<double>(viol) / risks.size();
  }

  // Bootstrap standard error of the quantile.
  Rng rng(bootstrap_seed);
  const int n = static_cast<int>(risks.size());
  std::vector<double> resample(n);
  std::vector<double> q(bootstrap_rounds);
  for (int b = 0; b < bootstrap_rounds; ++b) {
    for (int i = 0; i < n; ++i) resample[i] = risks[rng.uniform_int(n)];
    q[b] = nearest_rank_quantile(resample, 1.0 - delta);
  }
  double qm = 0.0;
  for (double v : q) qm += v;
  qm /= bootstrap_rounds;
  double qv = 0.0;
  for (double v : q) qv += (v - qm) * (v - qm);
  rep.quantile_std_error = std::sqrt(qv / (bootstrap_rounds - 1));
  return rep;
}

}  // namespace o2b
