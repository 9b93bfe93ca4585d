#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <functional>
#include <vector>

namespace o2b {

// log(max{x, 1}): the convention used inside bound formulas so that logarithmic
// factors never go negative.
double log_capped(double x);

struct BoundParams {
  int d = 1;
  int T = 1;
  double delta = 0.05;
  double alpha = 1.0;
  double m = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  double r = 1.0;
  double l = 1.0;
  double b = 1.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double eps2 = 0.0;
  int K = 1;
  bool flagged = false;  // set when a hypothesis (T > 4d, T >= 2d) fails
};

// (2 R_T + 2 gamma log(1/delta)) / T.
double bound_theorem1(double regret, double gamma, double delta, int T);

// (22 d + 28 log(T) log(1/delta)) / T; flags (via the optional out-param) when
// the hypothesis T > 4d fails but still returns the value.
double bound_discrete(int d, int T, double delta, bool* flagged = nullptr);

// [d (3 + log(2 + kappa (r b)^2 T / d^2)) + (8 log(T/d) + 8 m) log(1/delta)] / T.
double bound_glm(const BoundParams& p, bool* flagged = nullptr);

// The same excess-risk expression with the smoothing level free:
// d (1 + log(2 + kappa (r b)^2 T / d^2)) / T + 8 max{1, m} log(1/delta) / T + 2 mu.
double glm_bound_with_mu(const BoundParams& p);

enum class LinRegBound { EwaClipped, VawClipped };

// EwaClipped: 8 l^2 d (1 + log(2 + (r b / (2 l d))^2 T)) / T + 64 l^2 log(1/delta) / T.
// VawClipped: [8 l^2 d log(1 + T b^2 r^2 / (4 d^2 l^2)) + 64 max{l^2, b^2 r^2} log(1/delta)] / T.
double bound_linreg(const BoundParams& p, LinRegBound mode);

// Regret-only part of the VawClipped bound: 4 l^2 d log(1 + T b^2 r^2 / (4 d^2 l^2)).
double vaw_regret_bound(int d, int T, double r, double l, double b);

// KL divergence and entropy on the simplex; 0 log 0 = 0, and a positive mass
// point where q vanishes yields +infinity.
double kl_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double entropy(const Eigen::VectorXd& p);

// H(p*) + KL(p_hat || p*) - [2 H(p_hat/2 + p*/2) - H(p_hat)]; nonnegative up to
// round-off for p* strictly positive.
double bregman_entropy_residual(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_star);

// One step of a martingale difference sequence: the increment and its
// conditional second moment given the past.
struct MartingaleStep {
  double x = 0.0;
  double cond_second_moment = 0.0;
};

class Rng;
using MartingaleGen = std::function<void(Rng& rng, int T, std::vector<MartingaleStep>& out)>;

MartingaleGen rademacher_martingale();
MartingaleGen centered_bernoulli_martingale(double q);

// Fraction of trials where sum X_t > lambda (e-2) sum E_{t-1}[X_t^2] + log(1/delta)/lambda.
// Requires lambda in (0, 1/R].
double freedman_violation_rate(const MartingaleGen& gen, double R, double lambda, double delta,
                               int trials, int T, std::uint64_t seed);

struct RiskReport {
  std::vector<double> risks;
  double delta = 0.05;
  double quantile = 0.0;            // nearest-rank (1 - delta) order statistic
  double quantile_std_error = 0.0;  // bootstrap
  double bound = std::numeric_limits<double>::quiet_NaN();
  double violation_rate = std::numeric_limits<double>::quiet_NaN();
  double median = 0.0;
  double mean = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t base_seed = 0;
};

// Nearest-rank quantiles: rank = ceil((1 - delta) n), 1-based, no interpolation.
double nearest_rank_quantile(std::vector<double> values, double level);

// Requires at least 20 replications. `bound` may be NaN (no violation rate).
RiskReport excess_risk_quantiles(const std::vector<double>& risks, double delta, double bound,
                                 std::uint64_t bootstrap_seed = 12345, int bootstrap_rounds = 500);

}  // namespace o2b
