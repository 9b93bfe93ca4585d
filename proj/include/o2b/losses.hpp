#pragma once

#include <functional>
#include <utility>

namespace o2b {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double w) const { return w >= lo && w <= hi; }
  double width() const { return hi - lo; }
};

/// A scalar loss h(w, y) that is alpha-exp-concave in the prediction w, with a
/// declared bound m on |h(w, y) - h(w', y)| over the domain. Derivative handles
/// are analytic per family; finite differences only cross-check them in tests.
struct ExpConcaveLoss {
  double alpha = 0.0;
  double m = 0.0;
  Interval domain{0.0, 0.0};
  std::function<double(double w, double y)> value;
  std::function<double(double w, double y)> d1;  // may be empty
  std::function<double(double w, double y)> d2;  // may be empty

  bool has_derivatives() const { return static_cast<bool>(d1) && static_cast<bool>(d2); }
};

// 4 * max{m, 1/alpha}. Throws std::domain_error on non-positive input.
double gamma_coef(double alpha, double m);

// h(x/2 + y/2) <= h(x)/2 + h(y)/2 - (h(x)-h(y))^2 / (4*gamma) rearranged as a
// residual (right minus left); non-negative up to round-off for any valid loss.
double negative_term_residual(const ExpConcaveLoss& h, double x, double y, double outcome);

/// The loss composed with the midpoint map w -> w/2 + center/2. Keeps the
/// exp-concavity constant of the base loss; the chain rule halves d1 and
/// quarters d2.
struct ShiftedLoss {
  ExpConcaveLoss base;
  double center = 0.0;
  double outcome = 0.0;

  double value(double w) const { return base.value(0.5 * w + 0.5 * center, outcome); }
  double d1(double w) const { return 0.5 * base.d1(0.5 * w + 0.5 * center, outcome); }
  double d2(double w) const { return 0.25 * base.d2(0.5 * w + 0.5 * center, outcome); }

  // View as an ExpConcaveLoss over the widened domain, for grid checks.
  ExpConcaveLoss as_loss() const;
};

ShiftedLoss make_shifted(const ExpConcaveLoss& base, double center, double outcome);

template <class T>
constexpr T clip(T z, T l) {
  return z < -l ? -l : (z > l ? l : z);
}

// -log((1-mu)*p + mu*p0). Requires p >= 0, p0 > 0, mu in [0, 1/2].
double smoothed_log_loss(double p, double p0, double mu);

// Left-hand sides of (clip_l(z)-y)^2 - (z-y)^2 and
// (clip_l(z)-y)^2 - (clip_l(z)/2 + z/2 - y)^2; both <= 0 whenever |y| <= l.
std::pair<double, double> clip_inequality_residuals(double z, double y, double l);

// Registered families ------------------------------------------------------

// Squared loss (w - y)^2 on [-l, l] with |y| <= l: alpha = 1/(8 l^2), m = 4 l^2.
ExpConcaveLoss squared_loss(double l);

// Squared loss restricted to an arbitrary interval with caller-declared
// constants (used by tests that exercise non-default domains).
ExpConcaveLoss squared_loss_on(Interval domain, double alpha, double m);

// Smoothed log loss in the density value w on [0, w_max], reference density
// value p0 baked in: 1-exp-concave exactly, m = log(((1-mu) w_max + mu p0)/(mu p0)).
ExpConcaveLoss smoothed_log_family(double mu, double p0, double w_max);

// Bernoulli negative log-likelihood in the linear predictor z on [-c, c],
// outcomes y in {0, 1}: alpha = exp(-c), m = c.
ExpConcaveLoss logistic_nll_family(double c);

// alpha * d1(w,y)^2 <= d2(w,y) + tol on a uniform grid of interior midpoints.
bool exp_concavity_grid_check(const ExpConcaveLoss& h, double y, int grid_points = 1000,
                              double tol = 1e-8);

// Largest loss difference over a grid of the domain; validates the declared m.
double max_loss_difference_grid(const ExpConcaveLoss& h, double y, int grid_points = 1000);

}  // namespace o2b
