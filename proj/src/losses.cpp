#include "o2b/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace o2b {

double gamma_coef(double alpha, double m) {
  if (!(alpha > 0.0) || !(m > 0.0)) {
    throw std::domain_error("gamma_coef: alpha and m must be positive");
  }
  return 4.0 * std::max(m, 1.0 / alpha);
}

double negative_term_residual(const ExpConcaveLoss& h, double x, double y, double outcome) {
  if (!h.domain.contains(x) || !h.domain.contains(y)) {
    throw std::domain_error("negative_term_residual: point outside loss domain");
  }
  const double g = gamma_coef(h.alpha, h.m);
  const double hx = h.value(x, outcome);
  const double hy = h.value(y, outcome);
  const double hmid = h.value(0.5 * x + 0.5 * y, outcome);
  const double diff = hx - hy;
  return 0.5 * hx + 0.5 * hy - diff * diff / (4.0 * g) - hmid;
}

ExpConcaveLoss ShiftedLoss::as_loss() const {
  ExpConcaveLoss out;
  out.alpha = base.alpha;
  out.m = base.m;
  // w/2 + center/2 stays inside the base domain for w in the reflected interval.
  out.domain = Interval{2.0 * base.domain.lo - center, 2.0 * base.domain.hi - center};
  const ShiftedLoss self = *this;
  out.value = [self](double w, double) { return self.value(w); };
  if (base.has_derivatives()) {
    out.d1 = [self](double w, double) { return self.d1(w); };
    out.d2 = [self](double w, double) { return self.d2(w); };
  }
  return out;
}

ShiftedLoss make_shifted(const ExpConcaveLoss& base, double center, double outcome) {
  if (!base.domain.contains(center)) {
    throw std::domain_error("make_shifted: center outside loss domain");
  }
  return ShiftedLoss{base, center, outcome};
}

double smoothed_log_loss(double p, double p0, double mu) {
  if (!(p >= 0.0) || !(p0 > 0.0) || !(mu >= 0.0) || !(mu <= 0.5)) {
    throw std::domain_error("smoothed_log_loss: need p >= 0, p0 > 0, mu in [0, 1/2]");
  }
  const double mixed = (1.0 - mu) * p + mu * p0;
  if (!(mixed > 0.0)) {
    throw std::domain_error("smoothed_log_loss: mixture is not positive");
  }
  return -std::log(mixed);
}

std::pair<double, double> clip_inequality_residuals(double z, double y, double l) {
  if (!(l > 0.0)) throw std::domain_error("clip_inequality_residuals: l must be positive");
  if (std::abs(y) > l) throw std::domain_error("clip_inequality_residuals: |y| exceeds l");
  const double c = clip(z, l);
  const double base = (c - y) * (c - y);
  const double first = base - (z - y) * (z - y);
  const double mid = 0.5 * c + 0.5 * z - y;
  const double second = base - mid * mid;
  return {first, second};
}

ExpConcaveLoss squared_loss_on(Interval domain, double alpha, double m) {
  ExpConcaveLoss h;
  h.alpha = alpha;
  h.m = m;
  h.domain = domain;
  h.value = [](double w, double y) { return (w - y) * (w - y); };
  h.d1 = [](double w, double y) { return 2.0 * (w - y); };
  h.d2 = [](double, double) { return 2.0; };
  return h;
}

ExpConcaveLoss squared_loss(double l) {
  if (!(l > 0.0)) throw std::domain_error("squared_loss: l must be positive");
  // |w - y| <= 2l on [-l, l]^2, so losses live in [0, 4 l^2] and
  // alpha (2(w-y))^2 <= 2 holds with alpha = 1/(8 l^2).
  return squared_loss_on(Interval{-l, l}, 1.0 / (8.0 * l * l), 4.0 * l * l);
}

ExpConcaveLoss smoothed_log_family(double mu, double p0, double w_max) {
  if (!(p0 > 0.0) || !(w_max > 0.0) || !(mu > 0.0) || !(mu <= 0.5)) {
    throw std::domain_error("smoothed_log_family: invalid parameters");
  }
  ExpConcaveLoss h;
  h.alpha = 1.0;  // d2 = d1^2 exactly for the negative log of an affine map
  h.m = std::log(((1.0 - mu) * w_max + mu * p0) / (mu * p0));
  h.domain = Interval{0.0, w_max};
  h.value = [mu, p0](double w, double) { return smoothed_log_loss(w, p0, mu); };
  h.d1 = [mu, p0](double w, double) {
    return -(1.0 - mu) / ((1.0 - mu) * w + mu * p0);
  };
  h.d2 = [mu, p0](double w, double) {
    const double u = (1.0 - mu) * w + mu * p0;
    return (1.0 - mu) * (1.0 - mu) / (u * u);
  };
  return h;
}

namespace {
double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace

ExpConcaveLoss logistic_nll_family(double c) {
  if (!(c > 0.0)) throw std::domain_error("logistic_nll_family: c must be positive");
  ExpConcaveLoss h;
  // d2/d1^2 = s(1-s)/(s-y)^2 is minimized at |z| = c where it equals exp(-c);
  // the value range over [-c, c] is exactly c wide for either label.
  h.alpha = std::exp(-c);
  h.m = c;
  h.domain = Interval{-c, c};
  h.value = [](double z, double y) {
    // -y log s(z) - (1-y) log(1 - s(z)) = log(1 + e^z) - y z, stably.
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
  };
  h.d1 = [](double z, double y) { return sigmoid(z) - y; };
  h.d2 = [](double z, double) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
  };
  return h;
}

bool exp_concavity_grid_check(const ExpConcaveLoss& h, double y, int grid_points, double tol) {
  if (!h.has_derivatives()) {
    throw std::invalid_argument("exp_concavity_grid_check: loss has no derivative handles");
  }
  const double step = h.domain.width() / grid_points;
  for (int i = 0; i < grid_points; ++i) {
    // Interior midpoints only; endpoint smoothness is not assumed.
    const double w = h.domain.lo + (i + 0.5) * step;
    const double g1 = h.d1(w, y);
    if (h.alpha * g1 * g1 > h.d2(w, y) + tol) return false;
  }
  return true;
}

double max_loss_difference_grid(const ExpConcaveLoss& h, double y, int grid_points) {
  const double step = h.domain.width() / grid_points;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < grid_points; ++i) {
    const double v = h.value(h.domain.lo + (i + 0.5) * step, y);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

}  // namespace o2b
