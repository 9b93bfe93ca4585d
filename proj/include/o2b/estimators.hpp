#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "o2b/losses.hpp"
#include "o2b/online.hpp"
#include "o2b/posterior.hpp"

namespace o2b {

using Fn1 = std::function<double(const Eigen::VectorXd&)>;

// Generalized linear model: a conditional density p(y | x^T theta) given by its
// negative log-likelihood in the linear predictor, with curvature bound kappa,
// covariate/parameter norm bounds (r, b), reference density p0 and smoothing mu.
struct GlmSpec {
  std::function<double(double z, double y)> neg_log_density;  // g_y(z)
  std::function<double(double z, double y)> density;          // p(y|z)
  double kappa = 0.0;
  double r = 1.0;
  double b = 1.0;
  int d = 1;
  std::function<double(double y, const Eigen::VectorXd& x)> p0;
  double mu = 0.0;
  double m_cap = std::numeric_limits<double>::infinity();  // declared per-round loss range

  GlmSpec with_mu(double new_mu) const;
};

// Two-class logistic model: kappa = 1/4, p0 = 1/2, mu = d/T.
GlmSpec logistic_spec(double r, double b, int d, int T);

// Unit-variance Gaussian linear model p(y|z) = pi^{-1/2} exp(-(y-z)^2) with the
// two-bump reference density centered at +-rb; kappa = 2, mu defaults to d/T.
GlmSpec gaussian_linmodel_spec(double r, double b, int d, int T);

// Deterministic stand-in for "optimize mu": grid {d/T * 2^k, k=0..6} scored by
// the closed-form excess-risk expression.
double select_mu_gaussian_linmodel(int d, int T, double r, double b, double kappa, double delta);

/// Drives a PosteriorState through the online protocol. snapshot() is called
/// exactly once per round, before the update, and records the collapsed
/// per-round statistics used by the averaged predictors.
class PosteriorLearner {
 public:
  struct Options {
    double m_declared = std::numeric_limits<double>::infinity();
    bool track_m = false;
    double class_radius = std::numeric_limits<double>::infinity();
    int snapshot_samples = 100;  // thinned draws per round (Metropolis)
  };

  PosteriorLearner(PosteriorState state, Options opt);

  double center(const Eigen::VectorXd& x, double y) { return state_.mean_prediction(x, y); }
  void update(const Eigen::VectorXd& x, double y, double c) { state_.ewa_update({x, y, c}); }
  SnapshotFn snapshot();
  std::function<double(double, const Eigen::VectorXd&, double)> plain_loss_fn() const {
    return state_.model().loss;
  }
  double round_m(const Eigen::VectorXd& x, double y, double center) const;
  double declared_m() const { return opt_.m_declared; }

  const std::vector<Eigen::VectorXd>& weight_history() const { return weight_history_; }
  const std::vector<Eigen::VectorXd>& mean_param_history() const { return mean_param_history_; }
  const std::vector<Eigen::MatrixXd>& sample_history() const { return sample_history_; }
  PosteriorState& state() { return state_; }
  const PosteriorState& state() const { return state_; }

 private:
  PosteriorState state_;
  Options opt_;
  std::vector<Eigen::VectorXd> weight_history_;
  std::vector<Eigen::VectorXd> mean_param_history_;
  std::vector<Eigen::MatrixXd> sample_history_;
};

// Finite aggregation --------------------------------------------------------

struct AggregationResult {
  OnlineTrajectory traj;
  std::vector<Fn1> dictionary;
  Eigen::VectorXd avg_weights;                  // round-averaged posterior weights
  std::vector<Eigen::VectorXd> round_weights;   // one entry per round

  double predict(const Eigen::VectorXd& x) const;
};

// EWA at the loss's own rate on shifted losses, uniform prior over the
// dictionary. Throws ConfigError for an empty dictionary.
AggregationResult aggregate_finite(const std::vector<Fn1>& dictionary, const Stream& stream,
                                   const ExpConcaveLoss& loss);

// Conditional density estimation --------------------------------------------

struct DensityResult {
  OnlineTrajectory traj;
  std::shared_ptr<const Eigen::MatrixXd> atoms;  // grid atoms or pooled MCMC draws
  Eigen::VectorXd avg_weights;
  GlmSpec spec;

  // (1 - mu) * round-averaged posterior-mean density + mu * p0.
  double density(double y, const Eigen::VectorXd& x) const;
  double raw_density(double y, const Eigen::VectorXd& x) const;  // without the mixture
  double log_loss(double y, const Eigen::VectorXd& x) const;
};

DensityResult conditional_density_estimator(const GlmSpec& spec, const Stream& stream,
                                            Backend backend, const IntegratorConfig& cfg,
                                            std::uint64_t seed);

// Discrete distribution estimation ------------------------------------------

struct DiscreteDistConfig {
  int d = 2;
  int T = 0;           // declared sample size; validation uses the data itself
  double mu = -1.0;    // < 0 selects the default d / (even sample size)
  int resolution = 0;  // 0 selects a per-dimension default

  int resolution_or_default() const;
};

struct DiscreteResult {
  Eigen::VectorXd p_bar;      // final estimate: (1-mu) p_bar_raw + mu/d
  Eigen::VectorXd p_bar_raw;  // suffix-averaged posterior means
  Eigen::VectorXi counts;     // first-half symbol counts
  Prior prior;                // data-dependent Dirichlet
  double mu = 0.0;
  OnlineTrajectory traj;      // second-half rounds
};

// Symbols are 0-based: values in [0, d). Uses the first half of the (even,
// rounded down) sample to build the prior, runs shifted-loss EWA on the rest.
DiscreteResult discrete_dist_estimator(const std::vector<int>& samples,
                                       const DiscreteDistConfig& cfg);

// Linear regression ----------------------------------------------------------

struct LinRegConfig {
  enum class Mode { EwaClipped, VawClipped };
  Mode mode = Mode::EwaClipped;
  int d = 1;
  double r = 1.0;
  double l = 1.0;
  double b = 1.0;
  double sigma2 = -1.0;  // < 0 selects the mode default

  double sigma2_or_default() const;
};

/// Ridge-style recursive state: inv_gram is the inverse of
/// sum_{s<t} X_s X_s^T / 4 + I / sigma2, vec is sum_{s<t} Ytilde_s X_s / 2.
/// Snapshots hold the pre-update copies, one per consumed round.
struct VawState {
  Eigen::MatrixXd inv_gram;
  Eigen::VectorXd vec;
  double sigma2 = 0.0;
  double l = 0.0;
  struct Snapshot {
    Eigen::MatrixXd inv_gram;
    Eigen::VectorXd vec;
  };
  std::vector<Snapshot> snapshots;
  std::vector<Eigen::VectorXd> xs;  // covariate history, for audits
};

VawState vaw_init(int d, double sigma2, double l);

// x^T (inv of (gram + x x^T / 4)) vec via a rank-one update of the cached inverse.
double vaw_raw_predict(const Eigen::MatrixXd& inv_gram, const Eigen::VectorXd& vec,
                       const Eigen::VectorXd& x);

// Consumes one round: records the pre-update snapshot, forms Ytilde from the
// clipped round prediction, and folds x into the inverse Gram and vec.
void vaw_update(VawState& state, const Eigen::VectorXd& x, double y);

// (1/T) sum_t clip_l of the round-t prediction at x.
double vaw_average_predict(const VawState& state, const Eigen::VectorXd& x);

// Max deviation of inv_gram times the directly recomputed regularized Gram
// from the identity.
double vaw_audit(const VawState& state);

struct VawResult {
  VawState state;
  OnlineTrajectory traj;

  double predict(const Eigen::VectorXd& x) const { return vaw_average_predict(state, x); }
};

VawResult linreg_vaw(const Stream& stream, const LinRegConfig& cfg);

struct LinRegEwaResult {
  OnlineTrajectory traj;
  std::shared_ptr<const Eigen::MatrixXd> atoms;
  Eigen::VectorXd avg_weights;
  double l = 0.0;

  double predict(const Eigen::VectorXd& x) const;
};

LinRegEwaResult linreg_ewa(const Stream& stream, const LinRegConfig& cfg, Backend backend,
                           const IntegratorConfig& icfg, std::uint64_t seed);

}  // namespace o2b
