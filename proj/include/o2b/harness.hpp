#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "o2b/analysis.hpp"
#include "o2b/errors.hpp"
#include "o2b/online.hpp"

namespace o2b {

// Data models ----------------------------------------------------------------

/// Generating distributions with explicitly controlled (r, l) bounds. The
/// covariate law is uniform over a finite atom set, which makes population
/// risks exact finite sums.
struct DataModel {
  enum class Kind { Multinomial, Logistic, GaussLinModel, BoundedRegression, Replay };
  enum class Noise { Coin, Uniform };  // bounded-regression outcome law
  Kind kind = Kind::Multinomial;
  Eigen::VectorXd p_star;      // multinomial cell probabilities
  Eigen::VectorXd theta_star;  // regression/classification parameter
  double r = 1.0;
  double l = 1.0;
  bool misspecified = false;
  Noise noise = Noise::Coin;
  double noise_halfwidth = 0.0;  // uniform noise half-width, set at model build
  Eigen::MatrixXd x_atoms;  // one covariate per row, uniform law
  std::string replay_path;

  // Conditional mean of Y given x (regression models).
  double cond_mean(const Eigen::VectorXd& x) const;
  // Conditional variance of Y given x (regression models).
  double cond_var(const Eigen::VectorXd& x) const;
};

// Deterministic atom sets with max row norm exactly r.
Eigen::MatrixXd covariate_atoms(int d, double r, int n);

DataModel multinomial_model(const Eigen::VectorXd& p_star);
DataModel logistic_model(const Eigen::VectorXd& theta_star, double r, int n_atoms);
DataModel gauss_linmodel(const Eigen::VectorXd& theta_star, double r, int n_atoms);
// Bounded outcomes with mean theta*^T x (atoms rescaled so the mean stays in
// [-0.95 l, 0.95 l]); the misspecified variant bends the mean through a tanh.
// Coin noise puts Y on {-l, +l}; Uniform adds U[-a, a] noise with the largest
// a keeping |Y| <= l over the atom set.
DataModel bounded_regression_model(const Eigen::VectorXd& theta_star, double r, double l,
                                   int n_atoms, bool misspecified,
                                   DataModel::Noise noise = DataModel::Noise::Coin);
DataModel replay_model(const std::string& path, double r, double l);

// T i.i.d. samples, deterministic given the seed.
Stream generate(const DataModel& model, int T, std::uint64_t seed);

// Risk evaluation --------------------------------------------------------------

struct RiskValue {
  double value = 0.0;
  double std_error = 0.0;  // zero for closed forms
  bool closed_form = true;
};

enum class RiskMethod { ClosedForm, MonteCarlo };

// Log-loss risk E[-log q(Y|X)] of a conditional density.
RiskValue true_risk_logloss(const DataModel& model,
                            const std::function<double(double y, const Eigen::VectorXd& x)>& q,
                            RiskMethod method = RiskMethod::ClosedForm, int mc_samples = 1000000,
                            std::uint64_t seed = 9001);

// Squared risk E[(g(X) - Y)^2] of a point predictor.
RiskValue true_risk_squared(const DataModel& model,
                            const std::function<double(const Eigen::VectorXd& x)>& g,
                            RiskMethod method = RiskMethod::ClosedForm, int mc_samples = 1000000,
                            std::uint64_t seed = 9001);

// Minimize theta^T Sigma theta - 2 c^T theta over the radius-b ball: the
// unconstrained solution when it fits, otherwise the boundary solution found
// by bisection on the ridge multiplier.
Eigen::VectorXd constrained_quadratic_min(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& c,
                                          double b);

// Best-in-class risks over the radius-b parameter ball (exact atom sums).
double comparator_optimum_squared(const DataModel& model, double b,
                                  Eigen::VectorXd* argmin = nullptr);
double comparator_optimum_logistic(const DataModel& model, double b,
                                   Eigen::VectorXd* argmin = nullptr);
double comparator_optimum_gausslin(const DataModel& model, double b,
                                   Eigen::VectorXd* argmin = nullptr);

// Gauss-Hermite rule for integrals against exp(-u^2): nodes and weights with
// sum(weights) = sqrt(pi).
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

// Experiments -------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment = "discrete";
  // generator
  int d = 2;
  int T = 200;
  double r = 1.0;
  double b = 1.0;
  double l = 1.0;
  Eigen::VectorXd p_star;      // empty: drawn per replication
  Eigen::VectorXd theta_star;  // empty: drawn per replication
  std::string noise = "coin";  // coin | uniform (bounded regression)
  bool misspecified = false;
  int K = 5;
  int x_atoms = 16;
  // run
  int replications = 100;
  double delta = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;
  // backend
  std::string backend = "auto";  // auto | grid | metropolis
  int grid_resolution = 0;       // 0: per-experiment default
  int mcmc_steps = 4000;
  int burn_in = 1000;
  double proposal_scale = 0.5;
  // output
  std::string out_path = "out";

  bool operator==(const ExperimentConfig& o) const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string emit_config(const ExperimentConfig& cfg);

// 17-significant-digit decimal rendering used by all emitted files.
std::string fmt17(double v);

struct ReplicationRow {
  int replication = 0;
  std::uint64_t seed = 0;
  double excess_risk = 0.0;
  double regret = 0.0;
  double m_observed = 0.0;
  std::string flags;  // "m_flag", "fail", or empty
};

struct ExperimentOutput {
  RiskReport report;
  std::vector<ReplicationRow> rows;
  std::string csv_path;
  std::string json_path;
  std::string bound_name;
  double quantile_level = 0.0;  // order-statistic level used in the summary
  int failures = 0;
  int m_flags = 0;
  double m_observed_max = 0.0;
  bool inapplicable = false;  // m-flag rate above 1%
};

// Runs config.replications independent replications (worker pool, ordered
// deterministic reduce) and writes risks.csv + summary.json under out_path.
// The freedman and lemma-suite experiments emit their own file sets.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

// Ordered parallel map: body(i) for i in [0, n), at most `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& body);

}  // namespace o2b
