#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "o2b/errors.hpp"

namespace o2b {

enum class PriorKind { FiniteUniform, FiniteWeighted, GaussianIsotropic, Dirichlet };

struct Prior {
  PriorKind kind = PriorKind::FiniteUniform;
  int size = 0;                    // K for finite priors, d otherwise
  Eigen::VectorXd weights;         // finite-weighted
  double sigma2 = 0.0;             // gaussian
  Eigen::VectorXd concentration;   // dirichlet parameters

  static Prior finite_uniform(int K);
  static Prior finite_weighted(const Eigen::VectorXd& w);
  static Prior gaussian_isotropic(double sigma2, int d);
  static Prior dirichlet(const Eigen::VectorXd& params);

  // Unnormalized log density at a parameter point (gaussian and dirichlet only).
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& p) const;
};

enum class Backend { ExactFinite, SimplexGrid, DenseGrid, Metropolis };

struct IntegratorConfig {
  int grid_resolution = 256;   // points per simplex/box axis
  int mcmc_steps = 4000;
  int burn_in = 1000;
  double proposal_scale = 0.5;

  void validate() const;
};

struct QuadratureGrid {
  Eigen::MatrixXd nodes;    // one node per row
  Eigen::VectorXd weights;  // sum to 1
};

// Interior lattice of the probability simplex with equal weights: all points
// k/(resolution+1) with positive integer coordinates summing to resolution+1.
// Supports d in {2, 3, 4}.
QuadratureGrid simplex_grid(int d, int resolution);

// KL(N(theta*, eps2 I) || N(0, sigma2 I)) expanded in the parameters used by
// the Gaussian-prior bounds.
double kl_gaussian(double sigma2, double eps2, double theta_star_norm2, int d);

// log of the multivariate Beta function: sum lgamma(a_i) - lgamma(sum a_i).
double log_dirichlet_norm(const Eigen::VectorXd& params);

// Dirichlet(1/2 + counts/2): the half-sample conjugate collapse of a
// Dirichlet(1/2, ..., 1/2) base measure.
Prior dirichlet_data_prior(const Eigen::VectorXi& counts);

// One round of shifted loss: the covariate/outcome pair plus the center
// prediction recorded before the update.
struct ShiftedRecord {
  Eigen::VectorXd x;
  double y = 0.0;
  double center = 0.0;
};

// How parameter atoms turn into predictions and how predictions are scored.
// `predict` returns the quantity entering the loss (a density value, a clipped
// linear predictor, ...); `loss` is the plain (unshifted) loss of a prediction.
struct PredictionModel {
  std::function<double(const Eigen::VectorXd& param, const Eigen::VectorXd& x, double y)> predict;
  std::function<double(double w, const Eigen::VectorXd& x, double y)> loss;
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Exponential-weights posterior over a prior, updated with shifted losses at
/// learning rate alpha. Finite and grid backends carry explicit atoms with
/// log-domain weights; the Metropolis backend integrates on demand from the
/// record history.
class PosteriorState {
 public:
  PosteriorState(Prior prior, double alpha, PredictionModel model, Backend backend,
                 IntegratorConfig cfg, std::uint64_t seed);

  // Multiplies in exp(-alpha * shifted loss) and renormalizes (lazily, in log
  // domain). Throws std::runtime_error on a NaN loss.
  void ewa_update(const ShiftedRecord& rec);

  // E_{P_t}[predict(param, x, y)] under the backend's approximation.
  double mean_prediction(const Eigen::VectorXd& x, double y) const;

  // Metropolis variant reporting a batch-means Monte Carlo standard error.
  McEstimate mean_prediction_mc(const Eigen::VectorXd& x, double y) const;
  McEstimate mean_prediction_mc(const Eigen::VectorXd& x, double y, int steps, int burn) const;

  // E_{P_t}[param]; exact prior moments before the first update where closed
  // forms exist (Dirichlet, Gaussian).
  Eigen::VectorXd mean_param() const;

  // Thinned posterior draws (Metropolis backend).
  Eigen::MatrixXd posterior_samples(int n_keep) const;

  Eigen::VectorXd weights() const;  // normalized atom weights
  const Eigen::MatrixXd& atoms() const { return *atoms_holder_; }
  std::shared_ptr<const Eigen::MatrixXd> atoms_ptr() const { return atoms_holder_; }
  int rounds() const { return static_cast<int>(history_.size()); }
  const std::vector<ShiftedRecord>& history() const { return history_; }
  const PredictionModel& model() const { return model_; }
  double alpha() const { return alpha_; }
  Backend backend() const { return backend_; }
  const Prior& prior() const { return prior_; }

  // Shifted loss of a parameter point for one record.
  double shifted_loss_at(const Eigen::VectorXd& param, const ShiftedRecord& rec) const;

 private:
  void build_atoms();
  double log_target(const Eigen::VectorXd& param) const;  // metropolis
  void run_chain(int steps, int burn, std::uint64_t chain_seed,
                 const std::function<void(const Eigen::VectorXd&)>& visit) const;

  Prior prior_;
  double alpha_ = 1.0;
  PredictionModel model_;
  Backend backend_ = Backend::ExactFinite;
  IntegratorConfig cfg_;
  std::uint64_t seed_ = 0;

  std::shared_ptr<Eigen::MatrixXd> atoms_holder_;  // n_atoms x param_dim (empty for metropolis)
  Eigen::VectorXd log_weight_;   // unnormalized log posterior weights
  std::vector<ShiftedRecord> history_;
};

// log-sum-exp of a vector, stable.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace o2b
