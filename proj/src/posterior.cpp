#include "o2b/posterior.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "o2b/rng.hpp"

namespace o2b {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kBoxSigmas = 6;        // half-width of the dense grid in prior sigmas
constexpr long kMaxAtoms = 2000000;  // guard against accidental grid blow-ups
}  // namespace

Prior Prior::finite_uniform(int K) {
  if (K < 1) throw ConfigError("finite_uniform: K must be >= 1");
  Prior p;
  p.kind = PriorKind::FiniteUniform;
  p.size = K;
  p.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
  return p;
}

Prior Prior::finite_weighted(const Eigen::VectorXd& w) {
  if (w.size() == 0) throw ConfigError("finite_weighted: empty weight vector");
  if ((w.array() < 0).any()) throw ConfigError("finite_weighted: negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-12) throw ConfigError("finite_weighted: weights must sum to 1");
  Prior p;
  p.kind = PriorKind::FiniteWeighted;
  p.size = static_cast<int>(w.size());
  p.weights = w;
  return p;
}

Prior Prior::gaussian_isotropic(double sigma2, int d) {
  if (!(sigma2 > 0.0)) throw std::domain_error("gaussian_isotropic: sigma2 must be positive");
  if (d < 1) throw ConfigError("gaussian_isotropic: d must be >= 1");
  Prior p;
  p.kind = PriorKind::GaussianIsotropic;
  p.size = d;
  p.sigma2 = sigma2;
  return p;
}

Prior Prior::dirichlet(const Eigen::VectorXd& params) {
  if (params.size() < 2) throw ConfigError("dirichlet: need at least 2 parameters");
  if (!(params.array() > 0).all()) throw std::domain_error("dirichlet: parameters must be positive");
  Prior p;
  p.kind = PriorKind::Dirichlet;
  p.size = static_cast<int>(params.size());
  p.concentration = params;
  return p;
}

double Prior::log_density(const Eigen::Ref<const Eigen::VectorXd>& p) const {
  switch (kind) {
    case PriorKind::GaussianIsotropic:
      return -p.squaredNorm() / (2.0 * sigma2);
    case PriorKind::Dirichlet:
      return ((concentration.array() - 1.0) * p.array().log()).sum();
    default:
      throw ConfigError("log_density: finite priors have no density");
  }
}

void IntegratorConfig::validate() const {
  if (grid_resolution < 1 || mcmc_steps < 1 || burn_in < 1) {
    throw ConfigError("IntegratorConfig: counts must be >= 1");
  }
  if (!(proposal_scale > 0.0)) throw ConfigError("IntegratorConfig: proposal_scale must be positive");
}

QuadratureGrid simplex_grid(int d, int resolution) {
  if (d < 2 || d > 4) throw ConfigError("simplex_grid: d must be in {2, 3, 4}");
  if (resolution < 2) throw ConfigError("simplex_grid: resolution must be >= 2");
  const int total = resolution + 1;

  std::vector<Eigen::VectorXd> nodes;
  Eigen::VectorXi k = Eigen::VectorXi::Ones(d);
  // Enumerate positive integer compositions of `total` into d parts.
  std::function<void(int, int)> rec = [&](int pos, int remaining) {
    if (pos == d - 1) {
      if (remaining >= 1) {
        k[pos] = remaining;
        nodes.push_back(k.cast<double>() / total);
      }
      return;
    }
    for (int v = 1; v <= remaining - (d - 1 - pos); ++v) {
      k[pos] = v;
      rec(pos + 1, remaining - v);
    }
  };
  rec(0, total);

  if (static_cast<long>(nodes.size()) > kMaxAtoms) {
    throw ConfigError("simplex_grid: lattice too large for this resolution");
  }
  QuadratureGrid g;
  g.nodes.resize(nodes.size(), d);
  for (size_t i = 0; i < nodes.size(); ++i) g.nodes.row(i) = nodes[i];
  g.weights = Eigen::VectorXd::Constant(nodes.size(), 1.0 / nodes.size());
  return g;
}

double kl_gaussian(double sigma2, double eps2, double theta_star_norm2, int d) {
  if (!(sigma2 > 0.0) || !(eps2 > 0.0)) {
    throw std::domain_error("kl_gaussian: variances must be positive");
  }
  if (theta_star_norm2 < 0.0) throw std::domain_error("kl_gaussian: negative squared norm");
  const double sigma = std::sqrt(sigma2);
  const double eps = std::sqrt(eps2);
  return d * std::log(sigma) + (theta_star_norm2 + d * eps2) / (2.0 * sigma2) - 0.5 * d +
         d * std::log(1.0 / eps);
}

double log_dirichlet_norm(const Eigen::VectorXd& params) {
  if (!(params.array() > 0).all()) {
    throw std::domain_error("log_dirichlet_norm: parameters must be positive");
  }
  double s = 0.0;
  for (int i = 0; i < params.size(); ++i) s += std::lgamma(params[i]);
  return s - std::lgamma(params.sum());
}

Prior dirichlet_data_prior(const Eigen::VectorXi& counts) {
  if ((counts.array() < 0).any()) throw std::domain_error("dirichlet_data_prior: negative count");
  return Prior::dirichlet(0.5 + 0.5 * counts.cast<double>().array());
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

PosteriorState::PosteriorState(Prior prior, double alpha, PredictionModel model, Backend backend,
                               IntegratorConfig cfg, std::uint64_t seed)
    : prior_(std::move(prior)),
      alpha_(alpha),
      model_(std::move(model)),
      backend_(backend),
      cfg_(cfg),
      seed_(seed) {
  if (!(alpha_ > 0.0)) throw std::domain_error("PosteriorState: alpha must be positive");
  cfg_.validate();

  const bool finite_prior =
      prior_.kind == PriorKind::FiniteUniform || prior_.kind == PriorKind::FiniteWeighted;
  switch (backend_) {
    case Backend::ExactFinite:
      if (!finite_prior) throw ConfigError("ExactFinite backend requires a finite prior");
      break;
    case Backend::SimplexGrid:
      if (prior_.kind != PriorKind::Dirichlet) {
        throw ConfigError("SimplexGrid backend requires a Dirichlet prior");
      }
      break;
    case Backend::DenseGrid:
      if (prior_.kind != PriorKind::GaussianIsotropic) {
        throw ConfigError("DenseGrid backend requires a Gaussian prior");
      }
      if (prior_.size > 3) throw ConfigError("DenseGrid backend supports d <= 3");
      break;
    case Backend::Metropolis:
      if (prior_.kind != PriorKind::GaussianIsotropic) {
        throw ConfigError("Metropolis backend requires a Gaussian prior");
      }
      if (prior_.size > 8) throw ConfigError("Metropolis backend supports d <= 8");
      break;
  }
  build_atoms();
}

void PosteriorState::build_atoms() {
  atoms_holder_ = std::make_shared<Eigen::MatrixXd>();
  Eigen::MatrixXd& atoms = *atoms_holder_;
  switch (backend_) {
    case Backend::ExactFinite: {
      atoms.resize(prior_.size, 1);
      for (int k = 0; k < prior_.size; ++k) atoms(k, 0) = k;
      log_weight_ = prior_.weights.array().max(0.0).log();
      break;
    }
    case Backend::SimplexGrid: {
      QuadratureGrid g = simplex_grid(prior_.size, cfg_.grid_resolution);
      atoms = std::move(g.nodes);
      log_weight_.resize(atoms.rows());
      for (int i = 0; i < atoms.rows(); ++i) log_weight_[i] = prior_.log_density(atoms.row(i));
      break;
    }
    case Backend::DenseGrid: {
      const int d = prior_.size;
      const int g = cfg_.grid_resolution;
      long n = 1;
      for (int i = 0; i < d; ++i) n *= g;
      if (n > kMaxAtoms) throw ConfigError("DenseGrid: grid too large");
      const double half = kBoxSigmas * std::sqrt(prior_.sigma2);
      atoms.resize(n, d);
      for (long idx = 0; idx < n; ++idx) {
        long rest = idx;
        for (int j = 0; j < d; ++j) {
          const int cell = static_cast<int>(rest % g);
          rest /= g;
          atoms(idx, j) = -half + (cell + 0.5) * (2.0 * half / g);
        }
      }
      log_weight_.resize(n);
      for (long i = 0; i < n; ++i) log_weight_[i] = prior_.log_density(atoms.row(i));
      break;
    }
    case Backend::Metropolis:
      break;  // no atoms; integration happens per query
  }
}

void PosteriorState::ewa_update(const ShiftedRecord& rec) {
  if (!std::isfinite(rec.center) || !std::isfinite(rec.y)) {
    throw std::runtime_error("ewa_update: rejected record with non-finite fields");
  }
  if (backend_ != Backend::Metropolis) {
    const Eigen::MatrixXd& atoms = *atoms_holder_;
    for (int i = 0; i < atoms.rows(); ++i) {
      const double loss = shifted_loss_at(atoms.row(i), rec);
      if (std::isnan(loss)) throw std::runtime_error("ewa_update: rejected record (NaN loss)");
      log_weight_[i] -= alpha_ * loss;
    }
  }
  history_.push_back(rec);
}

double PosteriorState::shifted_loss_at(const Eigen::VectorXd& param,
                                       const ShiftedRecord& rec) const {
  const double w = model_.predict(param, rec.x, rec.y);
  return model_.loss(0.5 * w + 0.5 * rec.center, rec.x, rec.y);
}

Eigen::VectorXd PosteriorState::weights() const {
  if (backend_ == Backend::Metropolis) {
    throw ConfigError("weights: Metropolis backend carries no atom weights");
  }
  const double lse = log_sum_exp(log_weight_);
  if (!std::isfinite(lse)) {
    // All weights underflowed; fall back to the prior rather than emit NaN.
    std::cerr << "o2b: posterior weights degenerate, falling back to prior\n";
    if (prior_.kind == PriorKind::FiniteUniform || prior_.kind == PriorKind::FiniteWeighted) {
      return prior_.weights;
    }
    const Eigen::MatrixXd& atoms = *atoms_holder_;
    Eigen::VectorXd lp(atoms.rows());
    for (int i = 0; i < atoms.rows(); ++i) lp[i] = prior_.log_density(atoms.row(i));
    return (lp.array() - log_sum_exp(lp)).exp();
  }
  return (log_weight_.array() - lse).exp();
}

double PosteriorState::mean_prediction(const Eigen::VectorXd& x, double y) const {
  if (backend_ == Backend::Metropolis) {
    return mean_prediction_mc(x, y).mean;
  }
  if (history_.empty() && prior_.kind == PriorKind::Dirichlet) {
    // Exact prior moment; simplex models predict coordinates, linear in the
    // parameter, so the mean parameter gives the mean prediction.
    return model_.predict(mean_param(), x, y);
  }
  const Eigen::MatrixXd& atoms = *atoms_holder_;
  const Eigen::VectorXd w = weights();
  double acc = 0.0;
  for (int i = 0; i < atoms.rows(); ++i) acc += w[i] * model_.predict(atoms.row(i), x, y);
  return acc;
}

Eigen::VectorXd PosteriorState::mean_param() const {
  if (history_.empty()) {
    if (prior_.kind == PriorKind::Dirichlet) {
      return prior_.concentration / prior_.concentration.sum();
    }
    if (prior_.kind == PriorKind::GaussianIsotropic) {
      return Eigen::VectorXd::Zero(prior_.size);
    }
  }
  if (backend_ == Backend::Metropolis) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(prior_.size);
    long n = 0;
    run_chain(cfg_.mcmc_steps, cfg_.burn_in, derive_seed(seed_, 1000003ULL * rounds()),
              [&](const Eigen::VectorXd& th) {
                acc += th;
                ++n;
              });
    return acc / static_cast<double>(n);
  }
  return atoms_holder_->transpose() * weights();
}

double PosteriorState::log_target(const Eigen::VectorXd& param) const {
  double lt = prior_.log_density(param);
  for (const ShiftedRecord& rec : history_) lt -= alpha_ * shifted_loss_at(param, rec);
  return lt;
}

void PosteriorState::run_chain(int steps, int burn, std::uint64_t chain_seed,
                               const std::function<void(const Eigen::VectorXd&)>& visit) const {
  const int d = prior_.size;
  Rng rng(chain_seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  double lt = log_target(theta);
  const double step = cfg_.proposal_scale * std::sqrt(prior_.sigma2);
  Eigen::VectorXd proposal(d);
  for (int it = 0; it < steps; ++it) {
    for (int j = 0; j < d; ++j) proposal[j] = theta[j] + step * rng.normal();
    const double lt_new = log_target(proposal);
    if (std::log(rng.uniform01()) < lt_new - lt) {
      theta = proposal;
      lt = lt_new;
    }
    if (it >= burn) visit(theta);
  }
}

McEstimate PosteriorState::mean_prediction_mc(const Eigen::VectorXd& x, double y) const {
  return mean_prediction_mc(x, y, cfg_.mcmc_steps, cfg_.burn_in);
}

McEstimate PosteriorState::mean_prediction_mc(const Eigen::VectorXd& x, double y, int steps,
                                              int burn) const {
  if (backend_ != Backend::Metropolis) {
    throw ConfigError("mean_prediction_mc: requires the Metropolis backend");
  }
  const int kept = steps - burn;
  if (kept < 20) throw ConfigError("mean_prediction_mc: chain too short");
  const int n_batches = 20;
  Eigen::VectorXd batch_sum = Eigen::VectorXd::Zero(n_batches);
  Eigen::VectorXd batch_cnt = Eigen::VectorXd::Zero(n_batches);
  long i = 0;
  run_chain(steps, burn, derive_seed(seed_, 1000003ULL * rounds()),
            [&](const Eigen::VectorXd& th) {
              const int b = static_cast<int>((i * n_batches) / kept);
              batch_sum[std::min(b, n_batches - 1)] += model_.predict(th, x, y);
              batch_cnt[std::min(b, n_batches - 1)] += 1.0;
              ++i;
            });
  const Eigen::VectorXd means = batch_sum.array() / batch_cnt.array();
  McEstimate est;
  est.mean = batch_sum.sum() / batch_cnt.sum();
  const double var = (means.array() - means.mean()).square().sum() / (n_batches - 1);
  est.std_error = std::sqrt(var / n_batches);
  return est;
}

Eigen::MatrixXd PosteriorState::posterior_samples(int n_keep) const {
  if (backend_ != Backend::Metropolis) {
    throw ConfigError("posterior_samples: requires the Metropolis backend");
  }
  const int kept = cfg_.mcmc_steps - cfg_.burn_in;
  if (n_keep < 1 || n_keep > kept) throw ConfigError("posterior_samples: bad n_keep");
  const int thin = kept / n_keep;
  Eigen::MatrixXd out(n_keep, prior_.size);
  long i = 0;
  int row = 0;
  run_chain(cfg_.mcmc_steps, cfg_.burn_in, derive_seed(seed_, 1000003ULL * rounds()),
            [&](const Eigen::VectorXd& th) {
              if (i % thin == 0 && row < n_keep) out.row(row++) = th;
              ++i;
            });
  for (; row < n_keep; ++row) out.row(row) = out.row(row - 1);
  return out;
}

}  // namespace o2b
