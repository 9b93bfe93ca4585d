#include "o2b/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace o2b {

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

constexpr double kInvSqrtPi = 0.5641895835477562869;  // pi^{-1/2}

}  // namespace

GlmSpec GlmSpec::with_mu(double new_mu) const {
  GlmSpec out = *this;
  out.mu = new_mu;
  out.m_cap = new_mu > 0.0 ? std::log(2.0 / new_mu) : std::numeric_limits<double>::infinity();
  return out;
}

GlmSpec logistic_spec(double r, double b, int d, int T) {
  if (!(r > 0.0) || !(b > 0.0)) throw std::domain_error("logistic_spec: r, b must be positive");
  GlmSpec s;
  s.kappa = 0.25;
  s.r = r;
  s.b = b;
  s.d = d;
  s.density = [](double z, double y) {
    const double p1 = sigmoid(z);
    return y > 0.5 ? p1 : 1.0 - p1;
  };
  s.neg_log_density = [](double z, double y) {
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
  };
  s.p0 = [](double, const Eigen::VectorXd&) { return 0.5; };
  return s.with_mu(std::min(0.5, static_cast<double>(d) / T));
}

GlmSpec gaussian_linmodel_spec(double r, double b, int d, int T) {
  if (!(r > 0.0) || !(b > 0.0)) {
    throw std::domain_error("gaussian_linmodel_spec: r, b must be positive");
  }
  GlmSpec s;
  s.kappa = 2.0;
  s.r = r;
  s.b = b;
  s.d = d;
  s.density = [](double z, double y) { return kInvSqrtPi * std::exp(-(y - z) * (y - z)); };
  s.neg_log_density = [](double z, double y) { return (y - z) * (y - z) - std::log(kInvSqrtPi); };
  const double rb = r * b;
  s.p0 = [rb](double y, const Eigen::VectorXd&) {
    return 0.5 * kInvSqrtPi *
           (std::exp(-(y - rb) * (y - rb)) + std::exp(-(y + rb) * (y + rb)));
  };
  return s.with_mu(std::min(0.5, static_cast<double>(d) / T));
}

double select_mu_gaussian_linmodel(int d, int T, double r, double b, double kappa, double delta) {
  const double base = static_cast<double>(d) / T;
  const double lead = d * (1.0 + std::log(2.0 + kappa * (r * b) * (r * b) * T / (d * d)));
  double best_mu = base;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 6; ++k) {
    const double mu = std::min(0.5, base * std::pow(2.0, k));
    const double m = std::log(2.0 / mu);
    const double val = (lead + 8.0 * std::max(1.0, m) * std::log(1.0 / delta)) / T + 2.0 * mu;
    if (val < best_val) {
      best_val = val;
      best_mu = mu;
    }
  }
  return best_mu;
}

// PosteriorLearner ------------------------------------------------------------

PosteriorLearner::PosteriorLearner(PosteriorState state, Options opt)
    : state_(std::move(state)), opt_(opt) {}

SnapshotFn PosteriorLearner::snapshot() {
  const PredictionModel& model = state_.model();
  switch (state_.backend()) {
    case Backend::SimplexGrid: {
      // Simplex models predict coordinates, linear in the parameter, so the
      // mean parameter evaluates the mean prediction exactly.
      Eigen::VectorXd mp = state_.mean_param();
      mean_param_history_.push_back(mp);
      auto predict = model.predict;
      return [mp = std::move(mp), predict](const Eigen::VectorXd& x, double y) {
        return predict(mp, x, y);
      };
    }
    case Backend::Metropolis: {
      Eigen::MatrixXd draws = state_.posterior_samples(opt_.snapshot_samples);
      sample_history_.push_back(draws);
      auto predict = model.predict;
      return [draws = std::move(draws), predict](const Eigen::VectorXd& x, double y) {
        double acc = 0.0;
        for (int i = 0; i < draws.rows(); ++i) acc += predict(draws.row(i), x, y);
        return acc / draws.rows();
      };
    }
    default: {
      Eigen::VectorXd w = state_.weights();
      weight_history_.push_back(w);
      auto atoms = state_.atoms_ptr();
      auto predict = model.predict;
      return [w = std::move(w), atoms, predict](const Eigen::VectorXd& x, double y) {
        double acc = 0.0;
        for (int i = 0; i < atoms->rows(); ++i) acc += w[i] * predict(atoms->row(i), x, y);
        return acc;
      };
    }
  }
}

double PosteriorLearner::round_m(const Eigen::VectorXd& x, double y, double center) const {
  if (!opt_.track_m) return 0.0;
  const PredictionModel& model = state_.model();
  const double lc = model.loss(center, x, y);
  double worst = 0.0;
  auto consider = [&](const Eigen::VectorXd& param) {
    if (std::isfinite(opt_.class_radius) && param.norm() > opt_.class_radius) return;
    const double diff = std::abs(lc - model.loss(model.predict(param, x, y), x, y));
    if (diff > worst) worst = diff;
  };
  if (state_.backend() == Backend::Metropolis) {
    if (!sample_history_.empty()) {
      const Eigen::MatrixXd& draws = sample_history_.back();
      for (int i = 0; i < draws.rows(); ++i) consider(draws.row(i));
    }
    return worst;  // posterior draws only: a proxy for the class supremum
  }
  const Eigen::MatrixXd& atoms = state_.atoms();
  for (int i = 0; i < atoms.rows(); ++i) consider(atoms.row(i));
  return worst;
}

// aggregate_finite ------------------------------------------------------------

double AggregationResult::predict(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (size_t k = 0; k < dictionary.size(); ++k) acc += avg_weights[k] * dictionary[k](x);
  return acc;
}

AggregationResult aggregate_finite(const std::vector<Fn1>& dictionary, const Stream& stream,
                                   const ExpConcaveLoss& loss) {
  if (dictionary.empty()) throw ConfigError("aggregate_finite: empty dictionary");
  const int K = static_cast<int>(dictionary.size());

  PredictionModel model;
  model.predict = [dictionary](const Eigen::VectorXd& param, const Eigen::VectorXd& x, double) {
    return dictionary[static_cast<int>(param[0])](x);
  };
  model.loss = [value = loss.value](double w, const Eigen::VectorXd&, double y) {
    return value(w, y);
  };

  PosteriorState post(Prior::finite_uniform(K), loss.alpha, model, Backend::ExactFinite,
                      IntegratorConfig{}, 0);
  PosteriorLearner::Options opt;
  opt.track_m = true;
  opt.m_declared = loss.m;
  PosteriorLearner learner(std::move(post), opt);

  AggregationResult res;
  res.traj = run(stream, learner);
  res.dictionary = dictionary;
  res.round_weights = learner.weight_history();
  res.avg_weights = Eigen::VectorXd::Zero(K);
  for (const Eigen::VectorXd& w : res.round_weights) res.avg_weights += w;
  res.avg_weights /= static_cast<double>(res.round_weights.size());
  return res;
}

// conditional_density_estimator ----------------------------------------------

double DensityResult::raw_density(double y, const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (int i = 0; i < atoms->rows(); ++i) {
    acc += avg_weights[i] * spec.density(atoms->row(i).dot(x), y);
  }
  return acc;
}

double DensityResult::density(double y, const Eigen::VectorXd& x) const {
  return (1.0 - spec.mu) * raw_density(y, x) + spec.mu * spec.p0(y, x);
}

double DensityResult::log_loss(double y, const Eigen::VectorXd& x) const {
  return -std::log(density(y, x));
}

DensityResult conditional_density_estimator(const GlmSpec& spec, const Stream& stream,
                                            Backend backend, const IntegratorConfig& cfg,
                                            std::uint64_t seed) {
  if (backend != Backend::DenseGrid && backend != Backend::Metropolis) {
    throw ConfigError("conditional_density_estimator: backend must be DenseGrid or Metropolis");
  }
  const double sigma2 = spec.b * spec.b / spec.d;

  PredictionModel model;
  model.predict = [density = spec.density](const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                                           double y) { return density(theta.dot(x), y); };
  model.loss = [p0 = spec.p0, mu = spec.mu](double w, const Eigen::VectorXd& x, double y) {
    return smoothed_log_loss(w, p0(y, x), mu);
  };

  PosteriorState post(Prior::gaussian_isotropic(sigma2, spec.d), 1.0, model, backend, cfg, seed);
  PosteriorLearner::Options opt;
  opt.track_m = true;
  opt.m_declared = spec.m_cap;
  opt.class_radius = spec.b;  // the reference class is the radius-b ball
  opt.snapshot_samples = std::clamp((cfg.mcmc_steps - cfg.burn_in) / 20, 50, 500);
  PosteriorLearner learner(std::move(post), opt);

  DensityResult res;
  res.traj = run(stream, learner);
  res.spec = spec;

  if (backend == Backend::DenseGrid) {
    res.atoms = learner.state().atoms_ptr();
    res.avg_weights = Eigen::VectorXd::Zero(res.atoms->rows());
    for (const Eigen::VectorXd& w : learner.weight_history()) res.avg_weights += w;
    res.avg_weights /= static_cast<double>(learner.weight_history().size());
  } else {
    // Pool the per-round thinned draws into one equally weighted mixture.
    const auto& hist = learner.sample_history();
    const int per_round = static_cast<int>(hist.front().rows());
    auto pooled = std::make_shared<Eigen::MatrixXd>(
        static_cast<long>(hist.size()) * per_round, spec.d);
    for (size_t t = 0; t < hist.size(); ++t) {
      pooled->middleRows(static_cast<long>(t) * per_round, per_round) = hist[t];
    }
    res.avg_weights = Eigen::VectorXd::Constant(pooled->rows(), 1.0 / pooled->rows());
    res.atoms = pooled;
  }
  return res;
}

// discrete_dist_estimator ------------------------------------------------------

int DiscreteDistConfig::resolution_or_default() const {
  if (resolution > 0) return resolution;
  switch (d) {
    case 2: return 1024;
    case 3: return 100;
    default: return 44;
  }
}

DiscreteResult discrete_dist_estimator(const std::vector<int>& samples,
                                       const DiscreteDistConfig& cfg) {
  const int d = cfg.d;
  if (d < 2 || d > 4) throw ConfigError("discrete_dist_estimator: d must be in {2, 3, 4}");
  const int T_even = 2 * (static_cast<int>(samples.size()) / 2);
  if (T_even <= 4 * d) throw ConfigError("discrete_dist_estimator: requires T > 4d");
  for (int s : samples) {
    if (s < 0 || s >= d) throw std::domain_error("discrete_dist_estimator: symbol out of range");
  }
  const double mu = cfg.mu >= 0.0 ? cfg.mu : static_cast<double>(d) / T_even;
  if (mu > 0.5) throw ConfigError("discrete_dist_estimator: mu must be in [0, 1/2]");

  const int half = T_even / 2;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(d);
  for (int t = 0; t < half; ++t) counts[samples[t]] += 1;

  PredictionModel model;
  model.predict = [](const Eigen::VectorXd& p, const Eigen::VectorXd&, double y) {
    return p[static_cast<int>(y)];
  };
  model.loss = [mu, d](double w, const Eigen::VectorXd&, double) {
    return smoothed_log_loss(w, 1.0 / d, mu);
  };

  IntegratorConfig icfg;
  icfg.grid_resolution = cfg.resolution_or_default();
  Prior prior = dirichlet_data_prior(counts);
  PosteriorState post(prior, 1.0, model, Backend::SimplexGrid, icfg, 0);

  PosteriorLearner::Options opt;
  opt.track_m = true;
  opt.m_declared = mu > 0.0 ? std::log(d / mu) : std::numeric_limits<double>::infinity();
  PosteriorLearner learner(std::move(post), opt);

  Stream second_half;
  second_half.reserve(half);
  for (int t = half; t < T_even; ++t) {
    second_half.push_back({Eigen::VectorXd(), static_cast<double>(samples[t])});
  }

  DiscreteResult res;
  res.traj = run(second_half, learner);
  res.counts = counts;
  res.prior = prior;
  res.mu = mu;
  res.p_bar_raw = Eigen::VectorXd::Zero(d);
  for (const Eigen::VectorXd& mp : learner.mean_param_history()) res.p_bar_raw += mp;
  res.p_bar_raw /= static_cast<double>(learner.mean_param_history().size());
  res.p_bar = ((1.0 - mu) * res.p_bar_raw.array() + mu / d).matrix();
  return res;
}

// VAW --------------------------------------------------------------------------

VawState vaw_init(int d, double sigma2, double l) {
  if (!(sigma2 > 0.0) || !(l > 0.0)) throw std::domain_error("vaw_init: bad sigma2 or l");
  VawState s;
  s.inv_gram = sigma2 * Eigen::MatrixXd::Identity(d, d);
  s.vec = Eigen::VectorXd::Zero(d);
  s.sigma2 = sigma2;
  s.l = l;
  return s;
}

double vaw_raw_predict(const Eigen::MatrixXd& inv_gram, const Eigen::VectorXd& vec,
                       const Eigen::VectorXd& x) {
  // x^T (A + x x^T / 4)^{-1} b = u / (1 + q/4) with q = x^T A^{-1} x, u = x^T A^{-1} b.
  const Eigen::VectorXd ax = inv_gram * x;
  const double q = x.dot(ax);
  const double u = ax.dot(vec);
  return u / (1.0 + 0.25 * q);
}

void vaw_update(VawState& state, const Eigen::VectorXd& x, double y) {
  state.snapshots.push_back({state.inv_gram, state.vec});
  state.xs.push_back(x);

  const double pred = vaw_raw_predict(state.inv_gram, state.vec, x);
  const double ytilde = -0.5 * clip(pred, state.l) + y;

  const Eigen::VectorXd u = 0.5 * x;
  const Eigen::VectorXd au = state.inv_gram * u;
  const double denom = 1.0 + u.dot(au);
  if (!(denom > 0.0)) {
    throw std::runtime_error("vaw_update: inverse update lost positive-definiteness at round " +
                             std::to_string(state.snapshots.size()));
  }
  state.inv_gram.noalias() -= (au * au.transpose()) / denom;
  state.vec.noalias() += 0.5 * ytilde * x;
}

double vaw_average_predict(const VawState& state, const Eigen::VectorXd& x) {
  if (state.snapshots.empty()) throw ConfigError("vaw_average_predict: no snapshots");
  double acc = 0.0;
  for (const VawState::Snapshot& snap : state.snapshots) {
    acc += clip(vaw_raw_predict(snap.inv_gram, snap.vec, x), state.l);
  }
  return acc / static_cast<double>(state.snapshots.size());
}

double vaw_audit(const VawState& state) {
  const int d = static_cast<int>(state.vec.size());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(d, d) / state.sigma2;
  for (const Eigen::VectorXd& x : state.xs) gram.noalias() += 0.25 * x * x.transpose();
  return (state.inv_gram * gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
}

namespace {

class VawLearner {
 public:
  VawLearner(int d, double sigma2, double l) : state_(vaw_init(d, sigma2, l)), l_(l) {}

  double center(const Eigen::VectorXd& x, double) {
    return clip(vaw_raw_predict(state_.inv_gram, state_.vec, x), l_);
  }
  void update(const Eigen::VectorXd& x, double y, double) { vaw_update(state_, x, y); }
  SnapshotFn snapshot() const {
    return [inv = state_.inv_gram, vec = state_.vec, l = l_](const Eigen::VectorXd& x, double) {
      return clip(vaw_raw_predict(inv, vec, x), l);
    };
  }
  std::function<double(double, const Eigen::VectorXd&, double)> plain_loss_fn() const {
    return [](double w, const Eigen::VectorXd&, double y) { return (w - y) * (w - y); };
  }
  VawState& state() { return state_; }

 private:
  VawState state_;
  double l_;
};

}  // namespace

double LinRegConfig::sigma2_or_default() const {
  if (sigma2 > 0.0) return sigma2;
  return mode == Mode::EwaClipped ? b * b / d : b * b / (d * l * l);
}

VawResult linreg_vaw(const Stream& stream, const LinRegConfig& cfg) {
  if (cfg.mode != LinRegConfig::Mode::VawClipped) {
    throw ConfigError("linreg_vaw: config mode must be vaw-clipped");
  }
  VawLearner learner(cfg.d, cfg.sigma2_or_default(), cfg.l);
  VawResult res;
  res.traj = run(stream, learner);
  res.state = std::move(learner.state());
  return res;
}

// linreg_ewa --------------------------------------------------------------------

double LinRegEwaResult::predict(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (int i = 0; i < atoms->rows(); ++i) {
    acc += avg_weights[i] * clip(atoms->row(i).dot(x), l);
  }
  return acc;
}

LinRegEwaResult linreg_ewa(const Stream& stream, const LinRegConfig& cfg, Backend backend,
                           const IntegratorConfig& icfg, std::uint64_t seed) {
  if (cfg.mode != LinRegConfig::Mode::EwaClipped) {
    throw ConfigError("linreg_ewa: config mode must be ewa-clipped");
  }
  if (backend != Backend::DenseGrid && backend != Backend::Metropolis) {
    throw ConfigError("linreg_ewa: backend must be DenseGrid or Metropolis");
  }
  const double l = cfg.l;
  const double alpha = 1.0 / (8.0 * l * l);

  PredictionModel model;
  model.predict = [l](const Eigen::VectorXd& theta, const Eigen::VectorXd& x, double) {
    return clip(theta.dot(x), l);
  };
  model.loss = [](double w, const Eigen::VectorXd&, double y) { return (w - y) * (w - y); };

  PosteriorState post(Prior::gaussian_isotropic(cfg.sigma2_or_default(), cfg.d), alpha, model,
                      backend, icfg, seed);
  PosteriorLearner::Options opt;
  opt.track_m = true;
  opt.m_declared = 4.0 * l * l;
  opt.class_radius = cfg.b;
  opt.snapshot_samples = std::clamp((icfg.mcmc_steps - icfg.burn_in) / 20, 50, 500);
  PosteriorLearner learner(std::move(post), opt);

  LinRegEwaResult res;
  res.traj = run(stream, learner);
  res.l = l;
  if (backend == Backend::DenseGrid) {
    res.atoms = learner.state().atoms_ptr();
    res.avg_weights = Eigen::VectorXd::Zero(res.atoms->rows());
    for (const Eigen::VectorXd& w : learner.weight_history()) res.avg_weights += w;
    res.avg_weights /= static_cast<double>(learner.weight_history().size());
  } else {
    const auto& hist = learner.sample_history();
    const int per_round = static_cast<int>(hist.front().rows());
    auto pooled =
        std::make_shared<Eigen::MatrixXd>(static_cast<long>(hist.size()) * per_round, cfg.d);
    for (size_t t = 0; t < hist.size(); ++t) {
      pooled->middleRows(static_cast<long>(t) * per_round, per_round) = hist[t];
    }
    res.avg_weights = Eigen::VectorXd::Constant(pooled->rows(), 1.0 / pooled->rows());
    res.atoms = pooled;
  }
  return res;
}

}  // namespace o2b
