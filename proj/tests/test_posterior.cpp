#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "o2b/posterior.hpp"
#include "o2b/rng.hpp"

using namespace o2b;

namespace {

// Plain finite model: atoms are expert indices, expert k predicts preds[k].
PredictionModel finite_model(std::vector<double> preds,
                             std::function<double(double, double)> loss) {
  PredictionModel m;
  m.predict = [preds](const Eigen::VectorXd& param, const Eigen::VectorXd&, double) {
    return preds[static_cast<int>(param[0])];
  };
  m.loss = [loss](double w, const Eigen::VectorXd&, double y) { return loss(w, y); };
  return m;
}

// Composite Simpson integration, used as an independent oracle.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double acc = f(a) + f(b);
  const double h = (b - a) / n;
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("finite EWA weight updates") {
  // Expert predictions ride in the record's covariate slot for these tests.
  PredictionModel m;
  m.predict = [](const Eigen::VectorXd& param, const Eigen::VectorXd& preds, double) {
    return preds[static_cast<int>(param[0])];
  };
  m.loss = [](double w, const Eigen::VectorXd&, double) { return w; };

  SUBCASE("equal losses preserve uniform") {
    PosteriorState st(Prior::finite_uniform(2), 1.0, m, Backend::ExactFinite, {}, 0);
    Eigen::VectorXd preds(2);
    preds << 0.0, 0.0;  // with center 0, the shifted loss of expert k is preds[k]/2
    st.ewa_update({preds, 0.0, 0.0});
    const Eigen::VectorXd w = st.weights();
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("losses (0, ln 2) give weights (2/3, 1/3)") {
    PosteriorState st(Prior::finite_uniform(2), 1.0, m, Backend::ExactFinite, {}, 0);
    Eigen::VectorXd preds(2);
    preds << 0.0, 2.0 * std::log(2.0);
    st.ewa_update({preds, 0.0, 0.0});
    const Eigen::VectorXd w = st.weights();
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("NaN loss rejected") {
    PosteriorState st(Prior::finite_uniform(2), 1.0, m, Backend::ExactFinite, {}, 0);
    Eigen::VectorXd preds(2);
    preds << 0.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(st.ewa_update({preds, 0.0, 0.0}), std::runtime_error);
  }
}

TEST_CASE("incremental weights match batch recomputation") {
  Rng rng(404);
  for (int inst = 0; inst < 25; ++inst) {
    const int K = 2 + rng.uniform_int(4);   // up to 5 experts
    const int T = 5 + rng.uniform_int(16);  // up to 20 rounds
    const double alpha = rng.uniform(0.25, 2.0);
    std::vector<double> preds(K);
    for (double& p : preds) p = rng.uniform(-1.0, 1.0);
    PredictionModel m = finite_model(preds, [](double w, double y) { return (w - y) * (w - y); });
    PosteriorState st(Prior::finite_uniform(K), alpha, m, Backend::ExactFinite, {}, 0);

    std::vector<ShiftedRecord> records;
    for (int t = 0; t < T; ++t) {
      ShiftedRecord rec{Eigen::VectorXd(), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      st.ewa_update(rec);
      records.push_back(rec);
    }

    // From-scratch recomputation in extended precision.
    std::vector<long double> logw(K, -std::log((long double)K));
    for (const ShiftedRecord& rec : records) {
      for (int k = 0; k < K; ++k) {
        const long double mid = 0.5L * preds[k] + 0.5L * rec.center;
        logw[k] -= (long double)alpha * (mid - rec.y) * (mid - rec.y);
      }
    }
    long double mx = logw[0];
    for (long double v : logw) mx = std::max(mx, v);
    long double z = 0.0L;
    for (long double v : logw) z += std::exp(v - mx);
    const Eigen::VectorXd w = st.weights();
    for (int k = 0; k < K; ++k) {
      const double expected = static_cast<double>(std::exp(logw[k] - mx) / z);
      REQUIRE(std::abs(w[k] - expected) <= 1e-12);
    }
  }
}

TEST_CASE("mean_prediction") {
  SUBCASE("Dirichlet prior, no records: exact mean") {
    Eigen::VectorXd params(2);
    params << 1.0, 0.5;
    PredictionModel m;
    m.predict = [](const Eigen::VectorXd& p, const Eigen::VectorXd&, double y) {
      return p[static_cast<int>(y)];
    };
    m.loss = [](double w, const Eigen::VectorXd&, double) { return -std::log(w); };
    PosteriorState st(Prior::dirichlet(params), 1.0, m, Backend::SimplexGrid,
                      IntegratorConfig{512, 100, 10, 0.5}, 0);
    CHECK(st.mean_prediction(Eigen::VectorXd(), 0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(st.mean_prediction(Eigen::VectorXd(), 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("finite uniform over {0, 1}") {
    PredictionModel m = finite_model({0.0, 1.0},
                                     [](double w, double y) { return (w - y) * (w - y); });
    PosteriorState st(Prior::finite_uniform(2), 1.0, m, Backend::ExactFinite, {}, 0);
    CHECK(st.mean_prediction(Eigen::VectorXd(), 0.0) == doctest::Approx(0.5));
  }

  SUBCASE("metropolis agrees with the dense grid") {
    PredictionModel m;
    m.predict = [](const Eigen::VectorXd& th, const Eigen::VectorXd& x, double) {
      return th.dot(x);
    };
    m.loss = [](double w, const Eigen::VectorXd&, double y) { return (w - y) * (w - y); };
    Eigen::VectorXd x1(1);
    x1 << 1.0;
    const ShiftedRecord rec{x1, 0.8, 0.2};

    IntegratorConfig grid_cfg;
    grid_cfg.grid_resolution = 4096;
    PosteriorState grid(Prior::gaussian_isotropic(1.0, 1), 1.0, m, Backend::DenseGrid, grid_cfg,
                        0);
    grid.ewa_update(rec);

    IntegratorConfig mc_cfg;
    mc_cfg.mcmc_steps = 60000;
    mc_cfg.burn_in = 5000;
    mc_cfg.proposal_scale = 1.0;
    PosteriorState mc(Prior::gaussian_isotropic(1.0, 1), 1.0, m, Backend::Metropolis, mc_cfg, 7);
    mc.ewa_update(rec);

    CHECK(std::abs(grid.mean_prediction(x1, 0.0) - mc.mean_prediction(x1, 0.0)) <= 0.01);
  }
}

TEST_CASE("kl_gaussian") {
  CHECK(kl_gaussian(1.3, 1.3, 0.0, 4) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_gaussian(1.0, 1.0, 1.0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(kl_gaussian(-1.0, 1.0, 0.0, 1), std::domain_error);

  // Oracle: KL(N(m, e2 I) || N(0, s2 I)) = d/2 (e2/s2 - 1 - log(e2/s2)) + |m|^2/(2 s2).
  Rng rng(515);
  for (int i = 0; i < 200; ++i) {
    const double s2 = rng.uniform(0.1, 4.0);
    const double e2 = rng.uniform(0.1, 4.0);
    const double n2 = rng.uniform(0.0, 9.0);
    const int d = 1 + rng.uniform_int(6);
    const double oracle = 0.5 * d * (e2 / s2 - 1.0 - std::log(e2 / s2)) + n2 / (2.0 * s2);
    REQUIRE(std::abs(kl_gaussian(s2, e2, n2, d) - oracle) <= 1e-10 * std::max(1.0, oracle));
  }
}

TEST_CASE("log_dirichlet_norm") {
  Eigen::VectorXd half(2), ones(2), mixed(2);
  half << 0.5, 0.5;
  ones << 1.0, 1.0;
  mixed << 1.0, 0.5;
  CHECK(log_dirichlet_norm(half) == doctest::Approx(std::log(M_PI)).epsilon(1e-12));
  CHECK(log_dirichlet_norm(ones) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(log_dirichlet_norm(mixed) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Numerical-integration oracle through q = sin^2(t), which removes the
  // endpoint singularities: the Beta integrand becomes 2 sin^{2a-1} cos^{2b-1}.
  auto beta_numeric = [](double a, double b) {
    return simpson(
        [a, b](double t) {
          return 2.0 * std::pow(std::sin(t), 2.0 * a - 1.0) *
                 std::pow(std::cos(t), 2.0 * b - 1.0);
        },
        0.0, M_PI / 2.0, 20000);
  };
  CHECK(std::exp(log_dirichlet_norm(half)) ==
        doctest::Approx(beta_numeric(0.5, 0.5)).epsilon(1e-8));
  CHECK(std::exp(log_dirichlet_norm(mixed)) ==
        doctest::Approx(beta_numeric(1.0, 0.5)).epsilon(1e-6));

  Eigen::VectorXd bad(2);
  bad << 1.0, 0.0;
  CHECK_THROWS_AS(log_dirichlet_norm(bad), std::domain_error);

  // lgamma accuracy spot checks across the magnitudes the normalizers span.
  CHECK(std::lgamma(0.5) == doctest::Approx(0.5 * std::log(M_PI)).epsilon(1e-14));
  CHECK(std::lgamma(10.0) == doctest::Approx(std::log(362880.0)).epsilon(1e-14));
}

TEST_CASE("dirichlet_data_prior") {
  Eigen::VectorXi zeros = Eigen::VectorXi::Zero(3);
  CHECK(dirichlet_data_prior(zeros).concentration.isApprox(Eigen::VectorXd::Constant(3, 0.5)));

  Eigen::VectorXi counts(2);
  counts << 1, 0;
  const Prior p = dirichlet_data_prior(counts);
  CHECK(p.concentration[0] == doctest::Approx(1.0));
  CHECK(p.concentration[1] == doctest::Approx(0.5));

  // Density ratio check: the returned prior density is proportional to
  // P0(p) * prod_i p_i^{counts_i / 2} (log-difference constant across points).
  Eigen::VectorXi big(3);
  big << 4, 1, 7;
  const Prior data_prior = dirichlet_data_prior(big);
  const Prior p0 = Prior::dirichlet(Eigen::VectorXd::Constant(3, 0.5));
  Rng rng(626);
  double ref = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd q(3);
    for (int k = 0; k < 3; ++k) q[k] = rng.uniform(1e-3, 1.0);
    q /= q.sum();
    double expected = p0.log_density(q);
    for (int k = 0; k < 3; ++k) expected += 0.5 * big[k] * std::log(q[k]);
    const double diff = data_prior.log_density(q) - expected;
    if (std::isnan(ref)) ref = diff;
    REQUIRE(std::abs(diff - ref) <= 1e-10);
  }
}

TEST_CASE("simplex_grid") {
  SUBCASE("d=2 resolution 3") {
    const QuadratureGrid g = simplex_grid(2, 3);
    REQUIRE(g.nodes.rows() == 3);
    CHECK(g.nodes(0, 0) == doctest::Approx(0.25));
    CHECK(g.nodes(0, 1) == doctest::Approx(0.75));
    CHECK(g.nodes(1, 0) == doctest::Approx(0.5));
    CHECK(g.nodes(2, 0) == doctest::Approx(0.75));
    CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
    for (int i = 0; i < 3; ++i) CHECK(g.weights[i] == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("interior lattice sums to one per node, weights normalized") {
    const QuadratureGrid g = simplex_grid(3, 40);
    CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((g.nodes.array() > 0).all());
    for (int i = 0; i < g.nodes.rows(); ++i) {
      REQUIRE(g.nodes.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("expected entropy under the uniform prior on the 2-simplex") {
    const QuadratureGrid g = simplex_grid(2, 10000);
    double acc = 0.0;
    for (int i = 0; i < g.nodes.rows(); ++i) {
      const double q = g.nodes(i, 0);
      acc -= g.weights[i] * (q * std::log(q) + (1.0 - q) * std::log(1.0 - q));
    }
    CHECK(std::abs(acc - 0.5) <= 1e-3);
  }

  SUBCASE("configuration errors") {
    CHECK_THROWS_AS(simplex_grid(5, 10), ConfigError);
    CHECK_THROWS_AS(simplex_grid(2, 1), ConfigError);
  }
}

TEST_CASE("finite EWA shifted regret stays under ln(K)/alpha") {
  Rng rng(707);
  for (int rep = 0; rep < 100; ++rep) {
    const int K = 2 + rng.uniform_int(9);
    const double alpha = 0.125;  // squared loss on [-1, 1]
    std::vector<double> preds(K);
    for (double& p : preds) p = rng.uniform(-1.0, 1.0);
    PredictionModel m = finite_model(preds, [](double w, double y) { return (w - y) * (w - y); });
    PosteriorState st(Prior::finite_uniform(K), alpha, m, Backend::ExactFinite, {}, 0);

    const int T = 60;
    std::vector<double> regret(K, 0.0);
    for (int t = 0; t < T; ++t) {
      const double y = rng.uniform(-1.0, 1.0);
      const double center = st.mean_prediction(Eigen::VectorXd(), 0.0);
      const double own = (center - y) * (center - y);
      for (int k = 0; k < K; ++k) {
        const double mid = 0.5 * preds[k] + 0.5 * center;
        regret[k] += own - (mid - y) * (mid - y);
      }
      st.ewa_update({Eigen::VectorXd(), y, center});
    }
    const double cap = std::log(static_cast<double>(K)) / alpha;
    for (int k = 0; k < K; ++k) REQUIRE(regret[k] <= cap + 1e-9);
  }
}

TEST_CASE("mean_prediction invariant to constant loss shifts") {
  Eigen::VectorXd pw(3);
  pw << 0.2, 0.5, 0.3;
  auto offset = std::make_shared<double>(0.0);
  auto run_with = [&](double shift_round2) {
    PredictionModel fm;
    fm.predict = [](const Eigen::VectorXd& p, const Eigen::VectorXd& preds, double) {
      return preds[static_cast<int>(p[0])];
    };
    fm.loss = [offset](double w, const Eigen::VectorXd&, double y) {
      return (w - y) * (w - y) + *offset;
    };
    PosteriorState st(Prior::finite_weighted(pw), 0.7, fm, Backend::ExactFinite, {}, 0);
    Eigen::VectorXd preds(3);
    preds << -0.5, 0.1, 0.9;
    *offset = 0.0;
    st.ewa_update({preds, 0.3, 0.1});
    *offset = shift_round2;
    st.ewa_update({preds, -0.2, 0.4});
    *offset = 0.0;
    return st.mean_prediction(preds, 0.0);
  };
  CHECK(std::abs(run_with(0.0) - run_with(7.5)) <= 1e-12);
}

TEST_CASE("metropolis chain length consistency") {
  PredictionModel m;
  m.predict = [](const Eigen::VectorXd& th, const Eigen::VectorXd& x, double) {
    return th.dot(x);
  };
  m.loss = [](double w, const Eigen::VectorXd&, double y) { return (w - y) * (w - y); };
  Eigen::VectorXd x1(1);
  x1 << 1.0;

  IntegratorConfig cfg;
  cfg.mcmc_steps = 20000;
  cfg.burn_in = 2000;
  cfg.proposal_scale = 1.0;
  PosteriorState st(Prior::gaussian_isotropic(1.0, 1), 1.0, m, Backend::Metropolis, cfg, 17);
  st.ewa_update({x1, 0.6, 0.1});
  st.ewa_update({x1, 0.4, 0.5});

  const McEstimate base = st.mean_prediction_mc(x1, 0.0);
  const McEstimate longer = st.mean_prediction_mc(x1, 0.0, 10 * cfg.mcmc_steps, cfg.burn_in);
  CHECK(std::abs(longer.mean - base.mean) <= 3.0 * base.std_error);
}

TEST_CASE("backend and prior pairings") {
  PredictionModel m = finite_model({0.0}, [](double w, double) { return w; });
  CHECK_THROWS_AS(
      PosteriorState(Prior::gaussian_isotropic(1.0, 1), 1.0, m, Backend::ExactFinite, {}, 0),
      ConfigError);
  CHECK_THROWS_AS(PosteriorState(Prior::finite_uniform(2), 1.0, m, Backend::SimplexGrid, {}, 0),
                  ConfigError);
  CHECK_THROWS_AS(
      PosteriorState(Prior::gaussian_isotropic(1.0, 4), 1.0, m, Backend::DenseGrid, {}, 0),
      ConfigError);
  CHECK_THROWS_AS(
      PosteriorState(Prior::gaussian_isotropic(1.0, 9), 1.0, m, Backend::Metropolis, {}, 0),
      ConfigError);
}
