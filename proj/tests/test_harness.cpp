#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "o2b/harness.hpp"
#include "o2b/rng.hpp"

using namespace o2b;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd x(1);
  x << v;
  return x;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate") {
  SUBCASE("degenerate multinomial emits a single symbol") {
    Eigen::VectorXd p(3);
    p << 1.0, 0.0, 0.0;
    const Stream s = generate(multinomial_model(p), 200, 1);
    for (const Sample& smp : s) REQUIRE(smp.y == 0.0);
  }

  SUBCASE("logistic with theta* = 0 balances labels") {
    const Stream s = generate(logistic_model(vec1(0.0), 1.0, 8), 10000, 2);
    double ones = 0;
    for (const Sample& smp : s) ones += smp.y;
    const double freq = ones / s.size();
    CHECK(std::abs(freq - 0.5) <= 3.0 * 0.5 / std::sqrt(10000.0));  // binomial 3-sigma
  }

  SUBCASE("bounded regression respects |Y| = l exactly") {
    const DataModel m = bounded_regression_model(vec1(0.7), 1.0, 0.8, 8, false);
    const Stream s = generate(m, 500, 3);
    for (const Sample& smp : s) REQUIRE(std::abs(smp.y) == doctest::Approx(0.8));
    for (const Sample& smp : s) REQUIRE(smp.x.norm() <= 1.0 + 1e-12);
  }

  SUBCASE("uniform noise keeps |Y| <= l and the conditional mean") {
    const DataModel m =
        bounded_regression_model(vec1(0.7), 1.0, 0.8, 8, false, DataModel::Noise::Uniform);
    const Stream s = generate(m, 20000, 4);
    double mean_err = 0.0;
    for (const Sample& smp : s) {
      REQUIRE(std::abs(smp.y) <= 0.8 + 1e-12);
      mean_err += smp.y - m.cond_mean(smp.x);
    }
    CHECK(std::abs(mean_err / s.size()) <= 3.0 * m.noise_halfwidth / std::sqrt(3.0 * 20000.0));
  }

  SUBCASE("determinism in the seed") {
    const DataModel m = bounded_regression_model(vec1(0.5), 1.0, 1.0, 8, false);
    const Stream a = generate(m, 50, 77);
    const Stream b = generate(m, 50, 77);
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].y == b[i].y);
  }
}

TEST_CASE("true_risk") {
  SUBCASE("discrete log-loss risk equals H + KL") {
    Eigen::VectorXd p(3), q(3);
    p << 0.5, 0.3, 0.2;
    q << 0.4, 0.4, 0.2;
    const DataModel model = multinomial_model(p);
    auto density = [&q](double y, const Eigen::VectorXd&) { return q[static_cast<int>(y)]; };
    const double risk = true_risk_logloss(model, density).value;
    CHECK(risk == doctest::Approx(entropy(p) + kl_discrete(p, q)).epsilon(1e-12));
  }

  SUBCASE("moment arithmetic matches Monte Carlo within 3 standard errors") {
    const DataModel model = bounded_regression_model(vec1(0.6), 1.0, 1.0, 8, false);
    auto g = [](const Eigen::VectorXd& x) { return 0.4 * x[0]; };
    const RiskValue closed = true_risk_squared(model, g);
    const RiskValue mc = true_risk_squared(model, g, RiskMethod::MonteCarlo, 200000, 5);
    CHECK(closed.closed_form);
    CHECK(!mc.closed_form);
    CHECK(std::abs(closed.value - mc.value) <= 3.0 * mc.std_error);
  }

  SUBCASE("constant predictor on constant outcomes has zero risk") {
    const std::string path = (fs::temp_directory_path() / "o2b_replay_test.csv").string();
    {
      std::ofstream out(path);
      for (int i = 0; i < 64; ++i) out << 0.25 << "," << 1.5 << "\n";
    }
    const DataModel model = replay_model(path, 1.0, 2.0);
    auto g = [](const Eigen::VectorXd&) { return 1.5; };
    const RiskValue risk = true_risk_squared(model, g, RiskMethod::MonteCarlo, 64, 1);
    CHECK(risk.value == doctest::Approx(0.0));
    std::remove(path.c_str());
  }
}

TEST_CASE("comparator optima") {
  SUBCASE("well-specified quadratic recovers theta*") {
    const Eigen::VectorXd theta_star = vec1(0.6);
    const DataModel model = bounded_regression_model(theta_star, 1.0, 1.0, 8, false);
    Eigen::VectorXd argmin;
    comparator_optimum_squared(model, 2.0, &argmin);
    CHECK(argmin[0] == doctest::Approx(0.6).epsilon(1e-9));
  }

  SUBCASE("ball constraint binds when the minimizer is outside") {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd c(2);
    c << 3.0, 0.0;
    const Eigen::VectorXd theta = constrained_quadratic_min(sigma, c, 1.0);
    CHECK(theta.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(theta[0] == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("logistic optimum beats nearby parameters") {
    const DataModel model = logistic_model(vec1(0.5), 1.0, 8);
    Eigen::VectorXd argmin;
    const double best = comparator_optimum_logistic(model, 1.0, &argmin);
    auto risk_at = [&model](double th) {
      auto q = [th](double y, const Eigen::VectorXd& x) {
        const double p1 = 1.0 / (1.0 + std::exp(-th * x[0]));
        return y > 0.5 ? p1 : 1.0 - p1;
      };
      return true_risk_logloss(model, q).value;
    };
    CHECK(best <= risk_at(argmin[0] + 0.05) + 1e-12);
    CHECK(best <= risk_at(argmin[0] - 0.05) + 1e-12);
    CHECK(argmin[0] == doctest::Approx(0.5).epsilon(1e-3));  // well-specified
  }
}

TEST_CASE("gauss_hermite integrates polynomials against exp(-u^2)") {
  Eigen::VectorXd u, w;
  gauss_hermite(32, u, w);
  CHECK(w.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  double second = 0.0, fourth = 0.0;
  for (int i = 0; i < u.size(); ++i) {
    second += w[i] * u[i] * u[i];
    fourth += w[i] * std::pow(u[i], 4);
  }
  CHECK(second == doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-12));
  CHECK(fourth == doctest::Approx(3.0 * std::sqrt(M_PI) / 4.0).epsilon(1e-12));
}

TEST_CASE("config round-trip") {
  ExperimentConfig cfg;
  cfg.experiment = "linreg-vaw";
  cfg.d = 3;
  cfg.T = 123;
  cfg.r = 1.25;
  cfg.b = 2.0;
  cfg.l = 0.75;
  cfg.theta_star = Eigen::VectorXd::LinSpaced(3, -0.5, 0.5);
  cfg.noise = "uniform";
  cfg.replications = 37;
  cfg.delta = 0.025;
  cfg.seed = 987654321;
  cfg.workers = 4;
  cfg.backend = "grid";
  cfg.grid_resolution = 77;
  cfg.out_path = "somewhere/else";
  const ExperimentConfig parsed = parse_config_text(emit_config(cfg));
  CHECK(parsed == cfg);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config_text("nonsense_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[generator]\nd = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_file("/nonexistent/path.ini"), ConfigError);
  ExperimentConfig cfg;
  cfg.experiment = "no-such-experiment";
  cfg.out_path = (fs::temp_directory_path() / "o2b_bad_exp").string();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("run_experiment basics") {
  const std::string base = (fs::temp_directory_path() / "o2b_harness_test").string();

  SUBCASE("single replication reruns byte-identically") {
    ExperimentConfig cfg;
    cfg.experiment = "discrete";
    cfg.d = 2;
    cfg.T = 60;
    cfg.replications = 1;
    cfg.seed = 5;
    cfg.out_path = base + "/one_a";
    const ExperimentOutput a = run_experiment(cfg);
    cfg.out_path = base + "/one_b";
    const ExperimentOutput b = run_experiment(cfg);
    CHECK(slurp(a.csv_path) == slurp(b.csv_path));
    CHECK(!slurp(a.csv_path).empty());
  }

  SUBCASE("csv schema and row count") {
    ExperimentConfig cfg;
    cfg.experiment = "aggregation";
    cfg.d = 2;
    cfg.T = 40;
    cfg.K = 3;
    cfg.replications = 25;
    cfg.seed = 6;
    cfg.out_path = base + "/agg";
    const ExperimentOutput out = run_experiment(cfg);
    std::ifstream in(out.csv_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "replication,seed,excess_risk,regret,m_observed,flags");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 25);
    CHECK(out.report.risks.size() == 25);
    // replication seeds derive as base seed + index
    for (size_t i = 0; i < out.rows.size(); ++i) {
      REQUIRE(out.rows[i].seed == cfg.seed + i);
    }
    // shifted regret of the aggregator stays under the pinned bound
    for (const ReplicationRow& row : out.rows) {
      REQUIRE(row.regret <= std::log(3.0) * 8.0 + 1e-9);
    }
  }

  SUBCASE("gaussian-glm experiment runs end to end") {
    ExperimentConfig cfg;
    cfg.experiment = "gaussian-glm";
    cfg.d = 1;
    cfg.T = 60;
    cfg.replications = 20;
    cfg.seed = 9;
    cfg.backend = "grid";
    cfg.grid_resolution = 256;
    cfg.x_atoms = 8;
    cfg.out_path = base + "/gglm";
    const ExperimentOutput out = run_experiment(cfg);
    CHECK(out.failures == 0);
    CHECK(std::isfinite(out.report.quantile));
    CHECK(out.report.violation_rate == doctest::Approx(0.0));  // bound far above desk scale
  }

  SUBCASE("linreg-ewa experiment runs end to end") {
    ExperimentConfig cfg;
    cfg.experiment = "linreg-ewa";
    cfg.d = 1;
    cfg.T = 60;
    cfg.replications = 20;
    cfg.seed = 10;
    cfg.backend = "grid";
    cfg.grid_resolution = 256;
    cfg.x_atoms = 8;
    cfg.out_path = base + "/lre";
    const ExperimentOutput out = run_experiment(cfg);
    CHECK(out.failures == 0);
    CHECK(out.report.violation_rate == doctest::Approx(0.0));
  }

  SUBCASE("discrete baseline comparison lands in the summary") {
    ExperimentConfig cfg;
    cfg.experiment = "discrete";
    cfg.d = 3;
    cfg.T = 120;
    cfg.replications = 20;
    cfg.seed = 11;
    cfg.out_path = base + "/disc3";
    const ExperimentOutput out = run_experiment(cfg);
    CHECK(out.failures == 0);
    const std::string json_text = slurp(out.json_path);
    CHECK(json_text.find("add-one smoothing") != std::string::npos);
  }

  SUBCASE("freedman experiment emits rates per configuration") {
    ExperimentConfig cfg;
    cfg.experiment = "freedman";
    cfg.T = 50;
    cfg.replications = 400;
    cfg.seed = 7;
    cfg.out_path = base + "/freedman";
    const ExperimentOutput out = run_experiment(cfg);
    const std::string csv = slurp(out.csv_path);
    CHECK(csv.find("rademacher") != std::string::npos);
    CHECK(csv.find("centered-bernoulli") != std::string::npos);
    CHECK(out.failures == 0);
  }

  SUBCASE("lemma suite passes") {
    ExperimentConfig cfg;
    cfg.experiment = "lemma-suite";
    cfg.replications = 20000;  // draw count for the suite
    cfg.seed = 8;
    cfg.out_path = base + "/lemmas";
    const ExperimentOutput out = run_experiment(cfg);
    CHECK(out.failures == 0);
  }
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(500, 0);
  parallel_for(500, 4, [&](int i) { hits[i] += 1; });
  for (int h : hits) REQUIRE(h == 1);
}
