#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "o2b/estimators.hpp"
#include "o2b/online.hpp"
#include "o2b/rng.hpp"

using namespace o2b;

namespace {

// Finite EWA learner over constant experts with squared loss on [-1, 1].
PosteriorLearner make_finite_learner(const std::vector<double>& preds, double alpha = 0.125) {
  PredictionModel m;
  m.predict = [preds](const Eigen::VectorXd& param, const Eigen::VectorXd&, double) {
    return preds[static_cast<int>(param[0])];
  };
  m.loss = [](double w, const Eigen::VectorXd&, double y) { return (w - y) * (w - y); };
  PosteriorState st(Prior::finite_uniform(static_cast<int>(preds.size())), alpha, m,
                    Backend::ExactFinite, {}, 0);
  return PosteriorLearner(std::move(st), {});
}

Stream random_stream(int T, std::uint64_t seed) {
  Rng rng(seed);
  Stream s;
  for (int t = 0; t < T; ++t) s.push_back({Eigen::VectorXd(), rng.uniform(-1.0, 1.0)});
  return s;
}

}  // namespace

TEST_CASE("single expert: centers equal the expert, zero self-regret") {
  PosteriorLearner learner = make_finite_learner({0.4});
  const Stream stream = random_stream(30, 1);
  const OnlineTrajectory traj = run(stream, learner);
  for (const auto& r : traj.rounds) CHECK(r.center == doctest::Approx(0.4));
  const double reg = shifted_regret(
      traj, Comparator::point_mass([](int, const Eigen::VectorXd&, double) { return 0.4; }));
  CHECK(reg == doctest::Approx(0.0));
}

TEST_CASE("regret against the learner's own sequence vanishes") {
  PosteriorLearner learner = make_finite_learner({-0.7, 0.3, 0.8});
  const Stream stream = random_stream(40, 9);
  const OnlineTrajectory traj = run(stream, learner);
  const auto& rounds = traj.rounds;
  const double reg = shifted_regret(
      traj, Comparator::point_mass([&rounds](int t, const Eigen::VectorXd&, double) {
        return rounds[t - 1].center;  // the point mass follows the trajectory itself
      }));
  CHECK(std::abs(reg) <= 1e-12);
}

TEST_CASE("T = 1: one round, averaged predictor is the first snapshot") {
  PosteriorLearner learner = make_finite_learner({-0.3, 0.8});
  Stream stream = random_stream(1, 2);
  const OnlineTrajectory traj = run(stream, learner);
  REQUIRE(traj.size() == 1);
  const AveragedPredictor avg = average_predictor(traj);
  CHECK(avg(Eigen::VectorXd(), 0.0) ==
        doctest::Approx(traj.snapshots[0](Eigen::VectorXd(), 0.0)));
  CHECK(avg(Eigen::VectorXd(), 0.0) == doctest::Approx(0.25));  // uniform over {-0.3, 0.8}
}

TEST_CASE("online property: permuting future rounds leaves earlier centers unchanged") {
  const Stream base = random_stream(40, 3);
  Stream permuted = base;
  std::reverse(permuted.begin() + 25, permuted.end());

  PosteriorLearner l1 = make_finite_learner({-0.5, 0.1, 0.7});
  PosteriorLearner l2 = make_finite_learner({-0.5, 0.1, 0.7});
  const OnlineTrajectory t1 = run(base, l1);
  const OnlineTrajectory t2 = run(permuted, l2);
  for (int t = 0; t <= 25; ++t) {
    REQUIRE(t1.rounds[t].center == t2.rounds[t].center);  // bitwise
  }
}

TEST_CASE("shifted regret matches a brute-force recomputation") {
  Rng rng(44);
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<double> preds = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    PosteriorLearner learner = make_finite_learner(preds);
    const Stream stream = random_stream(50, 100 + rep);
    const OnlineTrajectory traj = run(stream, learner);

    Comparator q;
    q.weights = {0.3, 0.7};
    for (double p : preds) {
      q.predictors.push_back([p](int, const Eigen::VectorXd&, double) { return p; });
    }
    const double got = shifted_regret(traj, q);

    double expected = 0.0;
    for (int t = 0; t < traj.size(); ++t) {
      const double c = traj.rounds[t].center;
      const double y = traj.rounds[t].y;
      const double own = (c - y) * (c - y);
      double cmp = 0.0;
      cmp += 0.3 * (0.5 * preds[0] + 0.5 * c - y) * (0.5 * preds[0] + 0.5 * c - y);
      cmp += 0.7 * (0.5 * preds[1] + 0.5 * c - y) * (0.5 * preds[1] + 0.5 * c - y);
      expected += own - cmp;
    }
    REQUIRE(std::abs(got - expected) <= 1e-12);
  }
}

TEST_CASE("averaged predictor windows") {
  auto constant_snapshot = [](double v) {
    return SnapshotFn([v](const Eigen::VectorXd&, double) { return v; });
  };

  SUBCASE("identical snapshots") {
    OnlineTrajectory traj;
    traj.rounds.resize(5);
    for (int i = 0; i < 5; ++i) traj.snapshots.push_back(constant_snapshot(0.7));
    const AveragedPredictor avg = average_predictor(traj);
    CHECK(avg(Eigen::VectorXd(), 0.0) == doctest::Approx(0.7));
  }

  SUBCASE("two snapshots 0 and 1 average to one half") {
    OnlineTrajectory traj;
    traj.rounds.resize(2);
    traj.snapshots = {constant_snapshot(0.0), constant_snapshot(1.0)};
    CHECK(average_predictor(traj)(Eigen::VectorXd(), 0.0) == doctest::Approx(0.5));
  }

  SUBCASE("suffix window T/2+1 on T=4") {
    OnlineTrajectory traj;
    traj.rounds.resize(4);
    for (double v : {10.0, 20.0, 3.0, 5.0}) traj.snapshots.push_back(constant_snapshot(v));
    traj.suffix_start = 3;
    const AveragedPredictor avg = average_predictor(traj);
    CHECK(avg.window() == 2);
    CHECK(avg(Eigen::VectorXd(), 0.0) == doctest::Approx(4.0));  // (3 + 5) / 2
  }

  SUBCASE("empty window is a configuration error") {
    OnlineTrajectory traj;
    CHECK_THROWS_AS(average_predictor(traj), ConfigError);
  }
}

TEST_CASE("Jensen sanity: averaged loss below mean snapshot loss pointwise") {
  PosteriorLearner learner = make_finite_learner({-0.8, -0.1, 0.3, 0.9});
  const Stream stream = random_stream(60, 5);
  const OnlineTrajectory traj = run(stream, learner);
  const AveragedPredictor avg = average_predictor(traj);
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    const double y = rng.uniform(-1.0, 1.0);
    const double favg = avg(Eigen::VectorXd(), y);
    double mean_loss = 0.0;
    for (const SnapshotFn& snap : traj.snapshots) {
      const double f = snap(Eigen::VectorXd(), y);
      mean_loss += (f - y) * (f - y);
    }
    mean_loss /= traj.snapshots.size();
    REQUIRE((favg - y) * (favg - y) <= mean_loss + 1e-10);
  }
}

TEST_CASE("determinism: identical seeds give bitwise-identical trajectories") {
  const Stream stream = random_stream(80, 6);
  PosteriorLearner l1 = make_finite_learner({-0.6, 0.2, 0.5});
  PosteriorLearner l2 = make_finite_learner({-0.6, 0.2, 0.5});
  const OnlineTrajectory t1 = run(stream, l1);
  const OnlineTrajectory t2 = run(stream, l2);
  for (int t = 0; t < t1.size(); ++t) {
    REQUIRE(t1.rounds[t].center == t2.rounds[t].center);
    REQUIRE(t1.rounds[t].shifted_loss == t2.rounds[t].shifted_loss);
  }
}

TEST_CASE("ledger losses match re-evaluation from stored centers") {
  PosteriorLearner learner = make_finite_learner({-0.2, 0.6});
  const Stream stream = random_stream(50, 7);
  const OnlineTrajectory traj = run(stream, learner);
  for (const auto& r : traj.rounds) {
    REQUIRE(r.shifted_loss == traj.loss(r.center, r.x, r.y));
  }
}

TEST_CASE("run input validation") {
  PosteriorLearner learner = make_finite_learner({0.0});
  CHECK_THROWS_AS(run(Stream{}, learner), std::invalid_argument);
  const Stream stream = random_stream(3, 8);
  CHECK_THROWS_AS(run(stream, learner, 9), std::invalid_argument);
}
