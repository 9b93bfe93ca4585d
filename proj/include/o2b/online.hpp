#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace o2b {

struct Sample {
  Eigen::VectorXd x;
  double y = 0.0;
};
using Stream = std::vector<Sample>;

// A per-round predictor snapshot, evaluable at arbitrary (x, y).
using SnapshotFn = std::function<double(const Eigen::VectorXd& x, double y)>;

struct OnlineTrajectory {
  struct Round {
    Eigen::VectorXd x;
    double y = 0.0;
    double center = 0.0;        // f_t evaluated at (x, y) before the update
    double shifted_loss = 0.0;  // loss(center, y): the midpoint of center with itself
  };

  std::vector<Round> rounds;
  int suffix_start = 1;  // 1-based round from which averaging begins
  std::vector<SnapshotFn> snapshots;
  std::function<double(double w, const Eigen::VectorXd& x, double y)> loss;

  // Bound-applicability ledger: largest observed per-round loss difference
  // against the reference class, versus the declared cap.
  double m_declared = std::numeric_limits<double>::infinity();
  double m_observed = 0.0;
  bool m_flag = false;

  int size() const { return static_cast<int>(rounds.size()); }
};

// Comparator distribution Q over reference predictors. Entries may depend on
// the round index, so a point mass on the learner's own trajectory is
// expressible.
struct Comparator {
  std::vector<double> weights;
  std::vector<std::function<double(int t, const Eigen::VectorXd& x, double y)>> predictors;

  static Comparator point_mass(std::function<double(int, const Eigen::VectorXd&, double)> f) {
    Comparator q;
    q.weights = {1.0};
    q.predictors = {std::move(f)};
    return q;
  }
};

// sum_t [ loss(center_t) - E_{f ~ Q} loss(f's midpoint with center_t) ].
double shifted_regret(const OnlineTrajectory& traj, const Comparator& q);

/// Evaluable mean of the per-round snapshots over [first_round, last_round].
struct AveragedPredictor {
  int first_round = 1;
  int last_round = 0;
  std::vector<SnapshotFn> snapshots;  // the full trajectory's snapshots

  int window() const { return last_round - first_round + 1; }
  double operator()(const Eigen::VectorXd& x, double y = 0.0) const;
};

AveragedPredictor average_predictor(const OnlineTrajectory& traj);

// Learner concept:
//   double center(const Eigen::VectorXd& x, double y);       pre-update prediction
//   void update(const Eigen::VectorXd& x, double y, double center);
//   SnapshotFn snapshot() const;                              current predictor
//   std::function<double(double, const Eigen::VectorXd&, double)> plain_loss_fn() const;
//     (self-contained: the closure must not reference the learner)
//   double round_m(const Eigen::VectorXd& x, double y, double center) const;  (optional)
//   double declared_m() const;                                               (optional)
template <class Learner>
concept HasRoundM = requires(Learner& l, const Eigen::VectorXd& x) {
  { l.round_m(x, 0.0, 0.0) } -> std::convertible_to<double>;
  { l.declared_m() } -> std::convertible_to<double>;
};

template <class Learner>
OnlineTrajectory run(const Stream& stream, Learner& learner, int suffix_start = 1) {
  if (stream.empty()) throw std::invalid_argument("run: empty stream");
  const int T = static_cast<int>(stream.size());
  if (suffix_start < 1 || suffix_start > T) throw std::invalid_argument("run: bad suffix_start");

  OnlineTrajectory traj;
  traj.suffix_start = suffix_start;
  traj.rounds.reserve(T);
  traj.snapshots.reserve(T);
  traj.loss = learner.plain_loss_fn();
  if constexpr (HasRoundM<Learner>) traj.m_declared = learner.declared_m();

  for (int t = 0; t < T; ++t) {
    const Sample& s = stream[t];
    traj.snapshots.push_back(learner.snapshot());
    const double center = learner.center(s.x, s.y);
    traj.rounds.push_back({s.x, s.y, center, traj.loss(center, s.x, s.y)});
    if constexpr (HasRoundM<Learner>) {
      const double mt = learner.round_m(s.x, s.y, center);
      if (mt > traj.m_observed) traj.m_observed = mt;
    }
    try {
      learner.update(s.x, s.y, center);
    } catch (const std::exception& e) {
      throw std::runtime_error("run: learner update failed at round " + std::to_string(t + 1) +
                               ": " + e.what());
    }
  }
  traj.m_flag = traj.m_observed > traj.m_declared + 1e-12;
  return traj;
}

}  // namespace o2b
