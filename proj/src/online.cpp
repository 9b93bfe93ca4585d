#include "o2b/online.hpp"

#include "o2b/errors.hpp"

namespace o2b {

double shifted_regret(const OnlineTrajectory& traj, const Comparator& q) {
  double regret = 0.0;
  for (int t = 0; t < traj.size(); ++t) {
    const OnlineTrajectory::Round& r = traj.rounds[t];
    double comparator = 0.0;
    for (size_t i = 0; i < q.predictors.size(); ++i) {
      const double w = q.predictors[i](t + 1, r.x, r.y);
      comparator += q.weights[i] * traj.loss(0.5 * w + 0.5 * r.center, r.x, r.y);
    }
    regret += r.shifted_loss - comparator;
  }
  return regret;
}

double AveragedPredictor::operator()(const Eigen::VectorXd& x, double y) const {
  double acc = 0.0;
  for (int t = first_round; t <= last_round; ++t) acc += snapshots[t - 1](x, y);
  return acc / window();
}

AveragedPredictor average_predictor(const OnlineTrajectory& traj) {
  if (traj.size() == 0 || traj.suffix_start > traj.size()) {
    throw ConfigError("average_predictor: empty averaging window");
  }
  AveragedPredictor avg;
  avg.first_round = traj.suffix_start;
  avg.last_round = traj.size();
  avg.snapshots = traj.snapshots;
  return avg;
}

}  // namespace o2b
