#include "prism/evaluation.hpp"

namespace prism {

TabularMdp estimate_transitions(const TrajectoryDataset& dataset,
                                int num_states, int num_actions,
                                double prior_strength, double discount) {
  if (prior_strength < 0.0) throw InvalidConfig("negative prior strength");
  std::vector<Matrix> counts(num_states, Matrix::Zero(num_actions, num_states));
  for (const Trajectory& traj : dataset.trajectories) {
    for (int i = 0; i + 1 < traj.length(); ++i) {
      const int s = traj.states[i];
      const int a = traj.actions[i];
      const int t = traj.states[i + 1];
      if (s < 0 || s >= num_states || t < 0 || t >= num_states || a < 0 ||
          a >= num_actions) {
        throw BoundsError("transition (" + std::to_string(s) + ", " +
                          std::to_string(a) + ", " + std::to_string(t) +
                          ") outside declared bounds");
      }
      counts[s](a, t) += 1.0;
    }
  }
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      const double total = counts[s].row(a).sum();
      if (total == 0.0 && prior_strength == 0.0) {
        counts[s].row(a).setConstant(1.0 / num_states);
        continue;
      }
      counts[s].row(a) = (counts[s].row(a).array() + prior_strength) /
                         (total + prior_strength * num_states);
    }
  }
  return TabularMdp(num_states, num_actions, std::move(counts), discount);
}

}  // namespace prism
