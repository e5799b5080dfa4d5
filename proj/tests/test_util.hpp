#pragma once

#include <prism/dataset.hpp>
#include <prism/mdp.hpp>
#include <prism/rng.hpp>

#include <cmath>
#include <vector>

namespace testutil {

/// Dense random MDP with exponential-draw transition rows.
inline prism::TabularMdp random_mdp(int num_states, int num_actions,
                                    double gamma, prism::Rng& rng) {
  std::vector<prism::Matrix> P(num_states,
                               prism::Matrix(num_actions, num_states));
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      double total = 0.0;
      for (int t = 0; t < num_states; ++t) {
        const double w = -std::log(1.0 - rng.uniform());
        P[s](a, t) = w;
        total += w;
      }
      P[s].row(a) /= total;
    }
  }
  return prism::TabularMdp(num_states, num_actions, std::move(P), gamma);
}

inline prism::RewardTable random_reward(int num_states, int num_actions,
                                        prism::Rng& rng, double lo = -1.0,
                                        double hi = 1.0) {
  prism::Matrix r(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) r(s, a) = rng.uniform(lo, hi);
  return prism::RewardTable{std::move(r)};
}

/// Zero-means each state's reward row in place.
inline void zero_mean_rows(prism::RewardTable& r) {
  for (Eigen::Index s = 0; s < r.values.rows(); ++s) {
    r.values.row(s).array() -= r.values.row(s).mean();
  }
}

inline prism::TabularMdp single_state_mdp(double gamma, int num_actions = 1) {
  std::vector<prism::Matrix> P(1, prism::Matrix::Ones(num_actions, 1));
  return prism::TabularMdp(1, num_actions, std::move(P), gamma);
}

/// Random valid dataset over the given bounds.
inline prism::TrajectoryDataset random_dataset(int num_states, int num_actions,
                                               int num_trajectories,
                                               int length, prism::Rng& rng) {
  prism::TrajectoryDataset ds;
  ds.num_states = num_states;
  ds.num_actions = num_actions;
  ds.generator = "test";
  for (int j = 0; j < num_trajectories; ++j) {
    prism::Trajectory t;
    for (int i = 0; i < length; ++i) {
      t.states.push_back(rng.uniform_int(0, num_states - 1));
      t.actions.push_back(rng.uniform_int(0, num_actions - 1));
    }
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

}  // namespace testutil
