#include "prism/gridworld.hpp"

#include <algorithm>
#include <cmath>

#include "prism/rng.hpp"

namespace prism {

namespace {

constexpr int kDx[5] = {0, 0, -1, 1, 0};
constexpr int kDy[5] = {1, -1, 0, 0, 0};

Cell intended_cell(Cell from, int action) {
  return Cell{from.x + kDx[action], from.y + kDy[action]};
}

// The two perpendicular move actions, for the lateral slip model.
constexpr int kPerp[5][2] = {
    {kLeft, kRight}, {kLeft, kRight}, {kUp, kDown}, {kUp, kDown}, {kStay, kStay}};

}  // namespace

bool FrustrationGridworld::is_barrier(Cell c) const {
  return std::find(barrier_cells.begin(), barrier_cells.end(), c) !=
         barrier_cells.end();
}

double FrustrationGridworld::switch_probability(int counter) const {
  return std::min(switch_slope * counter, switch_cap);
}

void FrustrationGridworld::validate() const {
  if (width <= 0 || height <= 0) throw InvalidConfig("grid must be nonempty");
  if (!(success_prob > 0.0 && success_prob <= 1.0)) {
    throw InvalidConfig("success probability must lie in (0, 1]");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw InvalidConfig("discount must lie in [0, 1)");
  }
  if (switch_slope < 0.0 || switch_cap < 0.0 || switch_cap > 1.0) {
    throw InvalidConfig("switch parameters out of range");
  }
  auto check_target = [&](Cell c, const char* name) {
    if (!in_bounds(c)) throw InvalidConfig(std::string(name) + " off grid");
    if (is_barrier(c)) {
      throw InvalidConfig(std::string(name) + " placed on a barrier cell");
    }
  };
  check_target(goal, "goal");
  check_target(origin, "origin");
  for (const Cell& c : extra_targets) check_target(c, "extra target");
  for (const Cell& c : barrier_cells) {
    if (!in_bounds(c)) throw InvalidConfig("barrier cell off grid");
  }
  bool has_free_start = false;
  for (int y = 0; y < height; ++y) {
    if (!is_barrier(Cell{0, y})) has_free_start = true;
  }
  if (!has_free_start) throw InvalidConfig("left column fully blocked");
}

TabularMdp build_mdp(const FrustrationGridworld& env) {
  env.validate();
  const int S = env.num_states();
  const int A = FrustrationGridworld::kNumActions;
  std::vector<Matrix> P(S, Matrix::Zero(A, S));

  for (int s = 0; s < S; ++s) {
    const Cell from = env.cell_of(s);
    for (int a = 0; a < A; ++a) {
      const Cell target = intended_cell(from, a);
      const bool blocked =
          !env.in_bounds(target) || env.is_barrier(target);
      if (a == kStay || blocked) {
        // Blocked moves and stay are deterministic: slip also stays.
        P[s](a, s) = 1.0;
        continue;
      }
      P[s](a, env.state_of(target)) += env.success_prob;
      const double slip_mass = 1.0 - env.success_prob;
      if (env.slip == FrustrationGridworld::SlipModel::Stay) {
        P[s](a, s) += slip_mass;
      } else {
        for (int side = 0; side < 2; ++side) {
          const Cell lateral = intended_cell(from, kPerp[a][side]);
          const int dest = (!env.in_bounds(lateral) || env.is_barrier(lateral))
                               ? s
                               : env.state_of(lateral);
          P[s](a, dest) += slip_mass / 2.0;
        }
      }
    }
  }
  return TabularMdp(S, A, std::move(P), env.discount);
}

std::vector<RewardTable> intention_rewards(const FrustrationGridworld& env) {
  env.validate();
  std::vector<Cell> targets = {env.goal, env.origin};
  targets.insert(targets.end(), env.extra_targets.begin(),
                 env.extra_targets.end());
  std::vector<RewardTable> out;
  out.reserve(targets.size());
  for (const Cell& t : targets) {
    Matrix r = Matrix::Zero(env.num_states(), FrustrationGridworld::kNumActions);
    r.row(env.state_of(t)).setOnes();
    out.push_back(RewardTable{std::move(r)});
  }
  return out;
}

ExpertPolicies expert_policies(const FrustrationGridworld& env) {
  const TabularMdp mdp = build_mdp(env);
  std::vector<RewardTable> rewards = intention_rewards(env);
  ExpertPolicies out{boltzmann_policy(solve_q(mdp, rewards[0])),
                     boltzmann_policy(solve_q(mdp, rewards[1])),
                     std::move(rewards[0]), std::move(rewards[1])};
  return out;
}

TrajectoryDataset generate(const FrustrationGridworld& env,
                           int num_trajectories, int horizon,
                           std::uint64_t seed) {
  env.validate();
  if (num_trajectories < 1 || horizon < 1) {
    throw InvalidConfig("need at least one trajectory and one step");
  }
  const TabularMdp mdp = build_mdp(env);
  const std::vector<RewardTable> rewards = intention_rewards(env);
  const int K = static_cast<int>(rewards.size());
  std::vector<PolicyTable> policies;
  policies.reserve(K);
  for (const RewardTable& r : rewards) {
    policies.push_back(boltzmann_policy(solve_q(mdp, r)));
  }

  std::vector<int> start_states;
  for (int y = 0; y < env.height; ++y) {
    const Cell c{0, y};
    if (!env.is_barrier(c)) start_states.push_back(env.state_of(c));
  }

  TrajectoryDataset ds;
  ds.num_states = env.num_states();
  ds.num_actions = FrustrationGridworld::kNumActions;
  ds.generator = "frustration-gridworld";
  ds.seed = seed;
  ds.trajectories.reserve(num_trajectories);

  for (int j = 0; j < num_trajectories; ++j) {
    // Per-trajectory stream, independent of generation order.
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(j));
    Trajectory traj;
    traj.states.reserve(horizon);
    traj.actions.reserve(horizon);
    traj.labels.reserve(horizon);
    traj.counters.reserve(horizon);

    int s = start_states[rng.below(start_states.size())];
    int intention = 0;  // goal
    int counter = 0;

    for (int t = 0; t < horizon; ++t) {
      // Sample an action from the active intention's Boltzmann policy.
      const double u = rng.uniform();
      double cum = 0.0;
      int a = FrustrationGridworld::kNumActions - 1;
      for (int cand = 0; cand < FrustrationGridworld::kNumActions; ++cand) {
        cum += policies[intention].probs(s, cand);
        if (u < cum) {
          a = cand;
          break;
        }
      }

      traj.states.push_back(s);
      traj.actions.push_back(a);
      traj.labels.push_back(intention);
      traj.counters.push_back(counter);

      const Cell from = env.cell_of(s);
      const Cell target = intended_cell(from, a);
      const bool blocked = !env.in_bounds(target) || env.is_barrier(target);
      const bool encounter =
          a != kStay && (env.is_barrier(target) ||
                         (env.count_edge_collisions && !env.in_bounds(target)));

      // Transition, consistent with the built tensor.
      int s_next = s;
      if (a != kStay && !blocked) {
        if (rng.uniform() < env.success_prob) {
          s_next = env.state_of(target);
        } else if (env.slip == FrustrationGridworld::SlipModel::Lateral) {
          const int side = rng.bernoulli(0.5) ? 1 : 0;
          const Cell lateral = intended_cell(from, kPerp[a][side]);
          s_next = (!env.in_bounds(lateral) || env.is_barrier(lateral))
                       ? s
                       : env.state_of(lateral);
        }
      }

      if (encounter) {
        ++counter;
        if (rng.uniform() < env.switch_probability(counter)) {
          intention = K == 2 ? 1 - intention
                             : static_cast<int>(
                                   (intention + 1 + rng.below(K - 1)) % K);
          counter = 0;
        }
      }
      s = s_next;
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

SwitchStats switch_statistics(const FrustrationGridworld& env,
                              const TrajectoryDataset& dataset) {
  SwitchStats stats;
  for (const Trajectory& traj : dataset.trajectories) {
    if (traj.labels.empty() || traj.counters.empty()) continue;
    for (int t = 0; t + 1 < traj.length(); ++t) {
      const Cell from = env.cell_of(traj.states[t]);
      const Cell target = intended_cell(from, traj.actions[t]);
      const bool encounter =
          traj.actions[t] != kStay &&
          (env.is_barrier(target) ||
           (env.count_edge_collisions && !env.in_bounds(target)));
      if (!encounter) continue;
      const int c = traj.counters[t] + 1;  // value used for the switch draw
      ++stats.encounters[c];
      if (traj.labels[t + 1] != traj.labels[t]) ++stats.switches[c];
    }
  }
  return stats;
}

}  // namespace prism
