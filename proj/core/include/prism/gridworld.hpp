#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "prism/dataset.hpp"
#include "prism/mdp.hpp"

namespace prism {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Actions, in id order.
enum GridAction { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };

/// 5x5 gridworld whose expert alternates between heading for `goal` and
/// retreating to `origin`. A hidden frustration counter increments on every
/// attempted move into a barrier or off the grid; after each encounter the
/// intention flips with probability min(switch_slope * c, switch_cap) and
/// the counter resets. The switching process is therefore non-Markovian in
/// (state, action).
struct FrustrationGridworld {
  int width = 5;
  int height = 5;
  double success_prob = 0.9;
  std::vector<Cell> barrier_cells = {{2, 1}, {2, 2}, {2, 3}};
  Cell goal{4, 4};
  Cell origin{0, 0};
  double switch_slope = 0.15;
  double switch_cap = 0.9;
  double discount = 0.97;

  /// Extra reward targets beyond (goal, origin); used by multi-intention
  /// variants of the benchmark. Switching rotates uniformly among all
  /// targets when more than two are present.
  std::vector<Cell> extra_targets;

  /// Where the 1 - success_prob failure mass goes on an unblocked move.
  enum class SlipModel { Stay, Lateral };
  SlipModel slip = SlipModel::Stay;

  /// Whether attempted moves off the grid edge count as barrier encounters
  /// (barrier-cell hits always count).
  bool count_edge_collisions = true;

  static constexpr int kNumActions = 5;

  int num_states() const { return width * height; }
  int state_of(Cell c) const { return c.y * width + c.x; }
  Cell cell_of(int s) const { return Cell{s % width, s / width}; }
  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
  }
  bool is_barrier(Cell c) const;
  int num_intentions() const { return 2 + static_cast<int>(extra_targets.size()); }

  double switch_probability(int counter) const;
  void validate() const;
};

TabularMdp build_mdp(const FrustrationGridworld& env);

/// Indicator reward for each intention target: r_k(s, .) = 1 iff s is the
/// k-th target (order: goal, origin, extra targets).
std::vector<RewardTable> intention_rewards(const FrustrationGridworld& env);

struct ExpertPolicies {
  PolicyTable pi_goal;
  PolicyTable pi_abandon;
  RewardTable r_goal;
  RewardTable r_abandon;
};

/// Boltzmann policies (temperature 1) from the Bellman Q of each
/// ground-truth reward.
ExpertPolicies expert_policies(const FrustrationGridworld& env);

/// Roll out `num_trajectories` demonstrations of length `horizon`, starting
/// from a uniformly random non-barrier cell in the left column with the
/// goal intention and a zero counter. Ground-truth intention labels and
/// counter traces are stored for diagnostics only.
TrajectoryDataset generate(const FrustrationGridworld& env,
                           int num_trajectories, int horizon,
                           std::uint64_t seed);

/// Encounter/switch tallies keyed by the counter value in effect at the
/// encounter, recomputed from a generated dataset's labels and counters.
struct SwitchStats {
  std::map<int, long> encounters;
  std::map<int, long> switches;
};
SwitchStats switch_statistics(const FrustrationGridworld& env,
                              const TrajectoryDataset& dataset);

}  // namespace prism
