#pragma once

#include <string>
#include <vector>

#include "prism/em.hpp"
#include "prism/gating.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// Trained model artifact: the K reward tables plus the gate, with enough
/// metadata to rebuild policies against an MDP. Binary, bit-exact.
struct Checkpoint {
  int num_states = 0;
  int num_actions = 0;
  double discount = 0.0;
  std::vector<RewardTable> rewards;
  GatingNetwork net;

  int num_intentions() const { return static_cast<int>(rewards.size()); }

  /// Rebuilds Q tables and Boltzmann policies under `mdp`.
  RewardSet reward_set(const TabularMdp& mdp,
                       const SolveOptions& opt = {}) const;
};

Checkpoint make_checkpoint(const EmState& state, const TabularMdp& mdp);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prism
