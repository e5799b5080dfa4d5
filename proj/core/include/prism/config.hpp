#pragma once

#include <cstdint>
#include <string>

#include "prism/em.hpp"

namespace prism {

/// Run configuration. Defaults mirror the per-dataset profiles; every value
/// is echoed into run metadata so results are reproducible from the output
/// directory alone.
struct RunConfig {
  std::string profile = "gridworld";  // gridworld | labyrinth | bridge

  int num_states = 25;
  int num_actions = 5;
  double discount = 0.97;

  int num_intentions = 2;
  std::string architecture = "rnn";  // rnn | lstm
  int embed_dim = 32;
  int hidden_dim = 32;
  int observation_lag = 0;

  double learning_rate = 1e-3;
  int epochs_per_mstep = 1;
  int batch_size = 32;
  std::string optimizer = "sgd";
  double lambda_l1 = 0.0;
  double lambda_kl = 0.0;

  int max_em_iters = 60;
  double rel_tol = 1e-5;
  int patience = 5;
  std::uint64_t seed = 42;
  int folds = 5;

  double smoothing = 1e-3;
  double reward_init_scale = 0.01;
  double iavi_tol = 1e-8;
  int iavi_max_iters = 500;
  int iavi_sweeps_per_mstep = 0;  // 0 = run each reward solve to convergence
  double damping = 1.0;
  double q_tol = 1e-10;
  double prior_strength = 0.05;  // transition-count smoothing

  void validate() const;
  EmOptions em_options() const;
};

/// Profile presets ("gridworld", "labyrinth", "bridge").
RunConfig default_config(const std::string& profile);

/// JSON object with exactly the RunConfig fields; unknown keys are errors.
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);

/// Serialized form used for config snapshots and run metadata.
std::string config_to_json(const RunConfig& config);

}  // namespace prism
