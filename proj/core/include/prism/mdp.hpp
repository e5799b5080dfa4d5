#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "prism/errors.hpp"

namespace prism {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Per-intention reward over state-action pairs, r[s][a].
struct RewardTable {
  Matrix values;  // |S| x |A|
};

/// Action values Q[s][a].
struct QTable {
  Matrix values;  // |S| x |A|
};

/// Stochastic policy pi[s][a]; rows are distributions over actions.
struct PolicyTable {
  Matrix probs;  // |S| x |A|
};

/// Finite MDP with dense transitions and discount gamma in [0, 1).
///
/// Transitions are stored one matrix per state: transitions()[s] is the
/// |A| x |S| matrix of P(s' | s, a). The constructor validates that every
/// row is a probability distribution (sum within 1e-9 of 1, entries in
/// [0, 1]) and that gamma < 1 strictly.
class TabularMdp {
public:
  TabularMdp(int num_states, int num_actions,
             std::vector<Matrix> transitions, double discount);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double discount() const { return discount_; }
  const std::vector<Matrix>& transitions() const { return transitions_; }

  /// P(s' | s, a) row as a vector view.
  const Matrix& transition_matrix(int s) const { return transitions_[s]; }

  void check_reward(const RewardTable& r) const;

private:
  int num_states_;
  int num_actions_;
  std::vector<Matrix> transitions_;  // per state, |A| x |S|
  double discount_;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iters = 100000;
};

/// Bellman-optimality solve: synchronous value-iteration sweeps on Q until
/// the max-norm sweep delta is <= tol (which bounds the Bellman residual by
/// gamma * tol). Throws NonConvergence if the cap is hit first.
QTable solve_q(const TabularMdp& mdp, const RewardTable& r,
               const SolveOptions& opt = {});

/// Same, warm-started from an initial Q guess.
QTable solve_q(const TabularMdp& mdp, const RewardTable& r, const Matrix& q0,
               const SolveOptions& opt);

/// Row-wise softmax of Q with max-subtraction. Rows sum to 1 within 1e-12.
PolicyTable boltzmann_policy(const QTable& q);

/// Row-wise log-softmax of Q; log of boltzmann_policy without the exp.
Matrix log_boltzmann_policy(const QTable& q);

/// Iterative policy evaluation: V(s) = sum_a pi(a|s) (r(s,a) +
/// gamma * sum_s' P(s'|s,a) V(s')), solved by sweeps to tolerance `tol`.
Vector evaluate_policy(const TabularMdp& mdp, const RewardTable& r_eval,
                       const PolicyTable& policy, double tol = 1e-10,
                       int max_iters = 100000);

struct EvdResult {
  double mae;  // mean_s |V*(s) - Vhat(s)|
  double s0;   // Vhat(s0) - V*(s0), signed
};

/// Expected value difference between acting on a recovered reward and the
/// true one. Both policies are Boltzmann (temperature 1) of their Bellman
/// Q and both are evaluated under r_true.
EvdResult expected_value_difference(const TabularMdp& mdp,
                                    const RewardTable& r_true,
                                    const RewardTable& r_recovered,
                                    int start_state);

/// Load an MDP from the structured text format (see README, "MDP file").
/// Rows whose sum deviates from 1 by more than 1e-6 are rejected; rows
/// within that tolerance are renormalized to sum exactly 1.
TabularMdp load_mdp(const std::string& path);
void save_mdp(const TabularMdp& mdp, const std::string& path);

}  // namespace prism
