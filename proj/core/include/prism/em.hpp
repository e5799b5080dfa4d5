#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/dataset.hpp"
#include "prism/gating.hpp"
#include "prism/iavi.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// K reward tables plus the caches derived from them. The caches are
/// refreshed whenever rewards change; consumers may assume consistency.
struct RewardSet {
  std::vector<RewardTable> rewards;
  std::vector<QTable> qtables;
  std::vector<PolicyTable> policies;
  std::vector<Matrix> log_policies;

  int size() const { return static_cast<int>(rewards.size()); }
  void refresh(const TabularMdp& mdp, const SolveOptions& opt);
};

struct EmState {
  GatingNetwork net;
  RewardSet rewards;
  int iteration = 0;
  double train_ll = 0.0;
};

struct EmOptions {
  int num_intentions = 2;
  CellType cell = CellType::Rnn;
  int embed_dim = 32;
  int hidden_dim = 32;
  int observation_lag = 0;

  double smoothing = 1e-3;       // Laplace epsilon for empirical policies
  double reward_init_scale = 0.01;
  IaviOptions iavi;
  TrainOptions train;
  SolveOptions qsolve;           // cache refresh tolerance

  int max_iters = 180;
  double rel_tol = 1e-5;
  int patience = 5;
  std::uint64_t seed = 42;
};

/// Instrumentation for the linear-in-K E-step claim: one policy lookup and
/// one gate read per (step, intention).
struct EStepStats {
  long long policy_lookups = 0;
  long long gate_reads = 0;
  std::vector<long long> per_trajectory_lookups;
};

/// Per-step posterior over intentions,
///   w_ik = f(phi_i)_k pi_k(a_i|s_i) / sum_j f(phi_i)_j pi_j(a_i|s_i),
/// computed in log space with max-subtraction.
std::vector<ResponsibilityMatrix> e_step(
    const GatingNetwork& net, const RewardSet& rewards,
    const TrajectoryDataset& dataset,
    const std::vector<ObservationSequence>& observations,
    EStepStats* stats = nullptr);

/// Convenience overload that builds observations with the given lag.
std::vector<ResponsibilityMatrix> e_step(const EmState& state,
                                         const TrajectoryDataset& dataset,
                                         int observation_lag = 0,
                                         EStepStats* stats = nullptr);

struct MStepDiagnostics {
  double gate_loss = 0.0;
  double max_reward_delta = 0.0;
  // Reward objective sum_i sum_k w_ik log pi_k(a_i|s_i) with the same w,
  // before and after the reward update.
  double reward_objective_before = 0.0;
  double reward_objective_after = 0.0;
};

/// One maximization pass: gate first (weighted NLL plus smoothness), then
/// K independent weighted IAVI solves, then cache refresh.
MStepDiagnostics m_step(EmState& state, const TabularMdp& mdp,
                        const TrajectoryDataset& dataset,
                        const std::vector<ObservationSequence>& observations,
                        const std::vector<ResponsibilityMatrix>& resp,
                        const EmOptions& opt, GateTrainer& trainer,
                        Rng& shuffle_rng);

struct IterationDiagnostics {
  int iteration = 0;
  double train_ll = 0.0;
  double max_reward_delta = 0.0;
  double gate_loss = 0.0;
  double reward_objective_before = 0.0;
  double reward_objective_after = 0.0;
  long long policy_lookups = 0;
};

struct EmResult {
  EmState state;
  std::vector<IterationDiagnostics> history;
  std::vector<std::string> warnings;
  bool converged = false;
};

/// Full EM run. Stops when the relative train log-likelihood change stays
/// below rel_tol for `patience` consecutive iterations or at max_iters.
/// A log-likelihood decrease beyond 1e-6 records a warning, not an error
/// (the gate's inner SGD is inexact).
EmResult run_em(const TabularMdp& mdp, const TrajectoryDataset& dataset,
                const EmOptions& opt);

/// Initial state with tiny uniform random rewards (label symmetry broken)
/// and standard gate init; caches refreshed.
EmState init_em_state(const TabularMdp& mdp, const TrajectoryDataset& dataset,
                      const EmOptions& opt);

/// Mean per-step log of the mixture likelihood sum_k f_k pi_k over the
/// whole dataset.
double per_step_log_likelihood(
    const GatingNetwork& net, const RewardSet& rewards,
    const TrajectoryDataset& dataset,
    const std::vector<ObservationSequence>& observations);

/// Brute-force check that the EM auxiliary objective equals the sum of its
/// gate-only and reward-only terms, enumerating all K^n intention
/// sequences. Returns the max absolute discrepancy over `num_pairs` random
/// parameter pairs. Requires K^n <= 1000 per trajectory.
double verify_decomposition(const TabularMdp& mdp,
                            const TrajectoryDataset& tiny_dataset,
                            int num_intentions, int num_pairs,
                            std::uint64_t seed);

/// Brute-force check that per-step posteriors from the joint enumeration
/// match the per-step formula. Returns the max absolute discrepancy.
double verify_posterior_factorization(const TabularMdp& mdp,
                                      const Trajectory& tiny_trajectory,
                                      int num_intentions, int num_pairs,
                                      std::uint64_t seed);

}  // namespace prism
