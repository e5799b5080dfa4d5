#pragma once

#include <vector>

#include "prism/dataset.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// Per-step posterior over intentions for one trajectory, rows on the
/// K-simplex. One matrix per trajectory (sequences are ragged).
using ResponsibilityMatrix = Matrix;  // n x K

/// Responsibility-weighted state-action visitation mass.
struct WeightedVisitCounts {
  Matrix counts;        // |S| x |A|, sums of per-step weights
  Vector state_totals;  // row sums of counts
};

/// Smoothed maximum-likelihood policy estimate from weighted counts.
struct EmpiricalPolicy {
  Matrix probs;               // |S| x |A|, strictly positive
  std::vector<bool> visited;  // state_totals > 0
};

/// c[s][a] = sum over all demonstration steps i with (s_i, a_i) = (s, a)
/// of responsibilities[traj](i, intention).
WeightedVisitCounts accumulate_counts(
    const TrajectoryDataset& dataset,
    const std::vector<ResponsibilityMatrix>& responsibilities, int intention);

/// pi(a|s) = (c[s][a] + eps) / (c[s] + |A| eps). Unvisited states come out
/// uniform and are flagged visited = false.
EmpiricalPolicy empirical_policy(const WeightedVisitCounts& counts,
                                 double smoothing);

struct IaviOptions {
  double tol = 1e-8;        // max-norm change in r between sweeps
  int max_iters = 500;
  double damping = 1.0;     // new r = (1-damping) r_old + damping r_solved
  double q_tol = 1e-12;     // inner Bellman solve tolerance
  int q_max_iters = 1000000;
  int sweeps = 0;           // 0 = run to convergence; >0 = fixed sweep count
};

/// Inverse action-value iteration: recover the reward whose Boltzmann
/// policy reproduces `pihat` at every visited state. The per-state linear
/// system is singular along the all-ones direction; the minimum-norm
/// solution fixes the zero-mean-per-state gauge. Unvisited states keep
/// r = 0. With |A| = 1 the reward is unidentifiable and r = 0 is returned.
RewardTable iavi_solve(const TabularMdp& mdp, const EmpiricalPolicy& pihat,
                       const IaviOptions& opt = {});

/// Pseudoinverse of the fixed |A| x |A| difference-system matrix
/// X = I - (11^T - I)/(|A|-1). Exposed for reuse and direct testing.
Matrix iavi_system_pinv(int num_actions);

}  // namespace prism
