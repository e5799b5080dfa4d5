#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prism/config.hpp"
#include "prism/dataset.hpp"
#include "prism/em.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// Smoothed empirical transition model:
///   P(s'|s,a) = (count(s,a,s') + alpha) / (count(s,a) + alpha |S|),
/// so unobserved (s,a) rows come out uniform.
TabularMdp estimate_transitions(const TrajectoryDataset& dataset,
                                int num_states, int num_actions,
                                double prior_strength, double discount);

/// Ground truth handed to cross-validation when the environment is known:
/// named true rewards plus the EVD reference start state.
struct GroundTruth {
  std::vector<std::string> names;
  std::vector<RewardTable> rewards;
  int start_state = 0;
};

struct FoldMetrics {
  int fold = 0;
  double train_ll = 0.0;
  double test_ll = 0.0;
  int em_iterations = 0;
  bool converged = false;
  std::vector<int> test_indices;
  std::vector<std::vector<int>> test_argmax;  // per test trajectory
  // Parallel to GroundTruth::names; empty when no ground truth given.
  std::vector<EvdResult> evd;
  std::vector<int> matched_intention;  // recovered k assigned to each truth
};

struct FoldReport {
  std::vector<FoldMetrics> folds;
  double mean_train_ll = 0.0, std_train_ll = 0.0;
  double mean_test_ll = 0.0, std_test_ll = 0.0;
};

/// Trajectory-level k-fold cross-validation: seeded shuffle, contiguous
/// chunks, one EM run per fold, held-out per-step log-likelihood.
FoldReport cross_validate(const TabularMdp& mdp,
                          const TrajectoryDataset& dataset,
                          const RunConfig& config,
                          const std::optional<GroundTruth>& truth = {});

struct SegmentResult {
  std::vector<ResponsibilityMatrix> posteriors;
  std::vector<std::vector<int>> argmax;  // ties resolved to the lowest index
  std::vector<int> switch_counts;
};

SegmentResult segment(const GatingNetwork& net, const RewardSet& rewards,
                      const TrajectoryDataset& dataset,
                      int observation_lag = 0);

/// Fraction of steps whose predicted intention matches the ground-truth
/// label under the best single label permutation (exhaustive over K!).
double segmentation_accuracy(const std::vector<std::vector<int>>& predicted,
                             const TrajectoryDataset& dataset,
                             int num_intentions);

/// Assigns each true reward a distinct recovered intention (injectively)
/// minimizing the summed EVD MAE; with K = 1 every truth maps to 0.
/// Returns (assignment, per-truth EVD).
std::pair<std::vector<int>, std::vector<EvdResult>> match_intentions_by_evd(
    const TabularMdp& mdp, const std::vector<RewardTable>& true_rewards,
    const std::vector<RewardTable>& recovered, int start_state);

/// Run-directory writers (line-delimited diagnostics, metrics summary).
void write_diagnostics_jsonl(const std::vector<IterationDiagnostics>& history,
                             const std::vector<std::string>& warnings,
                             const std::string& path);
void write_metrics_json(const FoldReport& report,
                        const std::optional<GroundTruth>& truth,
                        const std::string& path);
void write_responsibilities_jsonl(
    const std::vector<ResponsibilityMatrix>& responsibilities,
    const std::string& path);

}  // namespace prism
