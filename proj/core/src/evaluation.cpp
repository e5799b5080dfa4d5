#include "prism/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "prism/rng.hpp"

namespace prism {

using nlohmann::json;

namespace {

TrajectoryDataset subset(const TrajectoryDataset& ds,
                         const std::vector<int>& indices) {
  TrajectoryDataset out;
  out.num_states = ds.num_states;
  out.num_actions = ds.num_actions;
  out.generator = ds.generator;
  out.seed = ds.seed;
  out.trajectories.reserve(indices.size());
  for (int i : indices) out.trajectories.push_back(ds.trajectories[i]);
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

// All injective assignments of `truths` slots to recovered indices.
void enumerate_assignments(int truths, int recovered, std::vector<int>& cur,
                           std::vector<bool>& used,
                           const std::function<void(const std::vector<int>&)>& fn) {
  if (static_cast<int>(cur.size()) == truths) {
    fn(cur);
    return;
  }
  for (int k = 0; k < recovered; ++k) {
    if (used[k]) continue;
    used[k] = true;
    cur.push_back(k);
    enumerate_assignments(truths, recovered, cur, used, fn);
    cur.pop_back();
    used[k] = false;
  }
}

}  // namespace

std::pair<std::vector<int>, std::vector<EvdResult>> match_intentions_by_evd(
    const TabularMdp& mdp, const std::vector<RewardTable>& true_rewards,
    const std::vector<RewardTable>& recovered, int start_state) {
  const int G = static_cast<int>(true_rewards.size());
  const int K = static_cast<int>(recovered.size());
  if (G == 0) return {};

  std::vector<std::vector<EvdResult>> table(G, std::vector<EvdResult>(K));
  for (int g = 0; g < G; ++g) {
    for (int k = 0; k < K; ++k) {
      table[g][k] = expected_value_difference(mdp, true_rewards[g],
                                              recovered[k], start_state);
    }
  }

  if (K == 1) {
    std::vector<int> assignment(G, 0);
    std::vector<EvdResult> evd(G);
    for (int g = 0; g < G; ++g) evd[g] = table[g][0];
    return {assignment, evd};
  }
  if (K < G) {
    throw InvalidConfig("cannot match " + std::to_string(G) +
                        " true intentions to " + std::to_string(K) +
                        " recovered ones");
  }

  std::vector<int> best;
  double best_total = std::numeric_limits<double>::infinity();
  std::vector<int> cur;
  std::vector<bool> used(K, false);
  enumerate_assignments(G, K, cur, used, [&](const std::vector<int>& a) {
    double total = 0.0;
    for (int g = 0; g < G; ++g) total += table[g][a[g]].mae;
    if (total < best_total) {
      best_total = total;
      best = a;
    }
  });

  std::vector<EvdResult> evd(G);
  for (int g = 0; g < G; ++g) evd[g] = table[g][best[g]];
  return {best, evd};
}

SegmentResult segment(const GatingNetwork& net, const RewardSet& rewards,
                      const TrajectoryDataset& dataset, int observation_lag) {
  if (net.num_states != dataset.num_states ||
      net.num_actions != dataset.num_actions) {
    throw DimensionMismatch("checkpoint dimensions do not match dataset");
  }
  std::vector<ObservationSequence> obs;
  obs.reserve(dataset.trajectories.size());
  for (const Trajectory& t : dataset.trajectories) {
    obs.push_back(make_observations(t, observation_lag));
  }
  SegmentResult out;
  out.posteriors = e_step(net, rewards, dataset, obs, nullptr);
  out.argmax.reserve(out.posteriors.size());
  out.switch_counts.reserve(out.posteriors.size());
  for (const ResponsibilityMatrix& w : out.posteriors) {
    std::vector<int> labels(w.rows());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      int best = 0;
      for (Eigen::Index k = 1; k < w.cols(); ++k) {
        if (w(i, k) > w(i, best)) best = static_cast<int>(k);
      }
      labels[i] = best;
    }
    int switches = 0;
    for (std::size_t i = 1; i < labels.size(); ++i) {
      if (labels[i] != labels[i - 1]) ++switches;
    }
    out.argmax.push_back(std::move(labels));
    out.switch_counts.push_back(switches);
  }
  return out;
}

double segmentation_accuracy(const std::vector<std::vector<int>>& predicted,
                             const TrajectoryDataset& dataset,
                             int num_intentions) {
  if (predicted.size() != dataset.trajectories.size()) {
    throw DimensionMismatch("prediction count does not match dataset");
  }
  int label_space = num_intentions;
  for (const Trajectory& t : dataset.trajectories) {
    if (!t.has_labels()) {
      throw InvalidConfig("dataset has no ground-truth labels");
    }
    for (int l : t.labels) label_space = std::max(label_space, l + 1);
  }
  if (label_space > 8) {
    throw InvalidConfig("label permutation search capped at 8 intentions");
  }

  std::vector<int> perm(label_space);
  std::iota(perm.begin(), perm.end(), 0);
  long total = 0;
  for (const Trajectory& t : dataset.trajectories) total += t.length();

  double best = 0.0;
  do {
    long hits = 0;
    for (std::size_t j = 0; j < predicted.size(); ++j) {
      const auto& labels = dataset.trajectories[j].labels;
      for (std::size_t i = 0; i < predicted[j].size(); ++i) {
        if (perm[predicted[j][i]] == labels[i]) ++hits;
      }
    }
    best = std::max(best, static_cast<double>(hits) / total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

FoldReport cross_validate(const TabularMdp& mdp,
                          const TrajectoryDataset& dataset,
                          const RunConfig& config,
                          const std::optional<GroundTruth>& truth) {
  config.validate();
  const int N = static_cast<int>(dataset.trajectories.size());
  const int folds = config.folds;
  if (N < folds) {
    throw InvalidConfig("need at least " + std::to_string(folds) +
                        " trajectories for " + std::to_string(folds) +
                        "-fold cross-validation");
  }

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(config.seed, 5);
  for (int i = N - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(i + 1));
    std::swap(order[i], order[j]);
  }

  FoldReport report;
  std::vector<double> train_lls, test_lls;
  const EmOptions em_opt = config.em_options();

  for (int f = 0; f < folds; ++f) {
    const int lo = static_cast<int>(static_cast<long>(f) * N / folds);
    const int hi = static_cast<int>(static_cast<long>(f + 1) * N / folds);
    std::vector<int> test_idx(order.begin() + lo, order.begin() + hi);
    std::vector<int> train_idx;
    train_idx.reserve(N - (hi - lo));
    for (int i = 0; i < lo; ++i) train_idx.push_back(order[i]);
    for (int i = hi; i < N; ++i) train_idx.push_back(order[i]);

    const TrajectoryDataset train = subset(dataset, train_idx);
    const TrajectoryDataset test = subset(dataset, test_idx);

    const EmResult em = run_em(mdp, train, em_opt);

    std::vector<ObservationSequence> test_obs;
    test_obs.reserve(test.trajectories.size());
    for (const Trajectory& t : test.trajectories) {
      test_obs.push_back(make_observations(t, config.observation_lag));
    }
    const double test_ll = per_step_log_likelihood(
        em.state.net, em.state.rewards, test, test_obs);

    FoldMetrics fm;
    fm.fold = f;
    fm.train_ll = em.state.train_ll;
    fm.test_ll = test_ll;
    fm.em_iterations = em.state.iteration;
    fm.converged = em.converged;
    fm.test_indices = test_idx;
    fm.test_argmax =
        segment(em.state.net, em.state.rewards, test, config.observation_lag)
            .argmax;

    if (truth) {
      auto [assignment, evd] = match_intentions_by_evd(
          mdp, truth->rewards, em.state.rewards.rewards, truth->start_state);
      fm.matched_intention = std::move(assignment);
      fm.evd = std::move(evd);
    }

    train_lls.push_back(fm.train_ll);
    test_lls.push_back(fm.test_ll);
    report.folds.push_back(std::move(fm));
  }

  std::tie(report.mean_train_ll, report.std_train_ll) = mean_std(train_lls);
  std::tie(report.mean_test_ll, report.std_test_ll) = mean_std(test_lls);
  return report;
}

void write_diagnostics_jsonl(const std::vector<IterationDiagnostics>& history,
                             const std::vector<std::string>& warnings,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write diagnostics: " + path);
  for (const IterationDiagnostics& d : history) {
    json rec = {{"iteration", d.iteration},
                {"train_ll", d.train_ll},
                {"max_reward_delta", d.max_reward_delta},
                {"gate_loss", d.gate_loss},
                {"reward_objective_before", d.reward_objective_before},
                {"reward_objective_after", d.reward_objective_after},
                {"policy_lookups", d.policy_lookups}};
    out << rec.dump() << "\n";
  }
  for (const std::string& w : warnings) {
    out << json{{"warning", w}}.dump() << "\n";
  }
  if (!out) throw IoError("diagnostics write failed: " + path);
}

void write_metrics_json(const FoldReport& report,
                        const std::optional<GroundTruth>& truth,
                        const std::string& path) {
  json folds = json::array();
  for (const FoldMetrics& fm : report.folds) {
    json rec = {{"fold", fm.fold},
                {"train_ll", fm.train_ll},
                {"test_ll", fm.test_ll},
                {"em_iterations", fm.em_iterations},
                {"converged", fm.converged}};
    if (truth && !fm.evd.empty()) {
      json evd = json::array();
      for (std::size_t g = 0; g < fm.evd.size(); ++g) {
        evd.push_back({{"intention", truth->names[g]},
                       {"evd_mae", fm.evd[g].mae},
                       {"evd_s0", fm.evd[g].s0},
                       {"matched_intention", fm.matched_intention[g]}});
      }
      rec["evd"] = evd;
    }
    folds.push_back(rec);
  }
  json root = {{"folds", folds},
               {"mean_train_ll", report.mean_train_ll},
               {"std_train_ll", report.std_train_ll},
               {"mean_test_ll", report.mean_test_ll},
               {"std_test_ll", report.std_test_ll}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("metrics write failed: " + path);
}

void write_responsibilities_jsonl(
    const std::vector<ResponsibilityMatrix>& responsibilities,
    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write responsibilities: " + path);
  for (const ResponsibilityMatrix& w : responsibilities) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < w.cols(); ++k) row.push_back(w(i, k));
      rows.push_back(row);
    }
    out << json{{"posterior", rows}}.dump() << "\n";
  }
  if (!out) throw IoError("responsibilities write failed: " + path);
}

}  // namespace prism
