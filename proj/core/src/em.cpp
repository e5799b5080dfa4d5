#include "prism/em.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace prism {

void RewardSet::refresh(const TabularMdp& mdp, const SolveOptions& opt) {
  const int K = size();
  qtables.resize(K);
  policies.resize(K);
  log_policies.resize(K);
  for (int k = 0; k < K; ++k) {
    // Warm-start from the previous Q when shapes match.
    if (qtables[k].values.rows() == mdp.num_states() &&
        qtables[k].values.cols() == mdp.num_actions()) {
      qtables[k] = solve_q(mdp, rewards[k], qtables[k].values, opt);
    } else {
      qtables[k] = solve_q(mdp, rewards[k], opt);
    }
    policies[k] = boltzmann_policy(qtables[k]);
    log_policies[k] = log_boltzmann_policy(qtables[k]);
  }
}

std::vector<ResponsibilityMatrix> e_step(
    const GatingNetwork& net, const RewardSet& rewards,
    const TrajectoryDataset& dataset,
    const std::vector<ObservationSequence>& observations, EStepStats* stats) {
  const int K = rewards.size();
  if (net.num_intentions != K) {
    throw DimensionMismatch("gate and reward set disagree on K");
  }
  if (observations.size() != dataset.trajectories.size()) {
    throw DimensionMismatch("observation list length mismatch");
  }

  std::vector<ResponsibilityMatrix> out;
  out.reserve(dataset.trajectories.size());
  if (stats) stats->per_trajectory_lookups.clear();

  Eigen::RowVectorXd logits(K);
  for (std::size_t j = 0; j < dataset.trajectories.size(); ++j) {
    const Trajectory& traj = dataset.trajectories[j];
    const int n = traj.length();
    const GateOutput gate = gate_forward(net, observations[j]);
    ResponsibilityMatrix w(n, K);
    long long lookups = 0;
    for (int i = 0; i < n; ++i) {
      const int s = traj.states[i];
      const int a = traj.actions[i];
      for (int k = 0; k < K; ++k) {
        const double log_gate = std::log(std::max(gate.dists(i, k), 1e-300));
        const double log_pi = rewards.log_policies[k](s, a);
        logits(k) = log_gate + log_pi;
        ++lookups;
        if (stats) ++stats->gate_reads;
      }
      const double m = logits.maxCoeff();
      Eigen::RowVectorXd e = (logits.array() - m).exp();
      w.row(i) = e / e.sum();
    }
    if (stats) {
      stats->policy_lookups += lookups;
      stats->per_trajectory_lookups.push_back(lookups);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<ResponsibilityMatrix> e_step(const EmState& state,
                                         const TrajectoryDataset& dataset,
                                         int observation_lag,
                                         EStepStats* stats) {
  std::vector<ObservationSequence> obs;
  obs.reserve(dataset.trajectories.size());
  for (const Trajectory& t : dataset.trajectories) {
    obs.push_back(make_observations(t, observation_lag));
  }
  return e_step(state.net, state.rewards, dataset, obs, stats);
}

namespace {

double reward_objective(const RewardSet& rewards,
                        const TrajectoryDataset& dataset,
                        const std::vector<ResponsibilityMatrix>& resp) {
  double total = 0.0;
  for (std::size_t j = 0; j < dataset.trajectories.size(); ++j) {
    const Trajectory& traj = dataset.trajectories[j];
    for (int i = 0; i < traj.length(); ++i) {
      for (int k = 0; k < rewards.size(); ++k) {
        total += resp[j](i, k) *
                 rewards.log_policies[k](traj.states[i], traj.actions[i]);
      }
    }
  }
  return total;
}

}  // namespace

MStepDiagnostics m_step(EmState& state, const TabularMdp& mdp,
                        const TrajectoryDataset& dataset,
                        const std::vector<ObservationSequence>& observations,
                        const std::vector<ResponsibilityMatrix>& resp,
                        const EmOptions& opt, GateTrainer& trainer,
                        Rng& shuffle_rng) {
  MStepDiagnostics diag;

  // Gate first, rewards second.
  if (opt.train.epochs > 0) {
    diag.gate_loss = trainer.train_step(state.net, observations, resp,
                                        shuffle_rng);
  }

  diag.reward_objective_before = reward_objective(state.rewards, dataset, resp);

  IaviOptions iavi_opt = opt.iavi;
  double max_delta = 0.0;
  for (int k = 0; k < state.rewards.size(); ++k) {
    const WeightedVisitCounts counts = accumulate_counts(dataset, resp, k);
    const EmpiricalPolicy pihat = empirical_policy(counts, opt.smoothing);
    RewardTable r_new;
    try {
      r_new = iavi_solve(mdp, pihat, iavi_opt);
    } catch (const NonConvergence& e) {
      throw NonConvergence("reward update for intention " + std::to_string(k) +
                               " failed: " + e.what(),
                           e.residual());
    }
    max_delta = std::max(
        max_delta,
        (r_new.values - state.rewards.rewards[k].values).cwiseAbs().maxCoeff());
    state.rewards.rewards[k] = std::move(r_new);
  }
  diag.max_reward_delta = max_delta;
  state.rewards.refresh(mdp, opt.qsolve);

  diag.reward_objective_after = reward_objective(state.rewards, dataset, resp);
  return diag;
}

EmState init_em_state(const TabularMdp& mdp, const TrajectoryDataset& dataset,
                      const EmOptions& opt) {
  if (opt.num_intentions < 1) throw InvalidConfig("K must be at least 1");
  if (dataset.num_states != mdp.num_states() ||
      dataset.num_actions != mdp.num_actions()) {
    throw DimensionMismatch("dataset dimensions do not match MDP");
  }
  dataset.validate();

  EmState state{GatingNetwork(opt.cell, mdp.num_states(), mdp.num_actions(),
                              opt.embed_dim, opt.hidden_dim,
                              opt.num_intentions),
                RewardSet{}, 0, 0.0};
  state.net.init_params(Rng::stream(opt.seed, 2).next_u64());

  Rng reward_rng = Rng::stream(opt.seed, 1);
  state.rewards.rewards.resize(opt.num_intentions);
  for (int k = 0; k < opt.num_intentions; ++k) {
    Matrix r(mdp.num_states(), mdp.num_actions());
    for (int s = 0; s < mdp.num_states(); ++s) {
      for (int a = 0; a < mdp.num_actions(); ++a) {
        r(s, a) = reward_rng.uniform(-opt.reward_init_scale,
                                     opt.reward_init_scale);
      }
    }
    state.rewards.rewards[k] = RewardTable{std::move(r)};
  }
  state.rewards.refresh(mdp, opt.qsolve);
  return state;
}

double per_step_log_likelihood(
    const GatingNetwork& net, const RewardSet& rewards,
    const TrajectoryDataset& dataset,
    const std::vector<ObservationSequence>& observations) {
  const int K = rewards.size();
  double total = 0.0;
  long steps = 0;
  Eigen::RowVectorXd logits(K);
  for (std::size_t j = 0; j < dataset.trajectories.size(); ++j) {
    const Trajectory& traj = dataset.trajectories[j];
    const GateOutput gate = gate_forward(net, observations[j]);
    for (int i = 0; i < traj.length(); ++i) {
      for (int k = 0; k < K; ++k) {
        logits(k) = std::log(std::max(gate.dists(i, k), 1e-300)) +
                    rewards.log_policies[k](traj.states[i], traj.actions[i]);
      }
      const double m = logits.maxCoeff();
      total += m + std::log((logits.array() - m).exp().sum());
      ++steps;
    }
  }
  return total / static_cast<double>(steps);
}

EmResult run_em(const TabularMdp& mdp, const TrajectoryDataset& dataset,
                const EmOptions& opt) {
  EmResult result{init_em_state(mdp, dataset, opt), {}, {}, false};

  std::vector<ObservationSequence> observations;
  observations.reserve(dataset.trajectories.size());
  for (const Trajectory& t : dataset.trajectories) {
    observations.push_back(make_observations(t, opt.observation_lag));
  }

  GateTrainer trainer(opt.train);
  Rng shuffle_rng = Rng::stream(opt.seed, 3);

  double prev_ll = -std::numeric_limits<double>::infinity();
  int plateau = 0;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    EStepStats stats;
    const auto resp = e_step(result.state.net, result.state.rewards, dataset,
                             observations, &stats);
    const MStepDiagnostics mdiag =
        m_step(result.state, mdp, dataset, observations, resp, opt, trainer,
               shuffle_rng);

    const double ll = per_step_log_likelihood(
        result.state.net, result.state.rewards, dataset, observations);
    result.state.iteration = iter;
    result.state.train_ll = ll;

    IterationDiagnostics diag;
    diag.iteration = iter;
    diag.train_ll = ll;
    diag.max_reward_delta = mdiag.max_reward_delta;
    diag.gate_loss = mdiag.gate_loss;
    diag.reward_objective_before = mdiag.reward_objective_before;
    diag.reward_objective_after = mdiag.reward_objective_after;
    diag.policy_lookups = stats.policy_lookups;
    result.history.push_back(diag);

    if (std::isfinite(prev_ll) && ll < prev_ll - 1e-6) {
      result.warnings.push_back("iteration " + std::to_string(iter) +
                                ": train LL decreased from " +
                                std::to_string(prev_ll) + " to " +
                                std::to_string(ll));
    }
    if (std::isfinite(prev_ll)) {
      const double rel =
          std::abs(ll - prev_ll) / std::max(std::abs(ll), 1e-12);
      plateau = rel < opt.rel_tol ? plateau + 1 : 0;
      if (plateau >= opt.patience) {
        result.converged = true;
        break;
      }
    }
    prev_ll = ll;
  }
  return result;
}

namespace {

// Random parameters for the brute-force verifiers.
struct RandomTheta {
  GatingNetwork net;
  RewardSet rewards;
};

RandomTheta random_theta(const TabularMdp& mdp, int K, Rng& rng) {
  RandomTheta theta{GatingNetwork(CellType::Rnn, mdp.num_states(),
                                  mdp.num_actions(), 3, 3, K),
                    RewardSet{}};
  theta.net.init_params(rng.next_u64());
  theta.rewards.rewards.resize(K);
  for (int k = 0; k < K; ++k) {
    Matrix r(mdp.num_states(), mdp.num_actions());
    for (int s = 0; s < mdp.num_states(); ++s)
      for (int a = 0; a < mdp.num_actions(); ++a)
        r(s, a) = rng.uniform(-1.0, 1.0);
    theta.rewards.rewards[k] = RewardTable{std::move(r)};
  }
  theta.rewards.refresh(mdp, SolveOptions{});
  return theta;
}

void check_enumeration_size(int K, int n) {
  double combos = 1.0;
  for (int i = 0; i < n; ++i) {
    combos *= K;
    if (combos > 1000.0) {
      throw InstanceTooLarge("K^n exceeds 1000, refusing brute force");
    }
  }
}

}  // namespace

double verify_decomposition(const TabularMdp& mdp,
                            const TrajectoryDataset& tiny_dataset,
                            int num_intentions, int num_pairs,
                            std::uint64_t seed) {
  const int K = num_intentions;
  for (const Trajectory& t : tiny_dataset.trajectories) {
    check_enumeration_size(K, t.length());
  }
  Rng rng(seed);
  double worst = 0.0;

  std::vector<ObservationSequence> obs;
  for (const Trajectory& t : tiny_dataset.trajectories) {
    obs.push_back(make_observations(t));
  }

  for (int pair = 0; pair < num_pairs; ++pair) {
    const RandomTheta theta = random_theta(mdp, K, rng);
    const RandomTheta theta_plus = random_theta(mdp, K, rng);
    const auto resp =
        e_step(theta.net, theta.rewards, tiny_dataset, obs, nullptr);

    double brute = 0.0, decomposed = 0.0;
    for (std::size_t j = 0; j < tiny_dataset.trajectories.size(); ++j) {
      const Trajectory& traj = tiny_dataset.trajectories[j];
      const int n = traj.length();
      const GateOutput gate_plus = gate_forward(theta_plus.net, obs[j]);

      // log P(xi, eta | psi, Theta+) split per step.
      Matrix step_term(n, K);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) {
          step_term(i, k) =
              std::log(std::max(gate_plus.dists(i, k), 1e-300)) +
              theta_plus.rewards.log_policies[k](traj.states[i],
                                                 traj.actions[i]);
        }
      }

      // Enumerate all K^n intention sequences.
      std::vector<int> eta(n, 0);
      double j_brute = 0.0;
      while (true) {
        double posterior = 1.0, logp = 0.0;
        for (int i = 0; i < n; ++i) {
          posterior *= resp[j](i, eta[i]);
          logp += step_term(i, eta[i]);
        }
        j_brute += posterior * logp;
        int pos = n - 1;
        while (pos >= 0 && ++eta[pos] == K) eta[pos--] = 0;
        if (pos < 0) break;
      }

      double j_decomposed = 0.0;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k)
          j_decomposed += resp[j](i, k) * step_term(i, k);

      brute += j_brute;
      decomposed += j_decomposed;
    }
    const double denom = static_cast<double>(tiny_dataset.trajectories.size());
    worst = std::max(worst, std::abs(brute - decomposed) / denom);
  }
  return worst;
}

double verify_posterior_factorization(const TabularMdp& mdp,
                                      const Trajectory& tiny_trajectory,
                                      int num_intentions, int num_pairs,
                                      std::uint64_t seed) {
  const int K = num_intentions;
  const int n = tiny_trajectory.length();
  check_enumeration_size(K, n);
  Rng rng(seed);
  double worst = 0.0;

  TrajectoryDataset single;
  single.num_states = mdp.num_states();
  single.num_actions = mdp.num_actions();
  single.trajectories.push_back(tiny_trajectory);
  const ObservationSequence obs = make_observations(tiny_trajectory);

  for (int pair = 0; pair < num_pairs; ++pair) {
    const RandomTheta theta = random_theta(mdp, K, rng);
    const GateOutput gate = gate_forward(theta.net, obs);

    // Per-step joint factor f_k(phi_i) * pi_k(a_i | s_i).
    Matrix factor(n, K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) {
        factor(i, k) =
            gate.dists(i, k) *
            std::exp(theta.rewards.log_policies[k](tiny_trajectory.states[i],
                                                   tiny_trajectory.actions[i]));
      }
    }

    // Enumerate the joint, accumulate unnormalized marginals.
    Matrix marginal = Matrix::Zero(n, K);
    double normalizer = 0.0;
    std::vector<int> eta(n, 0);
    while (true) {
      double weight = 1.0;
      for (int i = 0; i < n; ++i) weight *= factor(i, eta[i]);
      normalizer += weight;
      for (int i = 0; i < n; ++i) marginal(i, eta[i]) += weight;
      int pos = n - 1;
      while (pos >= 0 && ++eta[pos] == K) eta[pos--] = 0;
      if (pos < 0) break;
    }
    marginal /= normalizer;

    const auto resp = e_step(theta.net, theta.rewards, single, {obs}, nullptr);
    worst = std::max(worst, (marginal - resp[0]).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace prism
