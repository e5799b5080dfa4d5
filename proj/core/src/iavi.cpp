#include "prism/iavi.hpp"

#include <cmath>
#include <iostream>

namespace prism {

WeightedVisitCounts accumulate_counts(
    const TrajectoryDataset& dataset,
    const std::vector<ResponsibilityMatrix>& responsibilities, int intention) {
  if (responsibilities.size() != dataset.trajectories.size()) {
    throw DimensionMismatch(
        "responsibility list length does not match trajectory count");
  }
  WeightedVisitCounts out;
  out.counts = Matrix::Zero(dataset.num_states, dataset.num_actions);
  for (std::size_t j = 0; j < dataset.trajectories.size(); ++j) {
    const Trajectory& t = dataset.trajectories[j];
    const ResponsibilityMatrix& w = responsibilities[j];
    if (w.rows() != t.length()) {
      throw DimensionMismatch("responsibility matrix for trajectory " +
                              std::to_string(j) + " has wrong row count");
    }
    if (intention < 0 || intention >= w.cols()) {
      throw BoundsError("intention index out of range");
    }
    for (int i = 0; i < t.length(); ++i) {
      const int s = t.states[i];
      const int a = t.actions[i];
      if (s < 0 || s >= dataset.num_states || a < 0 ||
          a >= dataset.num_actions) {
        throw BoundsError("trajectory step (" + std::to_string(s) + ", " +
                          std::to_string(a) + ") outside MDP bounds");
      }
      out.counts(s, a) += w(i, intention);
    }
  }
  out.state_totals = out.counts.rowwise().sum();
  return out;
}

EmpiricalPolicy empirical_policy(const WeightedVisitCounts& counts,
                                 double smoothing) {
  if (smoothing <= 0.0) {
    throw InvalidConfig("smoothing must be strictly positive");
  }
  const Eigen::Index S = counts.counts.rows();
  const Eigen::Index A = counts.counts.cols();
  EmpiricalPolicy out;
  out.probs.resize(S, A);
  out.visited.resize(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const double total = counts.state_totals(s);
    out.visited[s] = total > 0.0;
    out.probs.row(s) = (counts.counts.row(s).array() + smoothing) /
                       (total + static_cast<double>(A) * smoothing);
  }
  return out;
}

Matrix iavi_system_pinv(int num_actions) {
  // X = I - (J - I)/(A-1) annihilates the ones vector and scales the
  // zero-mean subspace by A/(A-1), so pinv(X) = (A-1)/A * centering.
  const int A = num_actions;
  if (A < 2) throw InvalidConfig("system matrix needs at least two actions");
  const Matrix centering =
      Matrix::Identity(A, A) - Matrix::Constant(A, A, 1.0 / A);
  return centering * (static_cast<double>(A - 1) / A);
}

RewardTable iavi_solve(const TabularMdp& mdp, const EmpiricalPolicy& pihat,
                       const IaviOptions& opt) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  if (pihat.probs.rows() != S || pihat.probs.cols() != A ||
      static_cast<int>(pihat.visited.size()) != S) {
    throw DimensionMismatch("empirical policy shape does not match MDP");
  }
  if (opt.tol <= 0.0) throw InvalidConfig("iavi tol must be positive");

  RewardTable r{Matrix::Zero(S, A)};
  if (A == 1) {
    // Single-action MDPs carry no action preference to invert.
    std::cerr << "iavi_solve: |A| = 1 is degenerate, returning r = 0\n";
    return r;
  }

  const Matrix pinv = iavi_system_pinv(A);
  const double gamma = mdp.discount();

  // log pihat and its per-state "own minus mean-of-others" contrast, which
  // is fixed across sweeps; only the value term varies.
  Matrix eta(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      if (pihat.probs(s, a) <= 0.0) {
        throw InvalidConfig("empirical policy must be strictly positive");
      }
      eta(s, a) = std::log(pihat.probs(s, a));
    }
  }

  Matrix q = Matrix::Zero(S, A);
  SolveOptions qopt{opt.q_tol, opt.q_max_iters};
  const int cap = opt.sweeps > 0 ? opt.sweeps : opt.max_iters;
  double delta = 0.0;

  for (int iter = 0; iter < cap; ++iter) {
    q = solve_q(mdp, r, q, qopt).values;
    const Vector v = q.rowwise().maxCoeff();

    Matrix r_next = Matrix::Zero(S, A);
    Vector rhs(A), tv(A);
    for (int s = 0; s < S; ++s) {
      if (!pihat.visited[s]) continue;
      tv = mdp.transition_matrix(s) * v;
      const double eta_sum = eta.row(s).sum();
      const double tv_sum = tv.sum();
      for (int a = 0; a < A; ++a) {
        const double eta_others = (eta_sum - eta(s, a)) / (A - 1);
        const double tv_others = (tv_sum - tv(a)) / (A - 1);
        rhs(a) = eta(s, a) - eta_others + gamma * (tv_others - tv(a));
      }
      r_next.row(s) = (pinv * rhs).transpose();
    }

    if (opt.damping != 1.0) {
      r_next = (1.0 - opt.damping) * r.values + opt.damping * r_next;
    }
    delta = (r_next - r.values).cwiseAbs().maxCoeff();
    r.values = std::move(r_next);
    if (opt.sweeps == 0 && delta <= opt.tol) {
      return r;
    }
  }
  if (opt.sweeps > 0) return r;  // fixed sweep budget, no convergence demand
  throw NonConvergence("iavi fixed point did not reach tolerance " +
                           std::to_string(opt.tol),
                       delta);
}

}  // namespace prism
