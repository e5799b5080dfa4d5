#include "prism/mdp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace prism {

TabularMdp::TabularMdp(int num_states, int num_actions,
                       std::vector<Matrix> transitions, double discount)
    : num_states_(num_states),
      num_actions_(num_actions),
      transitions_(std::move(transitions)),
      discount_(discount) {
  if (num_states_ <= 0 || num_actions_ <= 0) {
    throw InvalidConfig("state and action counts must be positive");
  }
  if (!(discount_ >= 0.0 && discount_ < 1.0)) {
    throw InvalidConfig("discount must lie in [0, 1)");
  }
  if (static_cast<int>(transitions_.size()) != num_states_) {
    throw DimensionMismatch("transition tensor has wrong state count");
  }
  for (int s = 0; s < num_states_; ++s) {
    const Matrix& p = transitions_[s];
    if (p.rows() != num_actions_ || p.cols() != num_states_) {
      throw DimensionMismatch("transition matrix for state " +
                              std::to_string(s) + " has wrong shape");
    }
    for (int a = 0; a < num_actions_; ++a) {
      double row_sum = 0.0;
      for (int t = 0; t < num_states_; ++t) {
        const double v = p(a, t);
        if (v < 0.0 || v > 1.0) {
          throw InvalidConfig("transition probability out of [0, 1] at (" +
                              std::to_string(s) + ", " + std::to_string(a) +
                              ")");
        }
        row_sum += v;
      }
      if (std::abs(row_sum - 1.0) > 1e-9) {
        throw InvalidConfig("transition row (" + std::to_string(s) + ", " +
                            std::to_string(a) + ") sums to " +
                            std::to_string(row_sum));
      }
    }
  }
}

void TabularMdp::check_reward(const RewardTable& r) const {
  if (r.values.rows() != num_states_ || r.values.cols() != num_actions_) {
    throw DimensionMismatch("reward table shape does not match MDP");
  }
}

QTable solve_q(const TabularMdp& mdp, const RewardTable& r,
               const SolveOptions& opt) {
  return solve_q(mdp, r, Matrix::Zero(mdp.num_states(), mdp.num_actions()),
                 opt);
}

QTable solve_q(const TabularMdp& mdp, const RewardTable& r, const Matrix& q0,
               const SolveOptions& opt) {
  mdp.check_reward(r);
  if (opt.tol <= 0.0 || opt.max_iters < 1) {
    throw InvalidConfig("solve_q requires tol > 0 and max_iters >= 1");
  }
  const int S = mdp.num_states();
  const double gamma = mdp.discount();

  Matrix q = q0;
  Matrix q_next(S, mdp.num_actions());
  Vector v(S);
  double delta = 0.0;
  for (int iter = 0; iter < opt.max_iters; ++iter) {
    v = q.rowwise().maxCoeff();
    for (int s = 0; s < S; ++s) {
      q_next.row(s) =
          r.values.row(s) + gamma * (mdp.transition_matrix(s) * v).transpose();
    }
    delta = (q_next - q).cwiseAbs().maxCoeff();
    q.swap(q_next);
    if (delta <= opt.tol) {
      return QTable{std::move(q)};
    }
  }
  throw NonConvergence("value iteration did not reach tolerance " +
                           std::to_string(opt.tol),
                       delta);
}

PolicyTable boltzmann_policy(const QTable& q) {
  Matrix probs(q.values.rows(), q.values.cols());
  for (Eigen::Index s = 0; s < q.values.rows(); ++s) {
    const double m = q.values.row(s).maxCoeff();
    Eigen::RowVectorXd e = (q.values.row(s).array() - m).exp();
    probs.row(s) = e / e.sum();
  }
  return PolicyTable{std::move(probs)};
}

Matrix log_boltzmann_policy(const QTable& q) {
  Matrix logp(q.values.rows(), q.values.cols());
  for (Eigen::Index s = 0; s < q.values.rows(); ++s) {
    const double m = q.values.row(s).maxCoeff();
    const double lse = std::log((q.values.row(s).array() - m).exp().sum()) + m;
    logp.row(s) = q.values.row(s).array() - lse;
  }
  return logp;
}

Vector evaluate_policy(const TabularMdp& mdp, const RewardTable& r_eval,
                       const PolicyTable& policy, double tol, int max_iters) {
  mdp.check_reward(r_eval);
  if (policy.probs.rows() != mdp.num_states() ||
      policy.probs.cols() != mdp.num_actions()) {
    throw DimensionMismatch("policy shape does not match MDP");
  }
  const int S = mdp.num_states();
  const double gamma = mdp.discount();

  // Per-state expected immediate reward under the policy.
  Vector r_pi(S);
  for (int s = 0; s < S; ++s) {
    r_pi(s) = policy.probs.row(s).dot(r_eval.values.row(s));
  }

  Vector v = Vector::Zero(S);
  Vector v_next(S);
  double delta = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int s = 0; s < S; ++s) {
      // sum_a pi(a|s) * sum_s' P(s'|s,a) v(s')
      v_next(s) =
          r_pi(s) + gamma * policy.probs.row(s).dot(mdp.transition_matrix(s) * v);
    }
    delta = (v_next - v).cwiseAbs().maxCoeff();
    v.swap(v_next);
    if (delta <= tol) {
      return v;
    }
  }
  throw NonConvergence("policy evaluation did not reach tolerance " +
                           std::to_string(tol),
                       delta);
}

EvdResult expected_value_difference(const TabularMdp& mdp,
                                    const RewardTable& r_true,
                                    const RewardTable& r_recovered,
                                    int start_state) {
  mdp.check_reward(r_true);
  mdp.check_reward(r_recovered);
  if (start_state < 0 || start_state >= mdp.num_states()) {
    throw BoundsError("start state out of range");
  }
  const PolicyTable pi_true = boltzmann_policy(solve_q(mdp, r_true));
  const PolicyTable pi_rec = boltzmann_policy(solve_q(mdp, r_recovered));
  const Vector v_true = evaluate_policy(mdp, r_true, pi_true);
  const Vector v_rec = evaluate_policy(mdp, r_true, pi_rec);
  EvdResult out;
  out.mae = (v_true - v_rec).cwiseAbs().mean();
  out.s0 = v_rec(start_state) - v_true(start_state);
  return out;
}

namespace {

// Strips comments (from '#') and returns the next non-empty token stream line.
bool next_content_line(std::istream& in, std::string& line, long& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open MDP file: " + path);

  long lineno = 0;
  std::string line;
  auto expect_kv = [&](const std::string& key) -> std::string {
    if (!next_content_line(in, line, lineno)) {
      throw ParseError("unexpected end of MDP file, expected '" + key + "'",
                       lineno);
    }
    std::istringstream ls(line);
    std::string k, v;
    ls >> k >> v;
    if (k != key || v.empty()) {
      throw ParseError("expected '" + key + " <value>'", lineno);
    }
    return v;
  };

  const std::string magic = expect_kv("prism-mdp");
  if (magic != "1") throw ParseError("unsupported MDP format version " + magic);
  int S = 0, A = 0;
  double gamma = 0.0;
  try {
    S = std::stoi(expect_kv("num_states"));
    A = std::stoi(expect_kv("num_actions"));
    gamma = std::stod(expect_kv("discount"));
  } catch (const std::invalid_argument&) {
    throw ParseError("malformed numeric header field", lineno);
  }
  if (S <= 0 || A <= 0) throw ParseError("non-positive dimensions", lineno);

  if (!next_content_line(in, line, lineno) || line.find("transitions") != 0) {
    throw ParseError("expected 'transitions' section", lineno);
  }

  std::vector<Matrix> P(S, Matrix(A, S));
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double row_sum = 0.0;
      for (int t = 0; t < S; ++t) {
        double v;
        if (!(in >> v)) {
          throw ParseError("transition tensor truncated at (s=" +
                               std::to_string(s) + ", a=" + std::to_string(a) +
                               ")",
                           lineno);
        }
        if (v < 0.0 || v > 1.0) {
          throw ParseError("transition probability out of [0, 1]", lineno);
        }
        P[s](a, t) = v;
        row_sum += v;
      }
      if (std::abs(row_sum - 1.0) > 1e-6) {
        throw ParseError("transition row (s=" + std::to_string(s) +
                             ", a=" + std::to_string(a) + ") sums to " +
                             std::to_string(row_sum) +
                             ", outside the 1e-6 tolerance",
                         lineno);
      }
      P[s].row(a) /= row_sum;  // renormalize small drift exactly to 1
    }
  }
  return TabularMdp(S, A, std::move(P), gamma);
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write MDP file: " + path);
  out.precision(17);
  out << "prism-mdp 1\n";
  out << "num_states " << mdp.num_states() << "\n";
  out << "num_actions " << mdp.num_actions() << "\n";
  out << "discount " << mdp.discount() << "\n";
  out << "transitions\n";
  for (int s = 0; s < mdp.num_states(); ++s) {
    for (int a = 0; a < mdp.num_actions(); ++a) {
      for (int t = 0; t < mdp.num_states(); ++t) {
        out << mdp.transition_matrix(s)(a, t)
            << (t + 1 == mdp.num_states() ? '\n' : ' ');
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace prism
