#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <prism/iavi.hpp>
#include <prism/rng.hpp>

#include <cmath>

#include "test_util.hpp"

using namespace prism;

namespace {

EmpiricalPolicy exact_policy(const PolicyTable& pi) {
  EmpiricalPolicy out;
  out.probs = pi.probs;
  out.visited.assign(pi.probs.rows(), true);
  return out;
}

}  // namespace

TEST_CASE("accumulate_counts basic and additive") {
  TrajectoryDataset ds;
  ds.num_states = 2;
  ds.num_actions = 2;
  ds.trajectories.push_back(Trajectory{{0}, {1}, {}, {}});
  std::vector<ResponsibilityMatrix> resp{Matrix::Ones(1, 1)};
  WeightedVisitCounts c = accumulate_counts(ds, resp, 0);
  CHECK(c.counts(0, 1) == 1.0);
  CHECK(c.counts.sum() == 1.0);

  ds.trajectories[0] = Trajectory{{1, 1}, {0, 0}, {}, {}};
  Matrix w(2, 2);
  w << 0.3, 0.7, 0.7, 0.3;
  resp[0] = w;
  c = accumulate_counts(ds, resp, 0);
  CHECK(c.counts(1, 0) == doctest::Approx(1.0));
  CHECK(c.state_totals(1) == doctest::Approx(1.0));
}

TEST_CASE("accumulate_counts conserves responsibility mass") {
  Rng rng(13);
  TrajectoryDataset ds = testutil::random_dataset(4, 3, 5, 10, rng);
  const int K = 3;
  std::vector<ResponsibilityMatrix> resp;
  for (const Trajectory& t : ds.trajectories) {
    Matrix w(t.length(), K);
    for (int i = 0; i < t.length(); ++i) {
      double total = 0.0;
      for (int k = 0; k < K; ++k) {
        w(i, k) = rng.uniform();
        total += w(i, k);
      }
      w.row(i) /= total;
    }
    resp.push_back(std::move(w));
  }
  double mass = 0.0;
  for (int k = 0; k < K; ++k) {
    mass += accumulate_counts(ds, resp, k).counts.sum();
  }
  CHECK(mass == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("accumulate_counts rejects out-of-range indices") {
  TrajectoryDataset ds;
  ds.num_states = 2;
  ds.num_actions = 2;
  ds.trajectories.push_back(Trajectory{{5}, {0}, {}, {}});
  std::vector<ResponsibilityMatrix> resp{Matrix::Ones(1, 1)};
  CHECK_THROWS_AS(accumulate_counts(ds, resp, 0), BoundsError);
}

TEST_CASE("empirical_policy formula") {
  WeightedVisitCounts c;
  c.counts = Matrix(3, 2);
  c.counts << 8, 2, 0, 0, 1, 0;
  c.state_totals = c.counts.rowwise().sum();

  EmpiricalPolicy tiny = empirical_policy(c, 1e-12);
  CHECK(tiny.probs(0, 0) == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(tiny.probs(0, 1) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(tiny.visited[0]);
  CHECK_FALSE(tiny.visited[1]);

  EmpiricalPolicy p = empirical_policy(c, 0.01);
  CHECK(p.probs(1, 0) == doctest::Approx(0.5));
  CHECK(p.probs(1, 1) == doctest::Approx(0.5));
  CHECK(p.probs(2, 0) == doctest::Approx(1.01 / 1.02));
  CHECK(p.probs(2, 1) == doctest::Approx(0.01 / 1.02));
}

TEST_CASE("empirical_policy count scaling") {
  Rng rng(29);
  WeightedVisitCounts c;
  c.counts = Matrix(4, 3);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) c.counts(s, a) = rng.uniform(0.1, 5.0);
  c.state_totals = c.counts.rowwise().sum();

  for (double lambda : {0.25, 2.0, 10.0}) {
    WeightedVisitCounts scaled;
    scaled.counts = lambda * c.counts;
    scaled.state_totals = lambda * c.state_totals;

    // Epsilon -> 0 limit: scaling is invisible.
    const EmpiricalPolicy a = empirical_policy(c, 1e-13);
    const EmpiricalPolicy b = empirical_policy(scaled, 1e-13);
    CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() < 1e-9);

    // Fixed epsilon: change bounded by eps * |A| / min state total.
    const double eps = 1e-3;
    const EmpiricalPolicy a2 = empirical_policy(c, eps);
    const EmpiricalPolicy b2 = empirical_policy(scaled, eps);
    for (int s = 0; s < 4; ++s) {
      const double floor = std::min(c.state_totals(s), scaled.state_totals(s));
      const double bound = eps * 3 / floor;
      CHECK((a2.probs.row(s) - b2.probs.row(s)).cwiseAbs().maxCoeff() <=
            bound + 1e-15);
    }
  }
}

TEST_CASE("integer-weight accumulation equals plain visit counting") {
  Rng rng(37);
  TrajectoryDataset ds = testutil::random_dataset(5, 3, 4, 25, rng);
  std::vector<ResponsibilityMatrix> resp;
  for (const Trajectory& t : ds.trajectories) {
    resp.push_back(Matrix::Ones(t.length(), 1));
  }
  const WeightedVisitCounts c = accumulate_counts(ds, resp, 0);
  Matrix expected = Matrix::Zero(5, 3);
  for (const Trajectory& t : ds.trajectories) {
    for (int i = 0; i < t.length(); ++i) {
      expected(t.states[i], t.actions[i]) += 1.0;
    }
  }
  CHECK((c.counts - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("iavi system pseudoinverse properties") {
  for (int A : {2, 3, 4, 5}) {
    const Matrix X =
        Matrix::Identity(A, A) -
        (Matrix::Ones(A, A) - Matrix::Identity(A, A)) / (A - 1);
    const Matrix pinv = iavi_system_pinv(A);
    CHECK((X * pinv * X - X).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pinv * X * pinv - pinv).cwiseAbs().maxCoeff() < 1e-12);
    // Minimum-norm solutions live in the zero-mean subspace.
    CHECK((pinv * Vector::Ones(A)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("iavi_solve analytic two-action case at gamma zero") {
  const TabularMdp mdp = testutil::single_state_mdp(0.0, 2);
  EmpiricalPolicy pihat;
  pihat.probs = Matrix(1, 2);
  pihat.probs << 0.8, 0.2;
  pihat.visited = {true};
  const RewardTable r = iavi_solve(mdp, pihat);
  const double half_log_ratio = 0.5 * std::log(0.8 / 0.2);
  CHECK(r.values(0, 0) == doctest::Approx(half_log_ratio).epsilon(1e-9));
  CHECK(r.values(0, 1) == doctest::Approx(-half_log_ratio).epsilon(1e-9));
}

TEST_CASE("iavi_solve uniform policy yields zero reward") {
  Rng rng(41);
  const TabularMdp mdp = testutil::random_mdp(6, 3, 0.9, rng);
  EmpiricalPolicy pihat;
  pihat.probs = Matrix::Constant(6, 3, 1.0 / 3);
  pihat.visited.assign(6, true);
  const RewardTable r = iavi_solve(mdp, pihat);
  CHECK(r.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("iavi_solve single-action degenerate input") {
  const TabularMdp mdp = testutil::single_state_mdp(0.5, 1);
  EmpiricalPolicy pihat;
  pihat.probs = Matrix::Ones(1, 1);
  pihat.visited = {true};
  const RewardTable r = iavi_solve(mdp, pihat);
  CHECK(r.values(0, 0) == 0.0);
}

TEST_CASE("iavi_solve round trip on a random MDP") {
  Rng rng(2024);
  const TabularMdp mdp = testutil::random_mdp(10, 3, 0.9, rng);
  RewardTable r_true = testutil::random_reward(10, 3, rng);
  testutil::zero_mean_rows(r_true);

  const PolicyTable pi = boltzmann_policy(solve_q(mdp, r_true,
                                                  SolveOptions{1e-13, 500000}));
  IaviOptions opt;
  opt.tol = 1e-10;
  const RewardTable r = iavi_solve(mdp, exact_policy(pi), opt);
  CHECK((r.values - r_true.values).cwiseAbs().maxCoeff() < 1e-6);

  // Policy-space identifiability.
  const PolicyTable pi_rec = boltzmann_policy(solve_q(mdp, r));
  CHECK((pi_rec.probs - pi.probs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("iavi_solve zero-mean gauge at visited states") {
  Rng rng(53);
  const TabularMdp mdp = testutil::random_mdp(7, 4, 0.9, rng);
  // Unbalanced counts, some states unvisited.
  WeightedVisitCounts c;
  c.counts = Matrix::Zero(7, 4);
  for (int step = 0; step < 60; ++step) {
    c.counts(rng.uniform_int(0, 4), rng.uniform_int(0, 3)) +=
        rng.uniform(0.1, 2.0);
  }
  c.state_totals = c.counts.rowwise().sum();
  const EmpiricalPolicy pihat = empirical_policy(c, 1e-3);
  const RewardTable r = iavi_solve(mdp, pihat);
  for (int s = 0; s < 7; ++s) {
    if (pihat.visited[s]) {
      CHECK(std::abs(r.values.row(s).mean()) < 1e-9);
    } else {
      CHECK(r.values.row(s).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}
