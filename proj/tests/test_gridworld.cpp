#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <prism/gridworld.hpp>
#include <prism/rng.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>

using namespace prism;

TEST_CASE("switch probability follows the capped ramp") {
  FrustrationGridworld env;
  CHECK(env.switch_probability(0) == 0.0);
  CHECK(env.switch_probability(2) == doctest::Approx(0.30));
  CHECK(env.switch_probability(6) == doctest::Approx(0.90));
  CHECK(env.switch_probability(10) == doctest::Approx(0.90));
}

TEST_CASE("built MDP matches the movement rules") {
  FrustrationGridworld env;
  const TabularMdp mdp = build_mdp(env);
  CHECK(mdp.num_states() == 25);
  CHECK(mdp.num_actions() == 5);

  // Stay is deterministic everywhere.
  for (int s = 0; s < 25; ++s) {
    CHECK(mdp.transition_matrix(s)(kStay, s) == 1.0);
  }

  // Right from (0,0): 0.9 to (1,0), 0.1 stay.
  const int s00 = env.state_of({0, 0});
  const int s10 = env.state_of({1, 0});
  CHECK(mdp.transition_matrix(s00)(kRight, s10) == doctest::Approx(0.9));
  CHECK(mdp.transition_matrix(s00)(kRight, s00) == doctest::Approx(0.1));

  // Up from the top row is fully blocked.
  const int top = env.state_of({2, 4});
  CHECK(mdp.transition_matrix(top)(kUp, top) == 1.0);

  // Moves into the barrier wall are fully blocked.
  const int beside_wall = env.state_of({1, 2});
  CHECK(mdp.transition_matrix(beside_wall)(kRight, beside_wall) == 1.0);
}

TEST_CASE("lateral slip model redistributes the failure mass") {
  FrustrationGridworld env;
  env.slip = FrustrationGridworld::SlipModel::Lateral;
  const TabularMdp mdp = build_mdp(env);
  const int s = env.state_of({1, 0});
  // Right from (1,0): laterals are up (1,1) and down (off-grid -> stay).
  CHECK(mdp.transition_matrix(s)(kRight, env.state_of({2, 0})) ==
        doctest::Approx(0.9));
  CHECK(mdp.transition_matrix(s)(kRight, env.state_of({1, 1})) ==
        doctest::Approx(0.05));
  CHECK(mdp.transition_matrix(s)(kRight, s) == doctest::Approx(0.05));
}

TEST_CASE("expert policies head for their targets") {
  FrustrationGridworld env;
  const ExpertPolicies experts = expert_policies(env);

  // Left-adjacent to the goal: best goal action is right.
  const int near_goal = env.state_of({3, 4});
  int best = 0;
  for (int a = 1; a < 5; ++a) {
    if (experts.pi_goal.probs(near_goal, a) >
        experts.pi_goal.probs(near_goal, best)) {
      best = a;
    }
  }
  CHECK(best == kRight);

  // At the goal the best action is to stay.
  const int goal = env.state_of({4, 4});
  best = 0;
  for (int a = 1; a < 5; ++a) {
    if (experts.pi_goal.probs(goal, a) > experts.pi_goal.probs(goal, best)) {
      best = a;
    }
  }
  CHECK(best == kStay);
}

TEST_CASE("abandon policy mirrors goal policy under 180-degree rotation") {
  FrustrationGridworld env;  // default barriers are rotation-symmetric
  const ExpertPolicies experts = expert_policies(env);
  // Rotation maps (x,y) -> (4-x, 4-y), up<->down, left<->right.
  const int action_map[5] = {kDown, kUp, kRight, kLeft, kStay};
  for (int s = 0; s < 25; ++s) {
    const Cell c = env.cell_of(s);
    const int rs = env.state_of({4 - c.x, 4 - c.y});
    for (int a = 0; a < 5; ++a) {
      CHECK(experts.pi_abandon.probs(rs, action_map[a]) ==
            doctest::Approx(experts.pi_goal.probs(s, a)).epsilon(1e-9));
    }
  }
}

TEST_CASE("generation respects the transition support") {
  FrustrationGridworld env;
  const TabularMdp mdp = build_mdp(env);
  const TrajectoryDataset ds = generate(env, 50, 40, 7);
  CHECK(ds.trajectories.size() == 50);
  CHECK(ds.total_steps() == 50 * 40);
  for (const Trajectory& t : ds.trajectories) {
    REQUIRE(t.length() == 40);
    REQUIRE(t.labels.size() == 40);
    REQUIRE(t.counters.size() == 40);
    // Starts in the left column with the goal intention, counter zero.
    CHECK(env.cell_of(t.states[0]).x == 0);
    CHECK(t.labels[0] == 0);
    CHECK(t.counters[0] == 0);
    for (int i = 0; i + 1 < t.length(); ++i) {
      CHECK(mdp.transition_matrix(t.states[i])(t.actions[i], t.states[i + 1]) >
            0.0);
    }
  }
}

TEST_CASE("no barriers and no edge counting means no switches") {
  FrustrationGridworld env;
  env.barrier_cells.clear();
  env.count_edge_collisions = false;
  const TrajectoryDataset ds = generate(env, 30, 50, 11);
  for (const Trajectory& t : ds.trajectories) {
    for (int label : t.labels) CHECK(label == 0);
    for (int c : t.counters) CHECK(c == 0);
  }
}

TEST_CASE("edge collisions still frustrate when barriers are removed") {
  FrustrationGridworld env;
  env.barrier_cells.clear();  // default: off-grid attempts count
  const TrajectoryDataset ds = generate(env, 60, 50, 13);
  long switches = 0;
  for (const Trajectory& t : ds.trajectories) {
    for (std::size_t i = 1; i < t.labels.size(); ++i) {
      if (t.labels[i] != t.labels[i - 1]) ++switches;
    }
  }
  CHECK(switches > 0);
}

TEST_CASE("empirical switch rates track the capped ramp") {
  FrustrationGridworld env;
  const TrajectoryDataset ds = generate(env, 400, 60, 17);
  const SwitchStats stats = switch_statistics(env, ds);
  long total = 0;
  for (const auto& [c, n] : stats.encounters) total += n;
  CHECK(total > 2000);
  for (int c = 1; c <= 3; ++c) {
    REQUIRE(stats.encounters.count(c));
    const double n = static_cast<double>(stats.encounters.at(c));
    const double p = env.switch_probability(c);
    const double observed =
        static_cast<double>(stats.switches.count(c) ? stats.switches.at(c) : 0) /
        n;
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(observed - p) <= 3.0 * se);
  }
}

TEST_CASE("dataset files round-trip and validate bounds") {
  FrustrationGridworld env;
  const TrajectoryDataset ds = generate(env, 20, 30, 23);
  const auto path =
      (std::filesystem::temp_directory_path() / "prism_test_ds.jsonl").string();
  save_dataset(ds, path);
  const TrajectoryDataset loaded = load_dataset(path);
  CHECK(loaded.num_states == ds.num_states);
  CHECK(loaded.num_actions == ds.num_actions);
  CHECK(loaded.generator == ds.generator);
  CHECK(loaded.seed == ds.seed);
  REQUIRE(loaded.trajectories.size() == ds.trajectories.size());
  for (std::size_t j = 0; j < ds.trajectories.size(); ++j) {
    CHECK(loaded.trajectories[j].states == ds.trajectories[j].states);
    CHECK(loaded.trajectories[j].actions == ds.trajectories[j].actions);
    CHECK(loaded.trajectories[j].labels == ds.trajectories[j].labels);
    CHECK(loaded.trajectories[j].counters == ds.trajectories[j].counters);
  }
  std::filesystem::remove(path);

  TrajectoryDataset bad = ds;
  bad.trajectories[0].actions[0] = 5;  // == num_actions
  save_dataset(bad, path);
  CHECK_THROWS_AS(load_dataset(path), BoundsError);
  std::filesystem::remove(path);
}

TEST_CASE("labyrinth-shaped dataset loads quickly") {
  // 238 trajectories of 500 steps on a 127-state, 4-action space.
  Rng rng(29);
  TrajectoryDataset ds;
  ds.num_states = 127;
  ds.num_actions = 4;
  ds.generator = "synthetic";
  for (int j = 0; j < 238; ++j) {
    Trajectory t;
    for (int i = 0; i < 500; ++i) {
      t.states.push_back(rng.uniform_int(0, 126));
      t.actions.push_back(rng.uniform_int(0, 3));
    }
    ds.trajectories.push_back(std::move(t));
  }
  const auto path =
      (std::filesystem::temp_directory_path() / "prism_test_lab.jsonl").string();
  save_dataset(ds, path);

  const auto start = std::chrono::steady_clock::now();
  const TrajectoryDataset loaded = load_dataset(path);
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  CHECK(loaded.trajectories.size() == 238);
  CHECK(loaded.total_steps() == 238L * 500);
  CHECK(elapsed < 2.0);
  std::filesystem::remove(path);
}

TEST_CASE("environment validation rejects broken configs") {
  FrustrationGridworld env;
  env.goal = {2, 2};  // on the barrier wall
  CHECK_THROWS_AS(env.validate(), InvalidConfig);

  FrustrationGridworld off;
  off.barrier_cells.push_back({9, 9});
  CHECK_THROWS_AS(off.validate(), InvalidConfig);

  FrustrationGridworld bad_prob;
  bad_prob.success_prob = 0.0;
  CHECK_THROWS_AS(bad_prob.validate(), InvalidConfig);
}

TEST_CASE("three-target variant switches among all intentions") {
  FrustrationGridworld env;
  env.extra_targets = {{4, 0}};
  CHECK(env.num_intentions() == 3);
  const TrajectoryDataset ds = generate(env, 80, 60, 31);
  bool saw[3] = {false, false, false};
  for (const Trajectory& t : ds.trajectories) {
    for (int label : t.labels) {
      REQUIRE(label >= 0);
      REQUIRE(label < 3);
      saw[label] = true;
    }
  }
  CHECK(saw[0]);
  CHECK(saw[1]);
  CHECK(saw[2]);
}
