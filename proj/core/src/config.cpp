#include "prism/config.hpp"

#include <fstream>

#include <json.hpp>

namespace prism {

using nlohmann::json;

void RunConfig::validate() const {
  if (profile != "gridworld" && profile != "labyrinth" && profile != "bridge") {
    throw InvalidConfig("unknown profile '" + profile + "'");
  }
  if (num_states <= 0 || num_actions <= 0) {
    throw InvalidConfig("state/action counts must be positive");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw InvalidConfig("discount must lie in [0, 1)");
  }
  if (num_intentions < 1) throw InvalidConfig("K must be at least 1");
  cell_type_from_string(architecture);
  if (embed_dim <= 0 || hidden_dim <= 0) {
    throw InvalidConfig("network dimensions must be positive");
  }
  if (observation_lag != 0 && observation_lag != 1) {
    throw InvalidConfig("observation_lag must be 0 or 1");
  }
  if (learning_rate < 0.0) throw InvalidConfig("negative learning rate");
  if (epochs_per_mstep < 0) throw InvalidConfig("negative epoch count");
  if (optimizer != "sgd" && optimizer != "adam") {
    throw InvalidConfig("unknown optimizer '" + optimizer + "'");
  }
  if (lambda_l1 < 0.0 || lambda_kl < 0.0) {
    throw InvalidConfig("smoothness weights must be nonnegative");
  }
  if (max_em_iters < 1) throw InvalidConfig("max_em_iters must be positive");
  if (rel_tol <= 0.0) throw InvalidConfig("rel_tol must be positive");
  if (patience < 1) throw InvalidConfig("patience must be positive");
  if (folds < 2) throw InvalidConfig("need at least two folds");
  if (smoothing <= 0.0) throw InvalidConfig("smoothing must be positive");
  if (iavi_tol <= 0.0 || q_tol <= 0.0) {
    throw InvalidConfig("solver tolerances must be positive");
  }
  if (iavi_max_iters < 1) throw InvalidConfig("iavi_max_iters must be positive");
  if (iavi_sweeps_per_mstep < 0) {
    throw InvalidConfig("iavi_sweeps_per_mstep must be nonnegative");
  }
  if (damping <= 0.0 || damping > 1.0) {
    throw InvalidConfig("damping must lie in (0, 1]");
  }
  if (prior_strength < 0.0) throw InvalidConfig("negative prior strength");
}

EmOptions RunConfig::em_options() const {
  validate();
  EmOptions opt;
  opt.num_intentions = num_intentions;
  opt.cell = cell_type_from_string(architecture);
  opt.embed_dim = embed_dim;
  opt.hidden_dim = hidden_dim;
  opt.observation_lag = observation_lag;
  opt.smoothing = smoothing;
  opt.reward_init_scale = reward_init_scale;
  opt.iavi.tol = iavi_tol;
  opt.iavi.max_iters = iavi_max_iters;
  opt.iavi.damping = damping;
  opt.iavi.sweeps = iavi_sweeps_per_mstep;
  opt.train.learning_rate = learning_rate;
  opt.train.lambda_l1 = lambda_l1;
  opt.train.lambda_kl = lambda_kl;
  opt.train.epochs = epochs_per_mstep;
  opt.train.batch_size = batch_size;
  opt.train.optimizer = optimizer;
  opt.qsolve.tol = q_tol;
  opt.max_iters = max_em_iters;
  opt.rel_tol = rel_tol;
  opt.patience = patience;
  opt.seed = seed;
  return opt;
}

RunConfig default_config(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "gridworld") {
    // Desk-scale defaults; the benchmark itself fixes S, A, gamma.
    c.num_states = 25;
    c.num_actions = 5;
    c.num_intentions = 2;
    c.embed_dim = 32;
    c.hidden_dim = 32;
    c.max_em_iters = 60;
  } else if (profile == "labyrinth") {
    c.num_states = 127;
    c.num_actions = 4;
    c.num_intentions = 3;
    c.embed_dim = 128;
    c.hidden_dim = 128;
    c.lambda_l1 = 2.22;
    c.lambda_kl = 1.48;
    c.max_em_iters = 180;
  } else if (profile == "bridge") {
    c.num_states = 2048;
    c.num_actions = 32;
    c.num_intentions = 4;
    c.embed_dim = 128;
    c.hidden_dim = 128;
    c.max_em_iters = 150;
  } else {
    throw InvalidConfig("unknown profile '" + profile + "'");
  }
  return c;
}

namespace {

json to_json(const RunConfig& c) {
  return json{{"profile", c.profile},
              {"num_states", c.num_states},
              {"num_actions", c.num_actions},
              {"discount", c.discount},
              {"num_intentions", c.num_intentions},
              {"architecture", c.architecture},
              {"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden_dim},
              {"observation_lag", c.observation_lag},
              {"learning_rate", c.learning_rate},
              {"epochs_per_mstep", c.epochs_per_mstep},
              {"batch_size", c.batch_size},
              {"optimizer", c.optimizer},
              {"lambda_l1", c.lambda_l1},
              {"lambda_kl", c.lambda_kl},
              {"max_em_iters", c.max_em_iters},
              {"rel_tol", c.rel_tol},
              {"patience", c.patience},
              {"seed", c.seed},
              {"folds", c.folds},
              {"smoothing", c.smoothing},
              {"reward_init_scale", c.reward_init_scale},
              {"iavi_tol", c.iavi_tol},
              {"iavi_max_iters", c.iavi_max_iters},
              {"iavi_sweeps_per_mstep", c.iavi_sweeps_per_mstep},
              {"damping", c.damping},
              {"q_tol", c.q_tol},
              {"prior_strength", c.prior_strength}};
}

void from_json_strict(const json& j, RunConfig& c) {
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      throw InvalidConfig("unknown config key '" + key + "'");
    }
    (void)value;
  }
  // Profile first so its defaults form the base, then explicit overrides.
  if (j.contains("profile")) {
    c = default_config(j.at("profile").get<std::string>());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("num_states", c.num_states);
  get("num_actions", c.num_actions);
  get("discount", c.discount);
  get("num_intentions", c.num_intentions);
  get("architecture", c.architecture);
  get("embed_dim", c.embed_dim);
  get("hidden_dim", c.hidden_dim);
  get("observation_lag", c.observation_lag);
  get("learning_rate", c.learning_rate);
  get("epochs_per_mstep", c.epochs_per_mstep);
  get("batch_size", c.batch_size);
  get("optimizer", c.optimizer);
  get("lambda_l1", c.lambda_l1);
  get("lambda_kl", c.lambda_kl);
  get("max_em_iters", c.max_em_iters);
  get("rel_tol", c.rel_tol);
  get("patience", c.patience);
  get("seed", c.seed);
  get("folds", c.folds);
  get("smoothing", c.smoothing);
  get("reward_init_scale", c.reward_init_scale);
  get("iavi_tol", c.iavi_tol);
  get("iavi_max_iters", c.iavi_max_iters);
  get("iavi_sweeps_per_mstep", c.iavi_sweeps_per_mstep);
  get("damping", c.damping);
  get("q_tol", c.q_tol);
  get("prior_strength", c.prior_strength);
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig c;
  from_json_strict(j, c);
  c.validate();
  return c;
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << to_json(config).dump(2) << "\n";
  if (!out) throw IoError("config write failed: " + path);
}

std::string config_to_json(const RunConfig& config) {
  return to_json(config).dump(2);
}

}  // namespace prism
