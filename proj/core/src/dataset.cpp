#include "prism/dataset.hpp"

#include <fstream>

#include <json.hpp>

namespace prism {

using nlohmann::json;

void TrajectoryDataset::validate() const {
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    if (t.states.size() != t.actions.size()) {
      throw DimensionMismatch("trajectory " + std::to_string(i) +
                              ": state and action sequences differ in length");
    }
    if (t.states.empty()) {
      throw DimensionMismatch("trajectory " + std::to_string(i) + " is empty");
    }
    if (!t.labels.empty() && t.labels.size() != t.states.size()) {
      throw DimensionMismatch("trajectory " + std::to_string(i) +
                              ": label sequence length mismatch");
    }
    if (!t.counters.empty() && t.counters.size() != t.states.size()) {
      throw DimensionMismatch("trajectory " + std::to_string(i) +
                              ": counter sequence length mismatch");
    }
    for (int s : t.states) {
      if (s < 0 || s >= num_states) {
        throw BoundsError("trajectory " + std::to_string(i) + ": state id " +
                          std::to_string(s) + " outside [0, " +
                          std::to_string(num_states) + ")");
      }
    }
    for (int a : t.actions) {
      if (a < 0 || a >= num_actions) {
        throw BoundsError("trajectory " + std::to_string(i) + ": action id " +
                          std::to_string(a) + " outside [0, " +
                          std::to_string(num_actions) + ")");
      }
    }
  }
}

TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  TrajectoryDataset ds;
  std::string line;
  long lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON record: ") + e.what(), lineno);
    }
    if (!have_header) {
      if (!rec.contains("num_states") || !rec.contains("num_actions")) {
        throw ParseError("first record must be a header with num_states and "
                         "num_actions",
                         lineno);
      }
      ds.num_states = rec.at("num_states").get<int>();
      ds.num_actions = rec.at("num_actions").get<int>();
      ds.generator = rec.value("generator", std::string{});
      ds.seed = rec.value("seed", std::uint64_t{0});
      if (ds.num_states <= 0 || ds.num_actions <= 0) {
        throw ParseError("header dimensions must be positive", lineno);
      }
      have_header = true;
      continue;
    }
    Trajectory t;
    try {
      t.states = rec.at("states").get<std::vector<int>>();
      t.actions = rec.at("actions").get<std::vector<int>>();
      if (rec.contains("labels")) {
        t.labels = rec.at("labels").get<std::vector<int>>();
      }
      if (rec.contains("counters")) {
        t.counters = rec.at("counters").get<std::vector<int>>();
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed trajectory record: ") + e.what(),
                       lineno);
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (!have_header) throw ParseError("dataset file has no header record");
  ds.validate();
  return ds;
}

void save_dataset(const TrajectoryDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  json header = {{"num_states", dataset.num_states},
                 {"num_actions", dataset.num_actions},
                 {"generator", dataset.generator},
                 {"seed", dataset.seed}};
  out << header.dump() << "\n";
  for (const Trajectory& t : dataset.trajectories) {
    json rec = {{"states", t.states}, {"actions", t.actions}};
    if (!t.labels.empty()) rec["labels"] = t.labels;
    if (!t.counters.empty()) rec["counters"] = t.counters;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace prism
