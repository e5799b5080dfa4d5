#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/errors.hpp"

namespace prism {

/// One demonstration: paired state and action id sequences of equal length.
/// Labels and counter traces are generator-side diagnostics; they are never
/// fed to training.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<int> labels;    // empty when absent
  std::vector<int> counters;  // empty when absent

  int length() const { return static_cast<int>(states.size()); }
  bool has_labels() const { return !labels.empty(); }
};

struct TrajectoryDataset {
  std::vector<Trajectory> trajectories;
  int num_states = 0;
  int num_actions = 0;
  std::string generator;
  std::uint64_t seed = 0;

  long total_steps() const {
    long n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
  }

  /// Throws BoundsError / DimensionMismatch on malformed content.
  void validate() const;
};

/// Line-delimited JSON: a header record followed by one trajectory per line.
/// Round-trips losslessly (all fields are integers).
TrajectoryDataset load_dataset(const std::string& path);
void save_dataset(const TrajectoryDataset& dataset, const std::string& path);

}  // namespace prism
