#pragma once

#include <string>
#include <vector>

#include "prism/checkpoint.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// Writes per-intention plot-ready tables into `out_dir`:
///   reward_<k>.tsv      |S| x |A| reward table
///   value_<k>.tsv       |S| state values (max_a Q)
///   greedy_<k>.tsv      |S| greedy action ids
///   confidence_<k>.tsv  |S| gaps between the top-two Boltzmann probs
/// Values use max precision so reloads are exact.
std::vector<std::string> export_maps(const Checkpoint& ckpt,
                                     const TabularMdp& mdp,
                                     const std::string& out_dir);

/// Reads back a table written by export_maps (comment lines skipped).
Matrix load_table(const std::string& path);

}  // namespace prism
