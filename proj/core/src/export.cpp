#include "prism/export.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace prism {

namespace {

void write_table(const Matrix& m, const std::string& header,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write table: " + path);
  out << "# " << header << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << m(i, j) << (j + 1 == m.cols() ? '\n' : '\t');
    }
  }
  if (!out) throw IoError("table write failed: " + path);
}

}  // namespace

std::vector<std::string> export_maps(const Checkpoint& ckpt,
                                     const TabularMdp& mdp,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const RewardSet set = ckpt.reward_set(mdp);
  std::vector<std::string> written;

  for (int k = 0; k < set.size(); ++k) {
    const Matrix& q = set.qtables[k].values;
    const Matrix& pi = set.policies[k].probs;
    const int S = mdp.num_states();

    Matrix value(S, 1), greedy(S, 1), confidence(S, 1);
    for (int s = 0; s < S; ++s) {
      int best = 0;
      for (int a = 1; a < mdp.num_actions(); ++a) {
        if (q(s, a) > q(s, best)) best = a;
      }
      value(s, 0) = q(s, best);
      greedy(s, 0) = best;

      double top1 = 0.0, top2 = 0.0;
      for (int a = 0; a < mdp.num_actions(); ++a) {
        if (pi(s, a) > top1) {
          top2 = top1;
          top1 = pi(s, a);
        } else if (pi(s, a) > top2) {
          top2 = pi(s, a);
        }
      }
      confidence(s, 0) = top1 - top2;
    }

    const std::string tag = std::to_string(k);
    const auto dir = std::filesystem::path(out_dir);
    auto emit = [&](const Matrix& m, const std::string& name,
                    const std::string& header) {
      const std::string path = (dir / (name + "_" + tag + ".tsv")).string();
      write_table(m, header, path);
      written.push_back(path);
    };
    emit(ckpt.rewards[k].values, "reward",
         "reward table, rows = states, cols = actions");
    emit(value, "value", "state value max_a Q(s, a), one row per state");
    emit(greedy, "greedy", "greedy action id per state");
    emit(confidence, "confidence",
         "top-1 minus top-2 Boltzmann probability per state");
  }
  return written;
}

Matrix load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open table: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw ParseError("ragged table", lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("empty table: " + path);
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace prism
