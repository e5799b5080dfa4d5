#include "prism/tokenizer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "prism/rng.hpp"

namespace prism {

long EmbeddingDataset::total_rows() const {
  long n = 0;
  for (const Matrix& m : sequences) n += m.rows();
  return n;
}

void EmbeddingDataset::validate() const {
  if (dim <= 0) throw InvalidConfig("embedding dimension must be positive");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].cols() != dim) {
      throw DimensionMismatch("embedding sequence " + std::to_string(i) +
                              " has dim " + std::to_string(sequences[i].cols()) +
                              ", expected " + std::to_string(dim));
    }
    if (!sequences[i].allFinite()) {
      throw NumericalFault("embedding sequence " + std::to_string(i) +
                           " contains non-finite values");
    }
  }
}

namespace {

// Flat view of all vectors across trajectories.
Matrix flatten(const EmbeddingDataset& data) {
  Matrix all(data.total_rows(), data.dim);
  long row = 0;
  for (const Matrix& m : data.sequences) {
    all.middleRows(row, m.rows()) = m;
    row += m.rows();
  }
  return all;
}

int nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& x,
                     double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

}  // namespace

Codebook fit_codebook(const EmbeddingDataset& data, int k, std::uint64_t seed,
                      const KMeansOptions& opt) {
  data.validate();
  const Matrix points = flatten(data);
  const long n = points.rows();
  if (k < 1) throw InvalidConfig("k must be at least 1");
  if (n < k) {
    throw TooFewPoints("need at least " + std::to_string(k) +
                       " vectors, have " + std::to_string(n));
  }

  Rng rng(seed);
  Codebook cb;
  cb.k = k;
  cb.seed = seed;
  cb.centroids.resize(k, data.dim);

  // k-means++ seeding: first centroid uniform, the rest D^2-weighted.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  cb.centroids.row(0) = points.row(rng.below(n));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (long i = 0; i < n; ++i) {
      const double d = (points.row(i) - cb.centroids.row(c - 1)).squaredNorm();
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    long pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (long i = 0; i < n; ++i) {
        cum += d2[i];
        if (target < cum) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = rng.below(n);
    }
    cb.centroids.row(c) = points.row(pick);
  }

  std::vector<int> assign(n, 0);
  std::vector<double> dist(n, 0.0);
  Matrix sums(k, data.dim);
  std::vector<long> counts(k, 0);

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    // Assignment.
    double inertia = 0.0;
    for (long i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(cb.centroids, points.row(i), &dist[i]);
      inertia += dist[i];
    }

    // Empty-cluster repair: move the centroid onto the worst-fit point.
    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0L);
    for (long i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      long worst = 0;
      for (long i = 1; i < n; ++i) {
        if (dist[i] > dist[worst]) worst = i;
      }
      const int old = assign[worst];
      sums.row(old) -= points.row(worst);
      --counts[old];
      assign[worst] = c;
      sums.row(c) = points.row(worst);
      counts[c] = 1;
      inertia -= dist[worst];
      dist[worst] = 0.0;
    }
    cb.inertia = inertia;
    cb.inertia_history.push_back(inertia);

    // Update.
    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      const Eigen::RowVectorXd next = sums.row(c) / static_cast<double>(counts[c]);
      max_shift = std::max(max_shift, (next - cb.centroids.row(c)).norm());
      cb.centroids.row(c) = next;
    }
    if (max_shift <= opt.tol) break;
  }

  // Final inertia at the converged centroids.
  double inertia = 0.0;
  for (long i = 0; i < n; ++i) {
    double d;
    nearest_centroid(cb.centroids, points.row(i), &d);
    inertia += d;
  }
  cb.inertia = inertia;
  cb.inertia_history.push_back(inertia);
  return cb;
}

std::vector<std::vector<int>> assign_tokens(const Codebook& codebook,
                                            const EmbeddingDataset& data) {
  data.validate();
  if (codebook.centroids.cols() != data.dim) {
    throw DimensionMismatch("codebook dim " +
                            std::to_string(codebook.centroids.cols()) +
                            " does not match embeddings dim " +
                            std::to_string(data.dim));
  }
  std::vector<std::vector<int>> out;
  out.reserve(data.sequences.size());
  for (const Matrix& m : data.sequences) {
    std::vector<int> tokens(m.rows());
    for (long i = 0; i < m.rows(); ++i) {
      tokens[i] = nearest_centroid(codebook.centroids, m.row(i));
    }
    out.push_back(std::move(tokens));
  }
  return out;
}

DiscretizationStats discretization_stats(
    const std::vector<std::vector<int>>& token_sequences, int num_states) {
  DiscretizationStats out;
  out.per_trajectory.reserve(token_sequences.size());
  for (const auto& tokens : token_sequences) {
    std::unordered_map<int, long> occurrences;
    for (int t : tokens) {
      if (t < 0 || t >= num_states) {
        throw BoundsError("token id " + std::to_string(t) + " out of range");
      }
      ++occurrences[t];
    }
    TrajectoryStats ts;
    const double distinct = static_cast<double>(occurrences.size());
    ts.coverage_pct = distinct / num_states * 100.0;
    long singles = 0;
    for (const auto& [tok, cnt] : occurrences) {
      ts.avg_revisits += static_cast<double>(cnt);
      if (cnt == 1) ++singles;
    }
    ts.avg_revisits /= distinct;
    ts.singleton_pct = static_cast<double>(singles) / distinct * 100.0;
    out.per_trajectory.push_back(ts);
  }

  const double n = static_cast<double>(out.per_trajectory.size());
  auto reduce = [&](auto field) {
    double mean = 0.0;
    for (const auto& ts : out.per_trajectory) mean += ts.*field;
    mean /= n;
    double var = 0.0;
    for (const auto& ts : out.per_trajectory) {
      var += (ts.*field - mean) * (ts.*field - mean);
    }
    return std::pair{mean, std::sqrt(var / n)};
  };
  std::tie(out.mean.coverage_pct, out.stddev.coverage_pct) =
      reduce(&TrajectoryStats::coverage_pct);
  std::tie(out.mean.avg_revisits, out.stddev.avg_revisits) =
      reduce(&TrajectoryStats::avg_revisits);
  std::tie(out.mean.singleton_pct, out.stddev.singleton_pct) =
      reduce(&TrajectoryStats::singleton_pct);
  return out;
}

std::string format_stats_table(const DiscretizationStats& stats,
                               int num_states) {
  std::ostringstream out;
  out << "metric\tunits\tmean\tstd\n";
  out.precision(6);
  out << "coverage\t% of " << num_states << " tokens\t"
      << stats.mean.coverage_pct << "\t" << stats.stddev.coverage_pct << "\n";
  out << "avg_revisits\toccurrences per distinct token\t"
      << stats.mean.avg_revisits << "\t" << stats.stddev.avg_revisits << "\n";
  out << "singleton\t% of distinct tokens\t" << stats.mean.singleton_pct
      << "\t" << stats.stddev.singleton_pct << "\n";
  return out.str();
}

Matrix load_embedding_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path);
  std::int32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || rows <= 0 || cols <= 0) {
    throw ParseError("bad embedding header in " + path);
  }
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw ParseError("embedding file truncated: " + path);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = static_cast<double>(buf[static_cast<std::size_t>(i) * cols + j]);
  return m;
}

void save_embedding_matrix(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embedding file: " + path);
  const std::int32_t rows = static_cast<std::int32_t>(m.rows());
  const std::int32_t cols = static_cast<std::int32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const float v = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw IoError("embedding write failed: " + path);
}

EmbeddingDataset load_embedding_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  EmbeddingDataset ds;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = base / p;
    Matrix m = load_embedding_matrix(p.string());
    if (ds.sequences.empty()) {
      ds.dim = static_cast<int>(m.cols());
    } else if (m.cols() != ds.dim) {
      throw DimensionMismatch("embedding dim changes at manifest line " +
                              std::to_string(lineno));
    }
    ds.sequences.push_back(std::move(m));
  }
  if (ds.sequences.empty()) {
    throw ParseError("manifest lists no embedding files");
  }
  return ds;
}

}  // namespace prism
