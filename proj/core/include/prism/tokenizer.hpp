#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/dataset.hpp"
#include "prism/mdp.hpp"

namespace prism {

/// Continuous feature vectors for one stream (states or actions), one
/// matrix per trajectory, rows are per-step vectors.
struct EmbeddingDataset {
  std::vector<Matrix> sequences;
  int dim = 0;

  long total_rows() const;
  void validate() const;
};

struct Codebook {
  Matrix centroids;  // k x dim
  int k = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

struct KMeansOptions {
  int max_iters = 100;
  double tol = 1e-6;  // max centroid shift
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded at
/// the point currently farthest from its assigned centroid. Deterministic
/// given the seed.
Codebook fit_codebook(const EmbeddingDataset& data, int k, std::uint64_t seed,
                      const KMeansOptions& opt = {});

/// Nearest-centroid token ids, ties broken by lowest centroid index.
std::vector<std::vector<int>> assign_tokens(const Codebook& codebook,
                                            const EmbeddingDataset& data);

struct TrajectoryStats {
  double coverage_pct = 0.0;   // distinct tokens / num_states * 100
  double avg_revisits = 0.0;   // mean occurrence count over distinct tokens
  double singleton_pct = 0.0;  // % of distinct tokens occurring exactly once
};

struct DiscretizationStats {
  std::vector<TrajectoryStats> per_trajectory;
  TrajectoryStats mean;
  TrajectoryStats stddev;  // population std across trajectories
};

DiscretizationStats discretization_stats(
    const std::vector<std::vector<int>>& token_sequences, int num_states);

/// Renders the stats as a small TSV table with explicit units.
std::string format_stats_table(const DiscretizationStats& stats,
                               int num_states);

/// Binary matrix file: int32 rows, int32 cols, then row-major float32.
Matrix load_embedding_matrix(const std::string& path);
void save_embedding_matrix(const Matrix& m, const std::string& path);

/// One embedding file per trajectory, listed one path per line. Relative
/// paths resolve against the manifest's directory.
EmbeddingDataset load_embedding_manifest(const std::string& manifest_path);

}  // namespace prism
