#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cereal/rng.hpp"
#include "cereal/types.hpp"

namespace cereal {

struct BlobSpec {
  std::size_t n_points = 1000;
  std::size_t n_clusters = 8;
  std::size_t dimension = 16;
  double cluster_std = 1.0;
  double center_spread = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Blobs {
  EmbeddingDataset dataset;
  std::vector<int> labels;
};

/// Centers uniform in [0, center_spread]^d, isotropic Gaussian points around
/// them. Point i belongs to cluster i mod K, so sizes differ by at most one.
Blobs make_blobs(const BlobSpec& spec);

struct KMeansResult {
  HardClustering clustering;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
  /// Within-cluster sum of squares after every assignment step.
  std::vector<double> inertia_trace;
};

/// Lloyd iterations from k-means++ seeding. Stops when no center moves more
/// than tol or after max_iter steps. Empty clusters are re-seeded with the
/// point farthest from its center.
KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, int max_iter = 300,
                    double tol = 1e-6);

}  // namespace cereal
