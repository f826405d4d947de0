#include "cereal/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cereal/error.hpp"
#include "cereal/kernels.hpp"

namespace cereal {

void BlobSpec::validate() const {
  require(n_points >= 2, "blobs: n_points must be >= 2");
  require(n_clusters >= 1 && n_clusters <= n_points, "blobs: need 1 <= n_clusters <= n_points");
  require(dimension >= 1, "blobs: dimension must be >= 1");
  require(cluster_std > 0.0, "blobs: cluster_std must be > 0");
  require(center_spread > 0.0, "blobs: center_spread must be > 0");
}

Blobs make_blobs(const BlobSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Rng center_rng = rng.fork(1);
  Rng point_rng = rng.fork(2);
  Matrix centers(spec.n_clusters, spec.dimension);
  for (auto& c : centers.values()) c = center_rng.uniform() * spec.center_spread;

  Matrix points(spec.n_points, spec.dimension);
  std::vector<int> labels(spec.n_points);
  std::vector<std::string> ids(spec.n_points);
  std::vector<std::optional<std::string>> payloads(spec.n_points);
  const int width = static_cast<int>(std::to_string(spec.n_points).size());
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    const std::size_t c = i % spec.n_clusters;
    labels[i] = static_cast<int>(c);
    auto row = points.row(i);
    const auto center = centers.row(c);
    for (std::size_t j = 0; j < spec.dimension; ++j)
      row[j] = center[j] + spec.cluster_std * point_rng.normal();
    std::string num = std::to_string(i);
    ids[i] = "p" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    payloads[i] = "blob point " + ids[i];
  }
  return {EmbeddingDataset(std::move(ids), std::move(points), std::move(payloads)),
          std::move(labels)};
}

namespace {

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  auto copy_center = [&](std::size_t c, std::size_t i) {
    const auto src = points.row(i);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
  };
  copy_center(0, rng.below(n));
  for (std::size_t c = 1; c < k; ++c) {
    const auto prev = centers.row(c - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = points.row(i);
      double d = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) d += (p[j] - prev[j]) * (p[j] - prev[j]);
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    copy_center(c, pick);
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, int max_iter, double tol) {
  const std::size_t n = points.rows();
  if (k == 0 || k > n)
    fail(ErrorKind::invalid_argument,
         "kmeans: k=" + std::to_string(k) + " must be in [1, n=" + std::to_string(n) + "]");
  require(max_iter >= 1, "kmeans: max_iter must be >= 1");

  KMeansResult res;
  res.centers = kmeans_plus_plus(points, k, rng);
  std::vector<int> assign(n);
  std::vector<double> dist2(n);
  const std::size_t d = points.cols();

  for (int it = 0; it < max_iter; ++it) {
    kernels::nearest_center(points, res.centers, assign, dist2);
    double inertia = 0.0;
    for (double v : dist2) inertia += v;
    res.inertia_trace.push_back(inertia);
    res.iterations = it + 1;

    Matrix next(k, d);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++sizes[c];
      const auto p = points.row(i);
      auto dst = next.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] += p[j];
    }
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        for (auto& x : next.row(c)) x /= static_cast<double>(sizes[c]);
        continue;
      }
      // Farthest point from its own center that has not already re-seeded.
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!used[i] && dist2[i] > best) {
          best = dist2[i];
          far = i;
        }
      used[far] = true;
      const auto p = points.row(far);
      std::copy(p.begin(), p.end(), next.row(c).begin());
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double t = next(c, j) - res.centers(c, j);
        s += t * t;
      }
      shift = std::max(shift, std::sqrt(s));
    }
    res.centers = std::move(next);
    if (shift < tol) break;
  }
  kernels::nearest_center(points, res.centers, assign, dist2);
  res.inertia = 0.0;
  for (double v : dist2) res.inertia += v;
  res.inertia_trace.push_back(res.inertia);
  res.clustering = HardClustering(std::move(assign), static_cast<int>(k));
  return res;
}

}  // namespace cereal
