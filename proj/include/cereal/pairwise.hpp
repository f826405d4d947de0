#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cereal/config.hpp"
#include "cereal/metrics.hpp"
#include "cereal/mlp.hpp"
#include "cereal/pipeline.hpp"
#include "cereal/rng.hpp"
#include "cereal/types.hpp"

namespace cereal {

/// Same-cluster judgment on an unordered pair, stored with i < j.
struct PairAnnotation {
  std::size_t i = 0;
  std::size_t j = 0;
  bool same = false;

  PairAnnotation() = default;
  PairAnnotation(std::size_t a, std::size_t b, bool same_cluster);
  friend bool operator==(const PairAnnotation&, const PairAnnotation&) = default;
};

/// Uniform distinct unordered pairs over n points, never repeating a pair for
/// the lifetime of the sampler.
class PairSampler {
 public:
  PairSampler(std::size_t n, Rng rng);

  std::size_t total() const noexcept { return total_; }
  std::size_t remaining() const noexcept { return total_ - used_.size(); }
  /// Throws invalid_argument when fewer than count pairs remain.
  std::vector<std::pair<std::size_t, std::size_t>> next(std::size_t count);

 private:
  std::pair<std::size_t, std::size_t> decode(std::size_t k) const;

  std::size_t n_;
  std::size_t total_;
  Rng rng_;
  std::unordered_set<std::size_t> used_;
};

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t n_pairs,
                                                              Rng& rng);

/// Majority class downsampled uniformly to the minority count, then shuffled.
/// Throws invalid_argument unless both classes are present.
std::vector<PairAnnotation> balance_pairs(std::span<const PairAnnotation> pairs, Rng& rng);

inline constexpr double kPairEps = 1e-12;

/// Mean binary cross-entropy of s_ij against p_ij = pi_i . pi_j, with p_ij
/// clamped to [eps, 1 - eps]. Rows of left and right are paired.
double l2c_loss(const Matrix& left, const Matrix& right, std::span<const int> same,
                double eps = kPairEps);

/// Gradients of l2c_loss with respect to the logits behind left and right.
std::pair<Matrix, Matrix> l2c_logit_grad(const Matrix& left, const Matrix& right,
                                         std::span<const int> same, double eps = kPairEps);

/// Fresh linear softmax classifier with `outputs` classes trained on the pairs
/// with Adam.
Mlp train_l2c(Rng rng, const Matrix& vectors, std::span<const PairAnnotation> pairs,
              int outputs, const PairwiseConfig& cfg);

/// Share of pairs whose same/different judgment matches argmax agreement.
double pair_accuracy(const Mlp& model, const Matrix& vectors,
                     std::span<const PairAnnotation> pairs);

struct PairwiseResult {
  ErrorCurve curve;
  std::vector<PairAnnotation> annotations;
  std::vector<double> pair_accuracy;  // per round, on that round's raw pairs so far
  std::vector<std::string> warnings;
};

/// Rounds of uniform pair annotations; after each, a fresh surrogate is
/// trained on the balanced pairs and the metric is estimated from its
/// pseudo-labels. The curve's x-axis counts raw annotations. Rounds where the
/// thresholded pseudo-label set is empty, or no model exists yet, are gaps.
PairwiseResult run_pairwise_pipeline(const EmbeddingDataset& data, const Clustering& test,
                                     PairAnnotator& annotator, const PairwiseConfig& cfg,
                                     std::optional<std::vector<int>> truth = std::nullopt,
                                     Predictor predictor = {});

/// One {"i": id, "j": id, "same": bool} per line.
void save_pairs(std::span<const PairAnnotation> pairs, const EmbeddingDataset& data,
                const std::filesystem::path& path);
std::vector<PairAnnotation> load_pairs(const std::filesystem::path& path,
                                       const EmbeddingDataset& data);

}  // namespace cereal
