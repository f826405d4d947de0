#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cereal/matrix.hpp"
#include "cereal/metrics.hpp"
#include "cereal/mlp.hpp"
#include "cereal/rng.hpp"
#include "cereal/types.hpp"

namespace cereal {

enum class Acquisition { random, max_entropy, bald, cross_entropy, soft_nmi, hard_nmi };

Acquisition parse_acquisition(const std::string& name);
std::string acquisition_name(Acquisition a);
/// Whether scoring consults the surrogate at all.
bool needs_surrogate(Acquisition a);

/// Probabilities are clamped to this before any log.
inline constexpr double kLogFloor = 1e-12;

/// I_CY[c; y] / ((H_C + H_Y) / 2) from the labeled contingency, the weight
/// each (test cluster, reference label) pair carries inside the NMI scores.
/// All zero when the normalizer is zero.
class NmiField {
 public:
  explicit NmiField(const ContingencyStats& labeled);

  std::size_t test_clusters() const noexcept { return weights_.rows(); }
  std::size_t ref_clusters() const noexcept { return weights_.cols(); }
  double weight(std::size_t c, std::size_t y) const { return weights_(c, y); }

 private:
  Matrix weights_;
};

double score_max_entropy(std::span<const double> surrogate);
/// H(mean of passes) - mean of H(pass), clamped at 0. passes: P x K.
double score_bald(const Matrix& passes);
/// -sum_k f_c(k|x) log pi(k|x), index-aligned, shorter side zero-padded.
double score_cross_entropy(std::span<const double> test_dist, std::span<const double> surrogate);
/// 1 - sum_c sum_y f_c(c|x) pi(y|x) weight(c, y).
double score_soft_nmi(const NmiField& field, std::span<const double> test_dist,
                      std::span<const double> surrogate);
/// 1 - sum_y pi(y|x) weight(f_c(x), y).
double score_hard_nmi(const NmiField& field, int test_cluster, std::span<const double> surrogate);

/// Everything the scoring functions read for one acquisition round.
struct AcquisitionContext {
  const Mlp* surrogate = nullptr;
  const Clustering* test = nullptr;
  const Matrix* vectors = nullptr;        // dataset vectors
  ContingencyStats labeled_stats;         // test clustering vs human labels so far
  std::vector<std::size_t> candidates;    // unlabeled dataset positions
  int bald_passes = 10;
  /// Surrogate probabilities per candidate; when empty they are computed from
  /// the surrogate in eval mode.
  Matrix candidate_probs;
};

enum class Exec { serial, parallel };

/// Score of every candidate, in candidate order. BALD consumes rng; the
/// others do not. Serial and parallel execution give identical results.
std::vector<double> score_candidates(Acquisition kind, const AcquisitionContext& ctx, Rng& rng,
                                     Exec exec = Exec::parallel);

/// Samples n candidate positions without replacement, each draw proportional
/// to the remaining (score - min(0, min score) + 1e-12) mass.
std::vector<std::size_t> select(std::span<const double> scores, std::size_t n, Rng& rng);

}  // namespace cereal
