#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cereal/matrix.hpp"
#include "cereal/mlp.hpp"
#include "cereal/rng.hpp"
#include "cereal/training.hpp"

namespace cereal {

/// FixMatch on embeddings: dropout is the weak augmentation, mixup the strong.
struct FixMatchConfig {
  std::size_t labeled_batch = 32;   // B
  std::size_t unlabeled_ratio = 7;  // mu
  double threshold = 0.95;          // tau
  double unlabeled_weight = 1.0;    // lambda_u
  double mixup_alpha = 9.0;
  double learning_rate = 0.03;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  bool nesterov = true;
  int epochs = 64;

  /// The 1024-epoch schedule of the full-size benchmark.
  static FixMatchConfig paper_scale() {
    FixMatchConfig c;
    c.epochs = 1024;
    return c;
  }

  /// Supervised settings that share this config's optimizer, schedule and
  /// batching; training with no unlabeled term reduces to exactly these.
  TrainConfig supervised_equivalent() const;
  void validate() const;
};

struct MixupBatch {
  Matrix mixed;
  std::vector<std::size_t> partner;
  std::vector<double> coef;
};

/// mixed[i] = coef[i] * batch[i] + (1 - coef[i]) * batch[partner[i]], with
/// coef = max(l, 1 - l), l ~ Beta(alpha, alpha), partner a random permutation.
MixupBatch mixup_batch(const Matrix& batch, double alpha, Rng& rng);
/// The same combination with given partners and coefficients.
Matrix apply_mixup(const Matrix& batch, std::span<const std::size_t> partner,
                   std::span<const double> coef);

struct FixMatchLoss {
  double loss = 0.0;          // l_s + lambda_u * l_u
  double supervised = 0.0;    // l_s
  double unsupervised = 0.0;  // l_u
  double mask_rate = 0.0;     // share of unlabeled points at or above tau
};

/// Loss for one labeled batch and one unlabeled batch. forced_mix fixes every
/// mixup coefficient (1 = identity) instead of sampling it.
FixMatchLoss fixmatch_loss(const Mlp& model, const Matrix& labeled_x, std::span<const int> labeled_y,
                           const Matrix& unlabeled_x, const FixMatchConfig& cfg, Rng& rng,
                           std::optional<double> forced_mix = std::nullopt);

/// Fresh model from rng trained on labeled and unlabeled points. Unlabeled
/// batches of mu * B points are drawn with replacement every step. With no
/// unlabeled points or lambda_u = 0 this is train_supervised with
/// cfg.supervised_equivalent().
Mlp train_fixmatch(Rng rng, const Matrix& labeled_x, std::span<const int> labeled_y,
                   int num_classes, const Matrix& unlabeled_x, const ModelConfig& model,
                   const FixMatchConfig& cfg, TrainReport* report = nullptr);

}  // namespace cereal
