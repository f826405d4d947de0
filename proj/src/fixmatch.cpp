#include "cereal/fixmatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cereal/error.hpp"

namespace cereal {

namespace {

constexpr std::uint64_t kUnlabeledTag = 101;
constexpr std::uint64_t kWeakTag = 102;
constexpr std::uint64_t kMixTag = 103;
constexpr std::uint64_t kStrongTag = 104;
constexpr std::uint64_t kLabeledDropoutTag = 105;

MixupBatch draw_mixup(const Matrix& batch, double alpha, Rng& rng, std::optional<double> forced) {
  const std::size_t m = batch.rows();
  MixupBatch out;
  out.partner.resize(m);
  std::iota(out.partner.begin(), out.partner.end(), 0);
  rng.shuffle(out.partner.begin(), out.partner.end());
  out.coef.resize(m);
  for (auto& c : out.coef) {
    if (forced) {
      c = *forced;
    } else {
      const double l = rng.beta(alpha, alpha);
      c = std::max(l, 1.0 - l);
    }
  }
  out.mixed = apply_mixup(batch, out.partner, out.coef);
  return out;
}

struct UnlabeledTerm {
  double loss = 0.0;
  double mask_rate = 0.0;
};

/// l_u on one unlabeled batch. When grad is given, adds weight * dl_u/dtheta.
UnlabeledTerm unlabeled_term(const Mlp& model, const Matrix& ux, const FixMatchConfig& cfg,
                             Rng& weak_rng, Rng& mix_rng, Rng& strong_rng,
                             std::optional<double> forced_mix, Gradient* grad, double weight) {
  UnlabeledTerm term;
  const std::size_t m = ux.rows();
  if (m == 0) return term;

  // Pseudo-targets from a dropout (weak) view; no gradient flows through them.
  const Matrix weak = forward(model, ux, Mode::train, &weak_rng);
  std::vector<int> target(m);
  std::vector<double> mask(m, 0.0);
  std::size_t kept = 0;
  for (std::size_t b = 0; b < m; ++b) {
    const auto row = weak.row(b);
    const auto it = std::max_element(row.begin(), row.end());
    target[b] = static_cast<int>(it - row.begin());
    if (*it >= cfg.threshold) {
      mask[b] = 1.0;
      ++kept;
    }
  }
  term.mask_rate = static_cast<double>(kept) / static_cast<double>(m);

  const auto mixed = draw_mixup(ux, cfg.mixup_alpha, mix_rng, forced_mix);
  const auto strong = forward_pass(model, mixed.mixed, Mode::train, &strong_rng);
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t b = 0; b < m; ++b)
    if (mask[b] > 0.0)
      term.loss += cross_entropy_logits_row(strong.logits.row(b), target[b]);
  term.loss *= inv;

  if (grad && kept > 0) {
    Matrix d = cross_entropy_grad(strong.probs, target, weight * inv);
    for (std::size_t b = 0; b < m; ++b)
      if (mask[b] == 0.0)
        for (auto& x : d.row(b)) x = 0.0;
    accumulate(*grad, backward(model, strong, d));
  }
  return term;
}

}  // namespace

TrainConfig FixMatchConfig::supervised_equivalent() const {
  TrainConfig t;
  t.optimizer = OptimizerKind::sgd;
  t.learning_rate = learning_rate;
  t.weight_decay = weight_decay;
  t.momentum = momentum;
  t.nesterov = nesterov;
  t.batch_size = labeled_batch;
  t.epochs = epochs;
  t.schedule = Schedule::cosine;
  t.select_on_validation = false;
  return t;
}

void FixMatchConfig::validate() const {
  require(labeled_batch >= 1, "fixmatch.labeled_batch must be >= 1");
  require(unlabeled_ratio >= 1, "fixmatch.unlabeled_ratio must be >= 1");
  require(threshold > 0.0 && threshold <= 1.0, "fixmatch.threshold must be in (0, 1]");
  require(unlabeled_weight >= 0.0, "fixmatch.unlabeled_weight must be >= 0");
  require(mixup_alpha > 0.0, "fixmatch.mixup_alpha must be > 0");
  require(learning_rate > 0.0, "fixmatch.learning_rate must be > 0");
  require(epochs >= 1, "fixmatch.epochs must be >= 1");
}

Matrix apply_mixup(const Matrix& batch, std::span<const std::size_t> partner,
                   std::span<const double> coef) {
  require(partner.size() == batch.rows() && coef.size() == batch.rows(),
          "apply_mixup: partner/coef size mismatch");
  Matrix out(batch.rows(), batch.cols());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    require(partner[i] < batch.rows(), "apply_mixup: partner index out of range");
    const auto a = batch.row(i);
    const auto b = batch.row(partner[i]);
    auto dst = out.row(i);
    const double l = coef[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = l * a[j] + (1.0 - l) * b[j];
  }
  return out;
}

MixupBatch mixup_batch(const Matrix& batch, double alpha, Rng& rng) {
  require(batch.rows() >= 2, "mixup_batch: needs at least 2 rows");
  require(alpha > 0.0, "mixup_batch: alpha must be > 0");
  return draw_mixup(batch, alpha, rng, std::nullopt);
}

FixMatchLoss fixmatch_loss(const Mlp& model, const Matrix& labeled_x, std::span<const int> labeled_y,
                           const Matrix& unlabeled_x, const FixMatchConfig& cfg, Rng& rng,
                           std::optional<double> forced_mix) {
  cfg.validate();
  require(labeled_x.rows() >= 1 && unlabeled_x.rows() >= 1, "fixmatch_loss: empty batch");
  require(unlabeled_x.cols() == labeled_x.cols(), "fixmatch_loss: batch widths differ");
  Rng labeled_rng = rng.fork(kLabeledDropoutTag);
  Rng weak_rng = rng.fork(kWeakTag);
  Rng mix_rng = rng.fork(kMixTag);
  Rng strong_rng = rng.fork(kStrongTag);

  FixMatchLoss out;
  const auto lp = forward_pass(model, labeled_x, Mode::train, &labeled_rng);
  out.supervised = cross_entropy_logits(lp.logits, labeled_y);
  const auto u = unlabeled_term(model, unlabeled_x, cfg, weak_rng, mix_rng, strong_rng, forced_mix,
                                nullptr, 0.0);
  out.unsupervised = u.loss;
  out.mask_rate = u.mask_rate;
  out.loss = out.supervised + cfg.unlabeled_weight * out.unsupervised;
  return out;
}

Mlp train_fixmatch(Rng rng, const Matrix& labeled_x, std::span<const int> labeled_y,
                   int num_classes, const Matrix& unlabeled_x, const ModelConfig& model,
                   const FixMatchConfig& cfg, TrainReport* report) {
  cfg.validate();
  require(labeled_x.rows() >= 1, "train_fixmatch: empty labeled set");
  const TrainConfig base = cfg.supervised_equivalent();
  if (unlabeled_x.rows() == 0 || cfg.unlabeled_weight == 0.0)
    return detail::run_training(rng, labeled_x, labeled_y, num_classes, model, base, nullptr,
                                report);
  require(unlabeled_x.cols() == labeled_x.cols(), "train_fixmatch: unlabeled width differs");

  Rng pick_rng = rng.fork(kUnlabeledTag);
  Rng weak_rng = rng.fork(kWeakTag);
  Rng mix_rng = rng.fork(kMixTag);
  Rng strong_rng = rng.fork(kStrongTag);
  const std::size_t batch = cfg.unlabeled_ratio * cfg.labeled_batch;
  std::vector<std::size_t> idx(batch);

  const detail::ExtraTerm extra = [&](const Mlp& m, Gradient& grad) {
    for (auto& i : idx) i = pick_rng.below(unlabeled_x.rows());
    const Matrix ux = unlabeled_x.gather(idx);
    const auto term = unlabeled_term(m, ux, cfg, weak_rng, mix_rng, strong_rng, std::nullopt,
                                     &grad, cfg.unlabeled_weight);
    return cfg.unlabeled_weight * term.loss;
  };
  return detail::run_training(rng, labeled_x, labeled_y, num_classes, model, base, &extra, report);
}

}  // namespace cereal
