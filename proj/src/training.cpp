#include "cereal/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "cereal/error.hpp"

namespace cereal {

namespace {

// Fork tags of the training stream. Supervised and semi-supervised training
// share these so that equal seeds give equal labeled-side randomness.
constexpr std::uint64_t kInitTag = 1;
constexpr std::uint64_t kSplitTag = 2;
constexpr std::uint64_t kShuffleTag = 3;
constexpr std::uint64_t kDropoutTag = 4;

}  // namespace

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  fail(ErrorKind::invalid_argument, "unknown optimizer '" + name + "' (adam|sgd)");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

Schedule parse_schedule(const std::string& name) {
  if (name == "constant") return Schedule::constant;
  if (name == "cosine") return Schedule::cosine;
  fail(ErrorKind::invalid_argument, "unknown schedule '" + name + "' (constant|cosine)");
}

std::string schedule_name(Schedule s) { return s == Schedule::constant ? "constant" : "cosine"; }

void ModelConfig::validate() const {
  require(hidden_width >= 1, "model.hidden_width must be >= 1");
  require(num_layers >= 1, "model.num_layers must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "model.dropout must be in [0, 1)");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "train.learning_rate must be positive");
  require(weight_decay >= 0.0, "train.weight_decay must be nonnegative");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(epochs >= 1, "train.epochs must be >= 1");
  require(!select_on_validation || (validation_fraction > 0.0 && validation_fraction < 1.0),
          "train.validation_fraction must be in (0, 1)");
}

Optimizer::Optimizer(const Mlp& model, const TrainConfig& cfg)
    : cfg_(cfg), first_(zero_gradient(model)), second_(zero_gradient(model)) {}

void Optimizer::step(Mlp& model, const Gradient& grad, double lr) {
  ++steps_;
  auto& layers = model.layers();
  const double wd = cfg_.weight_decay;
  if (cfg_.optimizer == OptimizerKind::adam) {
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + wd * p[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
      }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight.values(), grad[l].weight.values(), first_[l].weight.values(),
             second_[l].weight.values());
      update(layers[l].bias, grad[l].bias, first_[l].bias, second_[l].bias);
    }
    return;
  }
  const double mu = cfg_.momentum;
  const bool first_step = steps_ == 1;
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& buf) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + wd * p[i];
      if (mu == 0.0) {
        p[i] -= lr * gi;
        continue;
      }
      buf[i] = first_step ? gi : mu * buf[i] + gi;
      p[i] -= lr * (cfg_.nesterov ? gi + mu * buf[i] : buf[i]);
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight.values(), grad[l].weight.values(), first_[l].weight.values());
    update(layers[l].bias, grad[l].bias, first_[l].bias);
  }
}

Matrix standardize_columns(const Matrix& x) {
  Matrix out = x;
  const std::size_t n = x.rows();
  if (n == 0) return out;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
    for (std::size_t r = 0; r < n; ++r) out(r, c) = (x(r, c) - mean) * scale;
  }
  return out;
}

double scheduled_lr(const TrainConfig& cfg, long step, long total_steps) {
  if (cfg.schedule == Schedule::constant || total_steps <= 0) return cfg.learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.learning_rate * std::cos(7.0 * std::numbers::pi * progress / 16.0);
}

namespace detail {

Mlp run_training(Rng rng, const Matrix& x, std::span<const int> y, int num_classes,
                 const ModelConfig& model_cfg, const TrainConfig& cfg, const ExtraTerm* extra,
                 TrainReport* report) {
  model_cfg.validate();
  cfg.validate();
  require(x.rows() >= 1, "training needs at least one labeled point");
  require(y.size() == x.rows(), "training: label count does not match points");
  require(num_classes >= 1, "training: num_classes must be >= 1");
  for (int label : y) require(label >= 0 && label < num_classes, "training: label out of range");

  Rng init_rng = rng.fork(kInitTag);
  Rng split_rng = rng.fork(kSplitTag);
  Rng shuffle_rng = rng.fork(kShuffleTag);
  Rng dropout_rng = rng.fork(kDropoutTag);

  Mlp model = Mlp::he_uniform(model_cfg.widths(x.cols(), static_cast<std::size_t>(num_classes)),
                              model_cfg.dropout, init_rng);

  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> train_idx = order, val_idx;
  const bool use_validation = cfg.select_on_validation && x.rows() >= cfg.min_validation_points;
  if (use_validation) {
    split_rng.shuffle(order.begin(), order.end());
    auto n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(x.rows())));
    n_val = std::clamp<std::size_t>(n_val, 1, x.rows() - 1);
    val_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }

  Matrix val_x;
  std::vector<int> val_y;
  if (use_validation) {
    val_x = x.gather(val_idx);
    for (auto i : val_idx) val_y.push_back(y[i]);
  }

  const std::size_t B = cfg.batch_size;
  const long steps_per_epoch = static_cast<long>((train_idx.size() + B - 1) / B);
  const long total_steps = steps_per_epoch * cfg.epochs;
  Optimizer opt(model, cfg);
  Mlp best = model;
  double best_val = std::numeric_limits<double>::infinity();
  long step = 0;
  if (report) {
    *report = TrainReport{};
    report->train_points = train_idx.size();
    report->validation_points = val_idx.size();
  }

  std::vector<std::size_t> perm = train_idx;
  std::vector<int> batch_y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(perm.begin(), perm.end());
    double epoch_loss = 0.0;
    for (long s = 0; s < steps_per_epoch; ++s) {
      const std::size_t begin = static_cast<std::size_t>(s) * B;
      const std::size_t end = std::min(perm.size(), begin + B);
      const std::span<const std::size_t> idx(perm.data() + begin, end - begin);
      const Matrix bx = x.gather(idx);
      batch_y.clear();
      for (auto i : idx) batch_y.push_back(y[i]);

      const auto pass = forward_pass(model, bx, Mode::train, &dropout_rng);
      const double inv = 1.0 / static_cast<double>(idx.size());
      Gradient grad = backward(model, pass, cross_entropy_grad(pass.probs, batch_y, inv));
      epoch_loss += cross_entropy_logits(pass.logits, batch_y);
      if (extra) (*extra)(model, grad);
      opt.step(model, grad, scheduled_lr(cfg, step, total_steps));
      ++step;
    }
    if (report) report->train_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    if (use_validation) {
      const double v = cross_entropy_logits(forward_pass(model, val_x, Mode::eval).logits, val_y);
      if (report) report->validation_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best = model;
        if (report) report->best_epoch = epoch;
      }
    }
  }
  if (report) report->steps = step;
  if (!use_validation) {
    if (report) report->best_epoch = cfg.epochs - 1;
    return model;
  }
  return best;
}

}  // namespace detail

Mlp train_supervised(Rng rng, const Matrix& x, std::span<const int> y, int num_classes,
                     const ModelConfig& model, const TrainConfig& cfg, TrainReport* report) {
  return detail::run_training(rng, x, y, num_classes, model, cfg, nullptr, report);
}

}  // namespace cereal
