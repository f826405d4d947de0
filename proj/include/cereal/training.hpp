#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cereal/matrix.hpp"
#include "cereal/mlp.hpp"
#include "cereal/rng.hpp"

namespace cereal {

enum class OptimizerKind { adam, sgd };
enum class Schedule { constant, cosine };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind k);
Schedule parse_schedule(const std::string& name);
std::string schedule_name(Schedule s);

/// Surrogate architecture: num_layers dense layers of the given hidden width.
struct ModelConfig {
  std::size_t hidden_width = 128;
  std::size_t num_layers = 4;
  double dropout = 0.2;

  std::vector<std::size_t> widths(std::size_t input, std::size_t classes) const {
    return mlp_widths(input, hidden_width, num_layers, classes);
  }
  void validate() const;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  double momentum = 0.9;  // sgd only
  bool nesterov = true;   // sgd only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 64;
  int epochs = 20;
  Schedule schedule = Schedule::constant;
  /// Hold out this share of the labeled points and keep the epoch with the
  /// lowest validation cross-entropy.
  bool select_on_validation = true;
  double validation_fraction = 0.2;
  /// Below this many labeled points no validation split is made.
  std::size_t min_validation_points = 10;

  void validate() const;
};

/// Adam or SGD (optionally Nesterov momentum), L2 weight decay folded into
/// the gradient.
class Optimizer {
 public:
  Optimizer(const Mlp& model, const TrainConfig& cfg);
  void step(Mlp& model, const Gradient& grad, double learning_rate);

 private:
  TrainConfig cfg_;
  Gradient first_;
  Gradient second_;
  long steps_ = 0;
};

/// Each column shifted to mean 0 and scaled to unit population variance;
/// constant columns are only centered.
Matrix standardize_columns(const Matrix& x);

/// lr at step t of total steps. The cosine form is lr * cos(7 pi t / (16 T)).
double scheduled_lr(const TrainConfig& cfg, long step, long total_steps);

struct TrainReport {
  std::vector<double> train_loss;       // mean labeled loss per epoch
  std::vector<double> validation_loss;  // empty without a validation split
  int best_epoch = -1;
  long steps = 0;
  std::size_t train_points = 0;
  std::size_t validation_points = 0;
};

/// Fresh model from rng, trained with cross-entropy on (x, y).
Mlp train_supervised(Rng rng, const Matrix& x, std::span<const int> y, int num_classes,
                     const ModelConfig& model, const TrainConfig& cfg,
                     TrainReport* report = nullptr);

namespace detail {

/// Extra loss evaluated once per optimizer step; adds its gradient into grad
/// and returns its loss contribution.
using ExtraTerm = std::function<double(const Mlp& model, Gradient& grad)>;

/// The step loop shared by supervised and semi-supervised training.
Mlp run_training(Rng rng, const Matrix& x, std::span<const int> y, int num_classes,
                 const ModelConfig& model, const TrainConfig& cfg, const ExtraTerm* extra,
                 TrainReport* report);

}  // namespace detail

}  // namespace cereal
