#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

#include "cereal/matrix.hpp"
#include "cereal/rng.hpp"

namespace cereal {

/// Dense layer computing x * weight + bias; weight is (in x out).
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feed-forward classifier: dense layers with ReLU and inverted dropout after
/// every hidden layer, softmax head. widths = {input, hidden..., classes}.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  Mlp(std::vector<std::size_t> widths, double dropout_rate);

  /// Uniform He initialisation (bound sqrt(6 / fan_in)), zero biases.
  static Mlp he_uniform(std::vector<std::size_t> widths, double dropout_rate, Rng& rng);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const noexcept { return widths_.front(); }
  std::size_t output_dim() const noexcept { return widths_.back(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  double dropout_rate() const noexcept { return dropout_; }
  void set_dropout_rate(double rate);

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<std::size_t> widths_;
  double dropout_ = 0.0;
  std::vector<DenseLayer> layers_;
};

/// {input, hidden x (num_layers - 1), classes}.
std::vector<std::size_t> mlp_widths(std::size_t input, std::size_t hidden, std::size_t num_layers,
                                    std::size_t classes);

enum class Mode { train, eval };

/// Activations kept for the backward pass.
struct ForwardPass {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // hidden pre-activations
  std::vector<Matrix> masks;   // dropout scales per hidden layer (train mode only)
  Matrix logits;
  Matrix probs;
};

/// Train mode draws one mask key per hidden layer from rng; mask entries are
/// random-access functions of that key, so row order never matters.
ForwardPass forward_pass(const Mlp& model, const Matrix& batch, Mode mode, Rng* rng = nullptr);
/// Row-stochastic class probabilities.
Matrix forward(const Mlp& model, const Matrix& batch, Mode mode, Rng* rng = nullptr);

using Gradient = std::vector<DenseLayer>;

Gradient zero_gradient(const Mlp& model);
/// Parameter gradient given dLoss/dlogits.
Gradient backward(const Mlp& model, const ForwardPass& pass, const Matrix& dlogits);
/// acc += scale * g
void accumulate(Gradient& acc, const Gradient& g, double scale = 1.0);

/// Mean cross-entropy of probs against integer labels (probs clamped at 1e-12).
double cross_entropy(const Matrix& probs, std::span<const int> labels);
/// Mean -log softmax(logits)[label] via log-sum-exp; no clamping, so this is
/// the loss whose logit gradient cross_entropy_grad returns.
double cross_entropy_logits(const Matrix& logits, std::span<const int> labels);
/// -log softmax(logits)[label] for one row.
double cross_entropy_logits_row(std::span<const double> logits, int label);
/// scale * (probs - onehot(labels)); the logits-gradient of scale * sum CE.
Matrix cross_entropy_grad(const Matrix& probs, std::span<const int> labels, double scale);

/// passes stochastic train-mode forwards over the same batch.
std::vector<Matrix> mc_dropout_predict(const Mlp& model, const Matrix& batch, int passes, Rng& rng);
/// Single-point form: passes x classes.
Matrix mc_dropout_predict(const Mlp& model, std::span<const double> x, int passes, Rng& rng);

/// Argmax per row, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& probs);

}  // namespace cereal
