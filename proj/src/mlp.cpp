#include "cereal/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "cereal/error.hpp"
#include "cereal/kernels.hpp"

namespace cereal {

Mlp::Mlp(std::vector<std::size_t> widths, double dropout_rate) : widths_(std::move(widths)) {
  require(widths_.size() >= 2, "mlp needs at least input and output widths");
  for (auto w : widths_) require(w >= 1, "mlp widths must be positive");
  set_dropout_rate(dropout_rate);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
    layers_.push_back({Matrix(widths_[l], widths_[l + 1]), std::vector<double>(widths_[l + 1], 0.0)});
}

void Mlp::set_dropout_rate(double rate) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  dropout_ = rate;
}

Mlp Mlp::he_uniform(std::vector<std::size_t> widths, double dropout_rate, Rng& rng) {
  Mlp m(std::move(widths), dropout_rate);
  for (auto& layer : m.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.rows()));
    for (auto& w : layer.weight.values()) w = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return m;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_)
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", l.weight.values()},
                      {"bias", l.bias}});
  return {{"widths", widths_}, {"dropout", dropout_}, {"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  try {
    Mlp m(j.at("widths").get<std::vector<std::size_t>>(), j.at("dropout").get<double>());
    const auto& layers = j.at("layers");
    require(layers.size() == m.layers_.size(), "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& dst = m.layers_[l];
      require(layers[l].at("rows").get<std::size_t>() == dst.weight.rows() &&
                  layers[l].at("cols").get<std::size_t>() == dst.weight.cols(),
              "checkpoint layer shape mismatch");
      auto w = layers[l].at("weight").get<std::vector<double>>();
      auto b = layers[l].at("bias").get<std::vector<double>>();
      require(w.size() == dst.weight.values().size() && b.size() == dst.bias.size(),
              "checkpoint parameter count mismatch");
      dst.weight.values() = std::move(w);
      dst.bias = std::move(b);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("bad model checkpoint: ") + e.what());
  }
}

std::vector<std::size_t> mlp_widths(std::size_t input, std::size_t hidden, std::size_t num_layers,
                                    std::size_t classes) {
  require(num_layers >= 1, "mlp needs at least one layer");
  std::vector<std::size_t> w{input};
  for (std::size_t l = 1; l < num_layers; ++l) w.push_back(hidden);
  w.push_back(classes);
  return w;
}

namespace {

void add_bias(Matrix& z, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

}  // namespace

ForwardPass forward_pass(const Mlp& model, const Matrix& batch, Mode mode, Rng* rng) {
  if (batch.cols() != model.input_dim())
    fail(ErrorKind::invalid_argument, "forward: batch width " + std::to_string(batch.cols()) +
                                          " does not match model input " +
                                          std::to_string(model.input_dim()));
  require(mode == Mode::eval || rng != nullptr, "forward: train mode needs an rng");
  const auto& layers = model.layers();
  const double rate = model.dropout_rate();
  const double keep_scale = 1.0 / (1.0 - rate);

  ForwardPass pass;
  pass.inputs.reserve(layers.size());
  pass.inputs.push_back(batch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z;
    kernels::gemm_nn(pass.inputs.back(), layers[l].weight, z);
    add_bias(z, layers[l].bias);
    if (l + 1 == layers.size()) {
      pass.logits = std::move(z);
      break;
    }
    Matrix h = z;
    for (auto& x : h.values()) x = x > 0.0 ? x : 0.0;
    if (mode == Mode::train) {
      const std::uint64_t key = rng->next_u64();
      Matrix mask(h.rows(), h.cols(), 1.0);
      if (rate > 0.0) {
        auto& mv = mask.values();
        for (std::size_t i = 0; i < mv.size(); ++i)
          mv[i] = Rng::to_unit(Rng::at(key, i)) < rate ? 0.0 : keep_scale;
        auto& hv = h.values();
        for (std::size_t i = 0; i < hv.size(); ++i) hv[i] *= mv[i];
      }
      pass.masks.push_back(std::move(mask));
    }
    pass.pre.push_back(std::move(z));
    pass.inputs.push_back(std::move(h));
  }
  pass.probs = pass.logits;
  kernels::softmax_rows(pass.probs);
  return pass;
}

Matrix forward(const Mlp& model, const Matrix& batch, Mode mode, Rng* rng) {
  return std::move(forward_pass(model, batch, mode, rng).probs);
}

Gradient zero_gradient(const Mlp& model) {
  Gradient g;
  for (const auto& l : model.layers())
    g.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
  return g;
}

Gradient backward(const Mlp& model, const ForwardPass& pass, const Matrix& dlogits) {
  const auto& layers = model.layers();
  require(dlogits.rows() == pass.logits.rows() && dlogits.cols() == pass.logits.cols(),
          "backward: gradient shape does not match logits");
  Gradient grad(layers.size());
  Matrix delta = dlogits;
  for (std::size_t l = layers.size(); l-- > 0;) {
    kernels::gemm_tn(pass.inputs[l], delta, grad[l].weight);
    grad[l].bias.assign(delta.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const auto row = delta.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) grad[l].bias[j] += row[j];
    }
    if (l == 0) break;
    Matrix dx;
    kernels::gemm_nn(delta, layers[l].weight.transposed(), dx);
    auto& dv = dx.values();
    const auto& zv = pass.pre[l - 1].values();
    if (!pass.masks.empty()) {
      const auto& mv = pass.masks[l - 1].values();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = zv[i] > 0.0 ? dv[i] * mv[i] : 0.0;
    } else {
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = zv[i] > 0.0 ? dv[i] : 0.0;
    }
    delta = std::move(dx);
  }
  return grad;
}

void accumulate(Gradient& acc, const Gradient& g, double scale) {
  require(acc.size() == g.size(), "accumulate: layer count mismatch");
  for (std::size_t l = 0; l < g.size(); ++l) {
    auto& aw = acc[l].weight.values();
    const auto& gw = g[l].weight.values();
    for (std::size_t i = 0; i < aw.size(); ++i) aw[i] += scale * gw[i];
    for (std::size_t i = 0; i < acc[l].bias.size(); ++i) acc[l].bias[i] += scale * g[l].bias[i];
  }
}

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  require(labels.size() == probs.rows() && !labels.empty(), "cross_entropy: label count");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    total -= std::log(std::max(probs(r, static_cast<std::size_t>(labels[r])), 1e-12));
  return total / static_cast<double>(labels.size());
}

double cross_entropy_logits_row(std::span<const double> logits, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), "cross_entropy: label out of range");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return top + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

double cross_entropy_logits(const Matrix& logits, std::span<const int> labels) {
  require(labels.size() == logits.rows() && !labels.empty(), "cross_entropy: label count");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) total += cross_entropy_logits_row(logits.row(r), labels[r]);
  return total / static_cast<double>(labels.size());
}

Matrix cross_entropy_grad(const Matrix& probs, std::span<const int> labels, double scale) {
  require(labels.size() == probs.rows(), "cross_entropy_grad: label count");
  Matrix g = probs;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    g(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (auto& x : g.row(r)) x *= scale;
  }
  return g;
}

std::vector<Matrix> mc_dropout_predict(const Mlp& model, const Matrix& batch, int passes, Rng& rng) {
  require(passes >= 1, "mc_dropout_predict: passes must be >= 1");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(passes));
  for (int p = 0; p < passes; ++p) out.push_back(forward(model, batch, Mode::train, &rng));
  return out;
}

Matrix mc_dropout_predict(const Mlp& model, std::span<const double> x, int passes, Rng& rng) {
  Matrix one(1, x.size());
  std::copy(x.begin(), x.end(), one.data());
  auto all = mc_dropout_predict(model, one, passes, rng);
  Matrix out(static_cast<std::size_t>(passes), model.output_dim());
  for (std::size_t p = 0; p < all.size(); ++p)
    std::copy(all[p].data(), all[p].data() + model.output_dim(), out.row(p).data());
  return out;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace cereal
