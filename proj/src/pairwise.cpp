#include "cereal/pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "cereal/error.hpp"
#include "cereal/training.hpp"

namespace cereal {

using nlohmann::json;

PairAnnotation::PairAnnotation(std::size_t a, std::size_t b, bool same_cluster)
    : i(std::min(a, b)), j(std::max(a, b)), same(same_cluster) {
  require(a != b, "a pair needs two distinct points");
}

PairSampler::PairSampler(std::size_t n, Rng rng)
    : n_(n), total_(n < 2 ? 0 : n * (n - 1) / 2), rng_(rng) {}

std::pair<std::size_t, std::size_t> PairSampler::decode(std::size_t k) const {
  // Row i holds pairs (i, i+1..n-1) and starts at i * (2n - i - 1) / 2.
  auto start = [this](std::size_t i) { return i * (2 * n_ - i - 1) / 2; };
  const double nd = static_cast<double>(n_);
  const double disc = (2.0 * nd - 1.0) * (2.0 * nd - 1.0) - 8.0 * static_cast<double>(k);
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor((2.0 * nd - 1.0 - std::sqrt(std::max(0.0, disc))) / 2.0)));
  while (i > 0 && start(i) > k) --i;
  while (i + 1 < n_ && start(i + 1) <= k) ++i;
  return {i, i + 1 + (k - start(i))};
}

std::vector<std::pair<std::size_t, std::size_t>> PairSampler::next(std::size_t count) {
  if (count > remaining())
    fail(ErrorKind::invalid_argument, "requested " + std::to_string(count) + " pairs but only " +
                                          std::to_string(remaining()) + " remain");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  if (2 * count <= remaining()) {
    while (out.size() < count) {
      const std::size_t k = rng_.below(total_);
      if (used_.insert(k).second) out.push_back(decode(k));
    }
  } else {
    std::vector<std::size_t> unused;
    unused.reserve(remaining());
    for (std::size_t k = 0; k < total_; ++k)
      if (!used_.contains(k)) unused.push_back(k);
    rng_.shuffle(unused.begin(), unused.end());
    for (std::size_t t = 0; t < count; ++t) {
      used_.insert(unused[t]);
      out.push_back(decode(unused[t]));
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t n_pairs,
                                                              Rng& rng) {
  PairSampler sampler(n, rng.fork(0));
  rng.next_u64();
  return sampler.next(n_pairs);
}

std::vector<PairAnnotation> balance_pairs(std::span<const PairAnnotation> pairs, Rng& rng) {
  std::vector<PairAnnotation> pos, neg;
  for (const auto& p : pairs) (p.same ? pos : neg).push_back(p);
  if (pos.empty() || neg.empty())
    fail(ErrorKind::invalid_argument,
         std::string("cannot balance pairs: no ") + (pos.empty() ? "positive" : "negative") +
             " pairs yet, more annotation needed");
  auto& major = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  rng.shuffle(major.begin(), major.end());
  major.resize(keep);
  std::vector<PairAnnotation> out;
  out.reserve(2 * keep);
  out.insert(out.end(), pos.begin(), pos.end());
  out.insert(out.end(), neg.begin(), neg.end());
  rng.shuffle(out.begin(), out.end());
  return out;
}

namespace {

double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_pair_batch(const Matrix& left, const Matrix& right, std::span<const int> same) {
  require(left.rows() == right.rows() && left.cols() == right.cols() &&
              left.rows() == same.size(),
          "l2c: pair batch shapes differ");
}

}  // namespace

double l2c_loss(const Matrix& left, const Matrix& right, std::span<const int> same, double eps) {
  check_pair_batch(left, right, same);
  if (same.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < same.size(); ++r) {
    const double p = std::clamp(inner(left.row(r), right.row(r)), eps, 1.0 - eps);
    total -= same[r] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(same.size());
}

std::pair<Matrix, Matrix> l2c_logit_grad(const Matrix& left, const Matrix& right,
                                         std::span<const int> same, double eps) {
  check_pair_batch(left, right, same);
  const std::size_t m = same.size(), k = left.cols();
  Matrix gl(m, k), gr(m, k);
  for (std::size_t r = 0; r < m; ++r) {
    const auto a = left.row(r), b = right.row(r);
    const double raw = inner(a, b);
    if (raw <= eps || raw >= 1.0 - eps) continue;  // clamped: flat
    const double dp = -(same[r] ? 1.0 / raw : -1.0 / (1.0 - raw)) / static_cast<double>(m);
    // d/dz_a of dp * (a . b) through the softmax: a * (dp*b - dp * (a . b)).
    for (std::size_t c = 0; c < k; ++c) {
      gl(r, c) = a[c] * dp * (b[c] - raw);
      gr(r, c) = b[c] * dp * (a[c] - raw);
    }
  }
  return {std::move(gl), std::move(gr)};
}

Mlp train_l2c(Rng rng, const Matrix& vectors, std::span<const PairAnnotation> pairs, int outputs,
              const PairwiseConfig& cfg) {
  require(outputs >= 1, "train_l2c: outputs must be >= 1");
  Rng init = rng.fork(1);
  Rng order_rng = rng.fork(2);
  Mlp model = Mlp::he_uniform({vectors.cols(), static_cast<std::size_t>(outputs)}, 0.0, init);
  TrainConfig tc;
  tc.optimizer = OptimizerKind::adam;
  tc.learning_rate = cfg.learning_rate;
  tc.weight_decay = cfg.weight_decay;
  Optimizer opt(model, tc);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> li, ri;
      std::vector<int> s;
      for (std::size_t t = start; t < end; ++t) {
        const auto& p = pairs[order[t]];
        li.push_back(p.i);
        ri.push_back(p.j);
        s.push_back(p.same ? 1 : 0);
      }
      const auto lp = forward_pass(model, vectors.gather(li), Mode::eval);
      const auto rp = forward_pass(model, vectors.gather(ri), Mode::eval);
      const auto [gl, gr] = l2c_logit_grad(lp.probs, rp.probs, s);
      Gradient grad = backward(model, lp, gl);
      accumulate(grad, backward(model, rp, gr));
      opt.step(model, grad, cfg.learning_rate);
    }
  }
  return model;
}

double pair_accuracy(const Mlp& model, const Matrix& vectors,
                     std::span<const PairAnnotation> pairs) {
  if (pairs.empty()) return 0.0;
  const auto cls = argmax_rows(forward(model, vectors, Mode::eval));
  std::size_t ok = 0;
  for (const auto& p : pairs) ok += (cls[p.i] == cls[p.j]) == p.same;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

PairwiseResult run_pairwise_pipeline(const EmbeddingDataset& data, const Clustering& test,
                                     PairAnnotator& annotator, const PairwiseConfig& cfg,
                                     std::optional<std::vector<int>> truth, Predictor predictor) {
  cfg.validate();
  require(clustering_size(test) == data.size(), "test clustering size does not match the dataset");
  const int outputs = cfg.num_outputs > 0 ? cfg.num_outputs : cfg.k_ref;
  PairwiseResult result;
  if (truth) {
    require(cfg.k_ref >= 1, "pairwise: truth needs k_ref");
    result.curve.true_value = exact_metric(cfg.metric, test, *truth, cfg.k_ref);
  }
  const Rng base(cfg.seed);
  PairSampler sampler(data.size(), base.fork(1));
  require(cfg.total_pairs <= sampler.total(), "total_pairs exceeds the number of distinct pairs");

  const Matrix features = standardize_columns(data.vectors());
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::optional<Mlp> model;
  const HardClustering hard = harden(test);
  int round = 0;
  while (result.annotations.size() < cfg.total_pairs) {
    const std::size_t want =
        std::min(cfg.pairs_per_round, cfg.total_pairs - result.annotations.size());
    for (const auto& [i, j] : sampler.next(want)) {
      bool same;
      try {
        same = annotator.same_cluster(i, j);
      } catch (const std::exception& e) {
        fail(ErrorKind::io, "pair annotator failed in round " + std::to_string(round) + ": " +
                                e.what());
      }
      result.annotations.emplace_back(i, j, same);
    }
    const long x = static_cast<long>(result.annotations.size());

    Matrix probs;
    if (predictor) {
      probs = predictor(all);
    } else {
      Rng balance_rng = base.fork(2).fork(static_cast<std::uint64_t>(round));
      try {
        const auto balanced = balance_pairs(result.annotations, balance_rng);
        model = train_l2c(base.fork(3).fork(static_cast<std::uint64_t>(round)), features,
                          balanced, outputs, cfg);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::invalid_argument) throw;
        result.warnings.push_back("round " + std::to_string(round) + ": " + e.what() +
                                  (model ? "; reusing previous model" : "; no model yet"));
      }
      if (model) {
        probs = forward(*model, features, Mode::eval);
        result.pair_accuracy.push_back(pair_accuracy(*model, features, result.annotations));
      }
    }
    ++round;
    if (probs.empty()) {
      result.curve.gaps.push_back(x);
      continue;
    }
    require(probs.cols() == static_cast<std::size_t>(outputs), "pairwise: surrogate width mismatch");
    const auto cls = argmax_rows(probs);
    std::map<std::size_t, int> labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto row = probs.row(i);
      if (!cfg.thresholded || *std::max_element(row.begin(), row.end()) > cfg.threshold)
        labels.emplace(i, cls[i]);
    }
    if (labels.empty() || (cfg.metric == Metric::ari && labels.size() < 2)) {
      result.curve.gaps.push_back(x);
      continue;
    }
    result.curve.add(x, evaluate_metric(cfg.metric, build_contingency(hard, labels, outputs)));
  }
  return result;
}

void save_pairs(std::span<const PairAnnotation> pairs, const EmbeddingDataset& data,
                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (const auto& p : pairs)
    out << json{{"i", data.id(p.i)}, {"j", data.id(p.j)}, {"same", p.same}}.dump() << '\n';
}

std::vector<PairAnnotation> load_pairs(const std::filesystem::path& path,
                                       const EmbeddingDataset& data) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<PairAnnotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      const auto a = data.index_of(j.at("i").get<std::string>());
      const auto b = data.index_of(j.at("j").get<std::string>());
      if (a == b) fail(ErrorKind::format, where + ": pair of a point with itself");
      out.emplace_back(a, b, j.at("same").get<bool>());
    } catch (const json::exception& e) {
      fail(ErrorKind::format, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cereal
