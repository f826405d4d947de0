#include "cereal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "cereal/error.hpp"

namespace cereal {

Acquisition parse_acquisition(const std::string& name) {
  if (name == "random") return Acquisition::random;
  if (name == "max_entropy") return Acquisition::max_entropy;
  if (name == "bald") return Acquisition::bald;
  if (name == "cross_entropy") return Acquisition::cross_entropy;
  if (name == "soft_nmi") return Acquisition::soft_nmi;
  if (name == "hard_nmi") return Acquisition::hard_nmi;
  fail(ErrorKind::invalid_argument,
       "unknown acquisition '" + name +
           "' (random|max_entropy|bald|cross_entropy|soft_nmi|hard_nmi)");
}

std::string acquisition_name(Acquisition a) {
  switch (a) {
    case Acquisition::random: return "random";
    case Acquisition::max_entropy: return "max_entropy";
    case Acquisition::bald: return "bald";
    case Acquisition::cross_entropy: return "cross_entropy";
    case Acquisition::soft_nmi: return "soft_nmi";
    case Acquisition::hard_nmi: return "hard_nmi";
  }
  return "?";
}

bool needs_surrogate(Acquisition a) { return a != Acquisition::random; }

NmiField::NmiField(const ContingencyStats& labeled)
    : weights_(labeled.rows(), labeled.cols()) {
  if (labeled.total() == 0) return;
  const double norm = (labeled.test_entropy() + labeled.reference_entropy()) / 2.0;
  if (norm == 0.0) return;
  for (std::size_t c = 0; c < labeled.rows(); ++c)
    for (std::size_t y = 0; y < labeled.cols(); ++y)
      weights_(c, y) = labeled.pointwise_information(c, y) / norm;
}

namespace {

double plogp_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(std::max(x, kLogFloor));
  return h;
}

}  // namespace

double score_max_entropy(std::span<const double> surrogate) { return plogp_entropy(surrogate); }

double score_bald(const Matrix& passes) {
  require(passes.rows() >= 1, "score_bald: needs at least one pass");
  std::vector<double> mean(passes.cols(), 0.0);
  double mean_entropy = 0.0;
  for (std::size_t p = 0; p < passes.rows(); ++p) {
    const auto row = passes.row(p);
    for (std::size_t k = 0; k < row.size(); ++k) mean[k] += row[k];
    mean_entropy += plogp_entropy(row);
  }
  const double inv = 1.0 / static_cast<double>(passes.rows());
  for (auto& m : mean) m *= inv;
  return std::max(0.0, plogp_entropy(mean) - mean_entropy * inv);
}

double score_cross_entropy(std::span<const double> test_dist, std::span<const double> surrogate) {
  double ce = 0.0;
  for (std::size_t k = 0; k < test_dist.size(); ++k) {
    if (test_dist[k] == 0.0) continue;
    const double q = k < surrogate.size() ? surrogate[k] : 0.0;
    ce -= test_dist[k] * std::log(std::max(q, kLogFloor));
  }
  return ce;
}

double score_soft_nmi(const NmiField& field, std::span<const double> test_dist,
                      std::span<const double> surrogate) {
  require(test_dist.size() == field.test_clusters() && surrogate.size() == field.ref_clusters(),
          "score_soft_nmi: distribution widths do not match the labeled contingency");
  double s = 0.0;
  for (std::size_t c = 0; c < test_dist.size(); ++c) {
    if (test_dist[c] == 0.0) continue;
    for (std::size_t y = 0; y < surrogate.size(); ++y)
      s += test_dist[c] * surrogate[y] * field.weight(c, y);
  }
  return 1.0 - s;
}

double score_hard_nmi(const NmiField& field, int test_cluster, std::span<const double> surrogate) {
  require(test_cluster >= 0 && static_cast<std::size_t>(test_cluster) < field.test_clusters() &&
              surrogate.size() == field.ref_clusters(),
          "score_hard_nmi: cluster or width does not match the labeled contingency");
  double s = 0.0;
  for (std::size_t y = 0; y < surrogate.size(); ++y)
    s += surrogate[y] * field.weight(static_cast<std::size_t>(test_cluster), y);
  return 1.0 - s;
}

std::vector<double> score_candidates(Acquisition kind, const AcquisitionContext& ctx, Rng& rng,
                                     Exec exec) {
  const std::size_t n = ctx.candidates.size();
  std::vector<double> scores(n, 0.0);
  if (kind == Acquisition::random || n == 0) return scores;
  require(ctx.test != nullptr, "score_candidates: no test clustering");

  Matrix probs = ctx.candidate_probs;
  std::vector<Matrix> passes;
  if (probs.empty() || kind == Acquisition::bald) {
    require(ctx.surrogate != nullptr && ctx.vectors != nullptr,
            "score_candidates: no surrogate model or vectors");
    const Matrix x = ctx.vectors->gather(ctx.candidates);
    if (kind == Acquisition::bald)
      passes = mc_dropout_predict(*ctx.surrogate, x, ctx.bald_passes, rng);
    else
      probs = forward(*ctx.surrogate, x, Mode::eval);
  }

  std::optional<NmiField> field;
  std::optional<HardClustering> hard;
  if (kind == Acquisition::soft_nmi || kind == Acquisition::hard_nmi)
    field.emplace(ctx.labeled_stats);
  if (kind == Acquisition::hard_nmi) hard = harden(*ctx.test);

  auto score_one = [&](std::size_t j) {
    const std::size_t i = ctx.candidates[j];
    switch (kind) {
      case Acquisition::max_entropy: return score_max_entropy(probs.row(j));
      case Acquisition::bald: {
        Matrix m(passes.size(), passes.front().cols());
        for (std::size_t p = 0; p < passes.size(); ++p) {
          const auto src = passes[p].row(j);
          std::copy(src.begin(), src.end(), m.row(p).begin());
        }
        return score_bald(m);
      }
      case Acquisition::cross_entropy:
        return score_cross_entropy(cluster_distribution(*ctx.test, i), probs.row(j));
      case Acquisition::soft_nmi:
        return score_soft_nmi(*field, cluster_distribution(*ctx.test, i), probs.row(j));
      case Acquisition::hard_nmi:
        return score_hard_nmi(*field, hard->assignment[i], probs.row(j));
      case Acquisition::random: break;
    }
    return 0.0;
  };

  if (exec == Exec::serial) {
    for (std::size_t j = 0; j < n; ++j) scores[j] = score_one(j);
  } else {
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n >= 256)
    for (std::ptrdiff_t j = 0; j < count; ++j)
      scores[static_cast<std::size_t>(j)] = score_one(static_cast<std::size_t>(j));
  }
  return scores;
}

std::vector<std::size_t> select(std::span<const double> scores, std::size_t n, Rng& rng) {
  if (n > scores.size())
    fail(ErrorKind::invalid_argument, "select: asked for " + std::to_string(n) + " of " +
                                          std::to_string(scores.size()) + " candidates");
  double lowest = 0.0;
  for (double s : scores) {
    require(std::isfinite(s), "select: non-finite score");
    lowest = std::min(lowest, s);
  }
  std::vector<double> weight(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) weight[i] = scores[i] - lowest + 1e-12;

  std::vector<std::size_t> picked;
  picked.reserve(n);
  std::vector<bool> taken(scores.size(), false);
  for (std::size_t round = 0; round < n; ++round) {
    double mass = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (!taken[i]) mass += weight[i];
    const double target = rng.uniform() * mass;
    double acc = 0.0;
    std::size_t choice = scores.size();
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (taken[i]) continue;
      choice = i;  // falls back to the last untaken entry on rounding
      acc += weight[i];
      if (target < acc) break;
    }
    taken[choice] = true;
    picked.push_back(choice);
  }
  return picked;
}

}  // namespace cereal
