#include <benchmark/benchmark.h>

#include <vector>

#include "cereal/acquisition.hpp"
#include "cereal/datagen.hpp"
#include "cereal/kernels.hpp"
#include "cereal/rng.hpp"

namespace {

using namespace cereal;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 128, 1), b = random_matrix(128, 128, 2);
  Matrix c(n, 128);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm_nn(a, b, c);
    else kernels::serial::gemm_nn(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n) * 128 * 128);
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 128, 1), b = random_matrix(n, 128, 2);
  Matrix c(128, 128);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm_tn(a, b, c);
    else kernels::serial::gemm_tn(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_NearestCenter(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix points = random_matrix(n, 16, 3), centers = random_matrix(10, 16, 4);
  std::vector<int> assign(n);
  std::vector<double> dist(n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::nearest_center(points, centers, assign, dist);
    else kernels::serial::nearest_center(points, centers, assign, dist);
    benchmark::DoNotOptimize(assign.data());
  }
}

template <Exec E>
void BM_ScoreSoftNmi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  BlobSpec spec;
  spec.n_points = n;
  const Blobs blobs = make_blobs(spec);
  Rng rng(5);
  const auto km = kmeans(blobs.dataset.vectors(), 8, rng);
  const Clustering test = km.clustering;
  AcquisitionContext ctx;
  ctx.test = &test;
  ctx.vectors = &blobs.dataset.vectors();
  std::map<std::size_t, int> labeled;
  for (std::size_t i = 0; i < 50; ++i) labeled.emplace(i, blobs.labels[i]);
  ctx.labeled_stats = build_contingency(km.clustering, labeled, 8);
  for (std::size_t i = 50; i < n; ++i) ctx.candidates.push_back(i);
  ctx.candidate_probs = Matrix(ctx.candidates.size(), 8);
  Rng prng(6);
  for (std::size_t r = 0; r < ctx.candidate_probs.rows(); ++r) {
    double s = 0.0;
    for (auto& v : ctx.candidate_probs.row(r)) s += (v = prng.uniform() + 1e-3);
    for (auto& v : ctx.candidate_probs.row(r)) v /= s;
  }
  for (auto _ : state) {
    Rng srng(7);
    auto scores = score_candidates(Acquisition::soft_nmi, ctx, srng, E);
    benchmark::DoNotOptimize(scores.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Arg(256)->Arg(2048);
BENCHMARK(BM_GemmNN<true>)->Arg(256)->Arg(2048);
BENCHMARK(BM_GemmTN<false>)->Arg(256)->Arg(2048);
BENCHMARK(BM_GemmTN<true>)->Arg(256)->Arg(2048);
BENCHMARK(BM_NearestCenter<false>)->Arg(2000)->Arg(20000);
BENCHMARK(BM_NearestCenter<true>)->Arg(2000)->Arg(20000);
BENCHMARK(BM_ScoreSoftNmi<Exec::serial>)->Arg(2000);
BENCHMARK(BM_ScoreSoftNmi<Exec::parallel>)->Arg(2000);

BENCHMARK_MAIN();
