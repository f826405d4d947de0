#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cereal/matrix.hpp"

// Dense inner loops used by training, scoring and clustering. Each kernel has
// a serial reference and an OpenMP version; the parallel version splits work
// over output rows only, so both produce bit-identical results.
namespace cereal::kernels {

namespace serial {

/// c (+)= a * b, with a: m x k, b: k x n, c: m x n.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c (+)= a^T * b, with a: m x k, b: m x n, c: k x n.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// Nearest center per point by squared Euclidean distance, lowest index on ties.
void nearest_center(const Matrix& points, const Matrix& centers, std::span<int> assignment,
                    std::span<double> dist2);
/// Row-wise numerically stable softmax in place.
void softmax_rows(Matrix& m);

}  // namespace serial

namespace parallel {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void nearest_center(const Matrix& points, const Matrix& centers, std::span<int> assignment,
                    std::span<double> dist2);
void softmax_rows(Matrix& m);

}  // namespace parallel

using parallel::gemm_nn;
using parallel::gemm_tn;
using parallel::nearest_center;
using parallel::softmax_rows;

/// Threads OpenMP would use for a top-level parallel region.
int max_threads();

}  // namespace cereal::kernels
