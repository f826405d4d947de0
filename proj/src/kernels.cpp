#include "cereal/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

#include "cereal/error.hpp"

namespace cereal::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void check_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  require(a.cols() == b.rows(), "gemm_nn: inner dimensions differ");
  if (accumulate)
    require(c.rows() == a.rows() && c.cols() == b.cols(), "gemm_nn: output shape");
  else if (c.rows() != a.rows() || c.cols() != b.cols())
    c = Matrix(a.rows(), b.cols());
}

void check_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  require(a.rows() == b.rows(), "gemm_tn: row counts differ");
  if (accumulate)
    require(c.rows() == a.cols() && c.cols() == b.cols(), "gemm_tn: output shape");
  else if (c.rows() != a.cols() || c.cols() != b.cols())
    c = Matrix(a.cols(), b.cols());
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i, bool accumulate) {
  const std::size_t n = b.cols();
  double* __restrict crow = c.data() + i * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  const double* arow = a.data() + i * a.cols();
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = arow[k];
    if (aik == 0.0) continue;
    const double* __restrict brow = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t k, bool accumulate) {
  const std::size_t n = b.cols();
  double* __restrict crow = c.data() + k * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double aik = a.data()[i * a.cols() + k];
    if (aik == 0.0) continue;
    const double* __restrict brow = b.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
  }
}

inline void nearest_one(const Matrix& points, const Matrix& centers, std::size_t i,
                        std::span<int> assignment, std::span<double> dist2) {
  const auto p = points.row(i);
  double best = std::numeric_limits<double>::infinity();
  int arg = 0;
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const auto q = centers.row(c);
    double d = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double t = p[j] - q[j];
      d += t * t;
    }
    if (d < best) {
      best = d;
      arg = static_cast<int>(c);
    }
  }
  assignment[i] = arg;
  dist2[i] = best;
}

inline void softmax_one(Matrix& m, std::size_t r) {
  auto row = m.row(r);
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (auto& x : row) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (auto& x : row) x /= sum;
}

void check_nearest(const Matrix& points, const Matrix& centers, std::span<int> assignment,
                   std::span<double> dist2) {
  require(points.cols() == centers.cols(), "nearest_center: dimension mismatch");
  require(centers.rows() >= 1, "nearest_center: no centers");
  require(assignment.size() == points.rows() && dist2.size() == points.rows(),
          "nearest_center: output size");
}

}  // namespace

namespace serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nn(a, b, c, accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, c, i, accumulate);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_tn(a, b, c, accumulate);
  for (std::size_t k = 0; k < a.cols(); ++k) tn_row(a, b, c, k, accumulate);
}

void nearest_center(const Matrix& points, const Matrix& centers, std::span<int> assignment,
                    std::span<double> dist2) {
  check_nearest(points, centers, assignment, dist2);
  for (std::size_t i = 0; i < points.rows(); ++i)
    nearest_one(points, centers, i, assignment, dist2);
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_one(m, r);
}

}  // namespace serial

namespace parallel {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nn(a, b, c, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    nn_row(a, b, c, static_cast<std::size_t>(i), accumulate);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_tn(a, b, c, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t k = 0; k < rows; ++k)
    tn_row(a, b, c, static_cast<std::size_t>(k), accumulate);
}

void nearest_center(const Matrix& points, const Matrix& centers, std::span<int> assignment,
                    std::span<double> dist2) {
  check_nearest(points, centers, assignment, dist2);
  const auto n = static_cast<std::ptrdiff_t>(points.rows());
  const bool big = points.rows() * centers.rows() * points.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    nearest_one(points, centers, static_cast<std::size_t>(i), assignment, dist2);
}

void softmax_rows(Matrix& m) {
  const auto n = static_cast<std::ptrdiff_t>(m.rows());
  const bool big = m.rows() * m.cols() >= kParallelWork / 8;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r) softmax_one(m, static_cast<std::size_t>(r));
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace cereal::kernels
