#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cereal/types.hpp"

namespace cereal {

/// Joint counts of (test cluster c, reference label y) with their marginals.
class ContingencyStats {
 public:
  ContingencyStats() = default;
  ContingencyStats(std::size_t test_clusters, std::size_t ref_clusters);
  explicit ContingencyStats(const std::vector<std::vector<long long>>& counts);

  void add(std::size_t c, std::size_t y, long long count = 1);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  long long count(std::size_t c, std::size_t y) const { return counts_[c * cols_ + y]; }
  long long row_sum(std::size_t c) const { return row_sums_[c]; }
  long long col_sum(std::size_t y) const { return col_sums_[y]; }
  long long total() const noexcept { return total_; }

  ContingencyStats transposed() const;
  /// True when every occupied row and column holds a single nonzero cell,
  /// i.e. the two partitions agree up to relabeling.
  bool is_perfect_matching() const;

  /// I_CY[c; y] = p(c,y) log(p(c,y) / (p(c) p(y))); zero for empty cells.
  double pointwise_information(std::size_t c, std::size_t y) const;
  double test_entropy() const;       // H_C
  double reference_entropy() const;  // H_Y
  double mutual_information() const;

  friend bool operator==(const ContingencyStats&, const ContingencyStats&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<long long> counts_;
  std::vector<long long> row_sums_;
  std::vector<long long> col_sums_;
  long long total_ = 0;
};

/// Counts over the labeled points only. Labels are keyed by dataset position.
ContingencyStats build_contingency(const HardClustering& test,
                                   const std::map<std::size_t, int>& labels, int num_classes);

/// Shannon entropy in nats; 0 log 0 = 0.
double entropy(std::span<const double> marginal);

/// Mutual information over the arithmetic mean of the two entropies.
/// Both entropies zero gives 1; exactly one zero gives 0.
double nmi(const ContingencyStats& stats);
/// Expected mutual information under the hypergeometric (fixed marginals) null.
double expected_mutual_information(const ContingencyStats& stats);
/// A denominator at most this far from zero counts as zero.
inline constexpr double kDegenerateTolerance = 1e-12;

/// (I - E[I]) / (mean(H_C, H_Y) - E[I]); 0 when the denominator vanishes.
double ami(const ContingencyStats& stats);
/// Hubert-Arabie adjusted Rand index. Requires N >= 2.
double ari(const ContingencyStats& stats);

enum class Metric { nmi, ami, ari };

Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);
double evaluate_metric(Metric m, const ContingencyStats& stats);

/// Metric over human labels merged with pseudo labels. Soft test clusterings
/// are hardened by argmax first.
double estimate_metric(Metric m, const Clustering& test, const LabelStore& store);
/// Metric against a dense reference labeling.
double exact_metric(Metric m, const Clustering& test, std::span<const int> reference,
                    int num_classes);

/// |estimate - truth| against labeling effort.
struct ErrorCurve {
  struct Point {
    long labels_used = 0;
    double estimate = 0.0;
  };
  std::vector<Point> points;
  std::optional<double> true_value;
  /// Budgets at which no estimate could be formed.
  std::vector<long> gaps;

  void add(long labels_used, double estimate);
};

/// Trapezoidal area under |estimate - true_value| over labels_used.
double aec(const ErrorCurve& curve);

}  // namespace cereal
