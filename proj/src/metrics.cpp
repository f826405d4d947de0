#include "cereal/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cereal/error.hpp"

namespace cereal {

ContingencyStats::ContingencyStats(std::size_t test_clusters, std::size_t ref_clusters)
    : rows_(test_clusters),
      cols_(ref_clusters),
      counts_(test_clusters * ref_clusters, 0),
      row_sums_(test_clusters, 0),
      col_sums_(ref_clusters, 0) {}

ContingencyStats::ContingencyStats(const std::vector<std::vector<long long>>& counts)
    : ContingencyStats(counts.size(), counts.empty() ? 0 : counts.front().size()) {
  for (std::size_t c = 0; c < rows_; ++c) {
    require(counts[c].size() == cols_, "contingency rows must have equal length");
    for (std::size_t y = 0; y < cols_; ++y) {
      require(counts[c][y] >= 0, "contingency counts must be nonnegative");
      if (counts[c][y] > 0) add(c, y, counts[c][y]);
    }
  }
}

void ContingencyStats::add(std::size_t c, std::size_t y, long long count) {
  require(c < rows_ && y < cols_, "contingency index out of range");
  counts_[c * cols_ + y] += count;
  row_sums_[c] += count;
  col_sums_[y] += count;
  total_ += count;
}

ContingencyStats ContingencyStats::transposed() const {
  ContingencyStats t(cols_, rows_);
  for (std::size_t c = 0; c < rows_; ++c)
    for (std::size_t y = 0; y < cols_; ++y)
      if (count(c, y) > 0) t.add(y, c, count(c, y));
  return t;
}

bool ContingencyStats::is_perfect_matching() const {
  for (std::size_t c = 0; c < rows_; ++c)
    if (row_sums_[c] > 0) {
      int nonzero = 0;
      for (std::size_t y = 0; y < cols_; ++y) nonzero += count(c, y) > 0;
      if (nonzero != 1) return false;
    }
  for (std::size_t y = 0; y < cols_; ++y)
    if (col_sums_[y] > 0) {
      int nonzero = 0;
      for (std::size_t c = 0; c < rows_; ++c) nonzero += count(c, y) > 0;
      if (nonzero != 1) return false;
    }
  return true;
}

double ContingencyStats::pointwise_information(std::size_t c, std::size_t y) const {
  const long long n = count(c, y);
  if (n == 0 || total_ == 0) return 0.0;
  const double N = static_cast<double>(total_);
  const double p = static_cast<double>(n) / N;
  return p * std::log(static_cast<double>(n) * N /
                      (static_cast<double>(row_sums_[c]) * static_cast<double>(col_sums_[y])));
}

namespace {

double entropy_of_counts(std::span<const long long> counts, long long total) {
  if (total == 0) return 0.0;
  const double N = static_cast<double>(total);
  double h = 0.0;
  for (long long a : counts)
    if (a > 0) {
      const double p = static_cast<double>(a) / N;
      h -= p * std::log(p);
    }
  return h;
}

}  // namespace

double ContingencyStats::test_entropy() const { return entropy_of_counts(row_sums_, total_); }
double ContingencyStats::reference_entropy() const { return entropy_of_counts(col_sums_, total_); }

double ContingencyStats::mutual_information() const {
  double mi = 0.0;
  for (std::size_t c = 0; c < rows_; ++c)
    for (std::size_t y = 0; y < cols_; ++y) mi += pointwise_information(c, y);
  return mi;
}

ContingencyStats build_contingency(const HardClustering& test,
                                   const std::map<std::size_t, int>& labels, int num_classes) {
  require(!labels.empty(), "build_contingency: empty label map");
  require(num_classes >= 1, "build_contingency: K_ref must be positive");
  ContingencyStats stats(static_cast<std::size_t>(test.num_clusters),
                         static_cast<std::size_t>(num_classes));
  for (const auto& [i, y] : labels) {
    if (i >= test.size())
      fail(ErrorKind::invalid_argument,
           "build_contingency: point " + std::to_string(i) + " not in clustering");
    require(y >= 0 && y < num_classes, "build_contingency: label out of range");
    stats.add(static_cast<std::size_t>(test.assignment[i]), static_cast<std::size_t>(y));
  }
  return stats;
}

double entropy(std::span<const double> marginal) {
  double h = 0.0;
  for (double p : marginal) {
    require(p >= 0.0, "entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double nmi(const ContingencyStats& stats) {
  require(stats.total() >= 1, "nmi: empty contingency");
  const double hc = stats.test_entropy();
  const double hy = stats.reference_entropy();
  if (hc + hy == 0.0) return 1.0;
  if (hc == 0.0 || hy == 0.0) return 0.0;
  if (stats.is_perfect_matching()) return 1.0;
  const double value = stats.mutual_information() / ((hc + hy) / 2.0);
  return std::clamp(value, 0.0, 1.0);
}

double expected_mutual_information(const ContingencyStats& stats) {
  const long long N = stats.total();
  if (N == 0) return 0.0;
  const double Nd = static_cast<double>(N);
  const double lgN = std::lgamma(Nd + 1.0);
  double emi = 0.0;
  for (std::size_t c = 0; c < stats.rows(); ++c) {
    const long long a = stats.row_sum(c);
    if (a == 0) continue;
    for (std::size_t y = 0; y < stats.cols(); ++y) {
      const long long b = stats.col_sum(y);
      if (b == 0) continue;
      const double ad = static_cast<double>(a), bd = static_cast<double>(b);
      // log of a! b! (N-a)! (N-b)! / N!, shared by every n below.
      const double lg_fixed = std::lgamma(ad + 1.0) + std::lgamma(bd + 1.0) +
                              std::lgamma(Nd - ad + 1.0) + std::lgamma(Nd - bd + 1.0) - lgN;
      const long long lo = std::max<long long>(1, a + b - N);
      const long long hi = std::min(a, b);
      for (long long n = lo; n <= hi; ++n) {
        const double nd = static_cast<double>(n);
        const double log_prob = lg_fixed - std::lgamma(nd + 1.0) - std::lgamma(ad - nd + 1.0) -
                                std::lgamma(bd - nd + 1.0) -
                                std::lgamma(Nd - ad - bd + nd + 1.0);
        emi += nd / Nd * std::log(Nd * nd / (ad * bd)) * std::exp(log_prob);
      }
    }
  }
  return emi;
}

double ami(const ContingencyStats& stats) {
  require(stats.total() >= 1, "ami: empty contingency");
  const double hc = stats.test_entropy();
  const double hy = stats.reference_entropy();
  const double emi = expected_mutual_information(stats);
  const double denom = (hc + hy) / 2.0 - emi;
  if (std::abs(denom) <= kDegenerateTolerance) return 0.0;
  if (stats.is_perfect_matching()) return 1.0;
  return std::min(1.0, (stats.mutual_information() - emi) / denom);
}

double ari(const ContingencyStats& stats) {
  if (stats.total() < 2) fail(ErrorKind::invalid_argument, "ari: needs at least 2 labeled points");
  auto comb2 = [](long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };
  double index = 0.0;
  for (std::size_t c = 0; c < stats.rows(); ++c)
    for (std::size_t y = 0; y < stats.cols(); ++y) index += comb2(stats.count(c, y));
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t c = 0; c < stats.rows(); ++c) sum_a += comb2(stats.row_sum(c));
  for (std::size_t y = 0; y < stats.cols(); ++y) sum_b += comb2(stats.col_sum(y));
  const double expected = sum_a * sum_b / comb2(stats.total());
  const double max_index = 0.5 * (sum_a + sum_b);
  // Vanishes only when both partitions are all-singletons or one block.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Metric parse_metric(const std::string& name) {
  if (name == "nmi") return Metric::nmi;
  if (name == "ami") return Metric::ami;
  if (name == "ari") return Metric::ari;
  fail(ErrorKind::invalid_argument, "unknown metric '" + name + "' (nmi|ami|ari)");
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::nmi: return "nmi";
    case Metric::ami: return "ami";
    case Metric::ari: return "ari";
  }
  return "?";
}

double evaluate_metric(Metric m, const ContingencyStats& stats) {
  switch (m) {
    case Metric::nmi: return nmi(stats);
    case Metric::ami: return ami(stats);
    case Metric::ari: return ari(stats);
  }
  return 0.0;
}

double estimate_metric(Metric m, const Clustering& test, const LabelStore& store) {
  const auto labels = store.merged();
  if (labels.empty()) fail(ErrorKind::invalid_argument, "estimate_metric: no labels");
  return evaluate_metric(m, build_contingency(harden(test), labels, store.num_classes()));
}

double exact_metric(Metric m, const Clustering& test, std::span<const int> reference,
                    int num_classes) {
  require(reference.size() == clustering_size(test), "exact_metric: size mismatch");
  std::map<std::size_t, int> labels;
  for (std::size_t i = 0; i < reference.size(); ++i) labels.emplace_hint(labels.end(), i, reference[i]);
  return evaluate_metric(m, build_contingency(harden(test), labels, num_classes));
}

void ErrorCurve::add(long labels_used, double estimate) {
  require(points.empty() || labels_used > points.back().labels_used,
          "error curve budgets must be strictly increasing");
  points.push_back({labels_used, estimate});
}

double aec(const ErrorCurve& curve) {
  require(curve.points.size() >= 2, "aec: need at least 2 curve points");
  require(curve.true_value.has_value(), "aec: curve has no true value");
  const double truth = *curve.true_value;
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& p0 = curve.points[i - 1];
    const auto& p1 = curve.points[i];
    const double width = static_cast<double>(p1.labels_used - p0.labels_used);
    area += width * (std::abs(p0.estimate - truth) + std::abs(p1.estimate - truth)) / 2.0;
  }
  return area;
}

}  // namespace cereal
