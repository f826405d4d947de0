#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cereal/matrix.hpp"

namespace cereal {

/// The point set under evaluation: ids, fixed-dimension vectors and the
/// optional display payload shown to human annotators.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  EmbeddingDataset(std::vector<std::string> ids, Matrix vectors,
                   std::vector<std::optional<std::string>> payloads = {});

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return vectors_.cols(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const Matrix& vectors() const noexcept { return vectors_; }
  const std::optional<std::string>& payload(std::size_t i) const { return payloads_.at(i); }
  bool has_payloads() const noexcept;

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws not_found for an unknown id.
  std::size_t index_of(const std::string& id) const;

 private:
  std::vector<std::string> ids_;
  Matrix vectors_;
  std::vector<std::optional<std::string>> payloads_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Cluster index per point, aligned with dataset order.
struct HardClustering {
  std::vector<int> assignment;
  int num_clusters = 0;

  HardClustering() = default;
  HardClustering(std::vector<int> assignment, int num_clusters);
  /// num_clusters = 1 + max index.
  explicit HardClustering(std::vector<int> assignment);

  std::size_t size() const noexcept { return assignment.size(); }
};

/// Distribution over clusters per point, aligned with dataset order.
struct SoftClustering {
  Matrix distribution;

  SoftClustering() = default;
  explicit SoftClustering(Matrix distribution);

  std::size_t size() const noexcept { return distribution.rows(); }
  int num_clusters() const noexcept { return static_cast<int>(distribution.cols()); }
};

using Clustering = std::variant<HardClustering, SoftClustering>;

std::size_t clustering_size(const Clustering& c);
int clustering_num_clusters(const Clustering& c);
/// Argmax per row, lowest index on ties. Hard clusterings pass through.
HardClustering harden(const Clustering& c);
/// f_c(.|x_i) as a dense row; one-hot for hard clusterings.
std::vector<double> cluster_distribution(const Clustering& c, std::size_t i);

/// Reference labels acquired so far (human) plus surrogate-assigned labels
/// (pseudo) for the remaining points. Keys are dataset positions.
class LabelStore {
 public:
  LabelStore() = default;
  explicit LabelStore(int num_classes);

  int num_classes() const noexcept { return num_classes_; }
  const std::map<std::size_t, int>& human() const noexcept { return human_; }
  const std::map<std::size_t, int>& pseudo() const noexcept { return pseudo_; }

  bool is_human_labeled(std::size_t i) const { return human_.contains(i); }

  /// Records a human label and drops any pseudo label for the same point.
  void add_human(std::size_t i, int label);
  /// Replaces all pseudo labels. Points already human-labeled are rejected.
  void set_pseudo(std::map<std::size_t, int> labels);
  void clear_pseudo() { pseudo_.clear(); }

  /// Human labels overlaid on pseudo labels.
  std::map<std::size_t, int> merged() const;

  friend bool operator==(const LabelStore&, const LabelStore&) = default;

 private:
  void check_label(int label) const;

  int num_classes_ = 0;
  std::map<std::size_t, int> human_;
  std::map<std::size_t, int> pseudo_;
};

}  // namespace cereal
