#include "cereal/types.hpp"

#include <algorithm>
#include <cmath>

#include "cereal/error.hpp"

namespace cereal {

EmbeddingDataset::EmbeddingDataset(std::vector<std::string> ids, Matrix vectors,
                                   std::vector<std::optional<std::string>> payloads)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), payloads_(std::move(payloads)) {
  require(ids_.size() >= 2, "dataset needs at least 2 points");
  require(vectors_.rows() == ids_.size(), "dataset: id count does not match vector count");
  require(vectors_.cols() >= 1, "dataset: vector dimension must be at least 1");
  if (payloads_.empty()) payloads_.resize(ids_.size());
  require(payloads_.size() == ids_.size(), "dataset: payload count does not match id count");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    require(!ids_[i].empty(), "dataset: empty id at position " + std::to_string(i));
    if (!index_.emplace(ids_[i], i).second)
      fail(ErrorKind::invalid_argument, "dataset: duplicate id '" + ids_[i] + "'");
  }
}

bool EmbeddingDataset::has_payloads() const noexcept {
  return std::any_of(payloads_.begin(), payloads_.end(),
                     [](const auto& p) { return p.has_value(); });
}

std::optional<std::size_t> EmbeddingDataset::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingDataset::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorKind::not_found, "unknown id '" + id + "'");
  return it->second;
}

HardClustering::HardClustering(std::vector<int> a, int k)
    : assignment(std::move(a)), num_clusters(k) {
  require(num_clusters >= 1, "hard clustering needs K >= 1");
  for (int c : assignment)
    require(c >= 0 && c < num_clusters, "cluster index out of range [0, K)");
}

HardClustering::HardClustering(std::vector<int> a)
    : HardClustering(a, a.empty() ? 1 : 1 + *std::max_element(a.begin(), a.end())) {}

SoftClustering::SoftClustering(Matrix d) : distribution(std::move(d)) {
  require(distribution.cols() >= 1, "soft clustering needs K >= 1");
  for (std::size_t i = 0; i < distribution.rows(); ++i) {
    double sum = 0.0;
    for (double p : distribution.row(i)) {
      require(p >= 0.0 && std::isfinite(p), "soft clustering row has a negative or non-finite entry");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "soft clustering row does not sum to 1");
  }
}

std::size_t clustering_size(const Clustering& c) {
  return std::visit([](const auto& x) { return x.size(); }, c);
}

int clustering_num_clusters(const Clustering& c) {
  if (const auto* h = std::get_if<HardClustering>(&c)) return h->num_clusters;
  return std::get<SoftClustering>(c).num_clusters();
}

HardClustering harden(const Clustering& c) {
  if (const auto* h = std::get_if<HardClustering>(&c)) return *h;
  const auto& s = std::get<SoftClustering>(c);
  std::vector<int> a(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto row = s.distribution.row(i);
    a[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return HardClustering(std::move(a), s.num_clusters());
}

std::vector<double> cluster_distribution(const Clustering& c, std::size_t i) {
  if (const auto* h = std::get_if<HardClustering>(&c)) {
    std::vector<double> row(static_cast<std::size_t>(h->num_clusters), 0.0);
    row[static_cast<std::size_t>(h->assignment.at(i))] = 1.0;
    return row;
  }
  const auto row = std::get<SoftClustering>(c).distribution.row(i);
  return {row.begin(), row.end()};
}

LabelStore::LabelStore(int num_classes) : num_classes_(num_classes) {
  require(num_classes >= 1, "label store needs K_ref >= 1");
}

void LabelStore::check_label(int label) const {
  if (label < 0 || label >= num_classes_)
    fail(ErrorKind::invalid_argument, "label " + std::to_string(label) +
                                          " out of range for K_ref=" +
                                          std::to_string(num_classes_));
}

void LabelStore::add_human(std::size_t i, int label) {
  check_label(label);
  human_[i] = label;
  pseudo_.erase(i);
}

void LabelStore::set_pseudo(std::map<std::size_t, int> labels) {
  for (const auto& [i, y] : labels) {
    check_label(y);
    require(!human_.contains(i), "pseudo label given for a human-labeled point");
  }
  pseudo_ = std::move(labels);
}

std::map<std::size_t, int> LabelStore::merged() const {
  auto out = pseudo_;
  for (const auto& [i, y] : human_) out[i] = y;
  return out;
}

}  // namespace cereal
