#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cereal/types.hpp"

namespace cereal {

/// One record per line: {"id": str, "vector": [num...], "payload": str?}.
EmbeddingDataset load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingDataset& data, const std::filesystem::path& path);

/// Either every line is {"id", "cluster": int} or every line is
/// {"id", "distribution": [num...]}. Ids must cover the dataset exactly.
Clustering load_clustering(const std::filesystem::path& path, const EmbeddingDataset& data);
void save_clustering(const Clustering& c, const EmbeddingDataset& data,
                     const std::filesystem::path& path);

/// Labels as {"id", "label": int, "source": "human"|"pseudo"}. When
/// num_classes is absent it is inferred as 1 + the largest label.
LabelStore load_labels(const std::filesystem::path& path, const EmbeddingDataset& data,
                       std::optional<int> num_classes = std::nullopt);
void save_labels(const LabelStore& store, const EmbeddingDataset& data,
                 const std::filesystem::path& path);

/// Reads a whole label file as a dense vector (every dataset id required).
std::vector<int> load_full_labels(const std::filesystem::path& path, const EmbeddingDataset& data);

/// Loads a clustering without a dataset: the ids in file order define the
/// universe. Returns the ids alongside.
std::pair<std::vector<std::string>, Clustering> load_clustering_standalone(
    const std::filesystem::path& path);

}  // namespace cereal
