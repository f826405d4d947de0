#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "cereal/acquisition.hpp"
#include "cereal/fixmatch.hpp"
#include "cereal/metrics.hpp"
#include "cereal/training.hpp"

namespace cereal {

enum class EstimatorMode { labeled_only, cereal };
enum class SurrogateMode { supervised, fixmatch };

EstimatorMode parse_estimator(const std::string& name);
std::string estimator_name(EstimatorMode m);
SurrogateMode parse_surrogate(const std::string& name);
std::string surrogate_name(SurrogateMode m);

/// One active-sampling run.
struct ExperimentConfig {
  std::size_t seed_size = 50;
  std::size_t batch_n = 50;
  std::size_t budget = 1000;
  Acquisition acquisition = Acquisition::random;
  EstimatorMode estimator = EstimatorMode::labeled_only;
  SurrogateMode surrogate = SurrogateMode::supervised;
  bool pseudo_label = false;
  Metric metric = Metric::nmi;
  int k_ref = 0;
  std::uint64_t seed = 0;
  int bald_passes = 10;
  ModelConfig model;
  TrainConfig train;
  FixMatchConfig fixmatch;

  void validate(std::size_t dataset_size) const;
  /// Short label such as "random+fixmatch+pl".
  std::string method_name() const;
};

struct PairwiseConfig {
  std::size_t total_pairs = 10000;
  std::size_t pairs_per_round = 1000;
  /// Output width of the pair-trained classifier; 0 means "use k_ref".
  int num_outputs = 0;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  int epochs = 50;
  bool thresholded = false;
  double threshold = 0.5;
  Metric metric = Metric::nmi;
  int k_ref = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Unknown keys are rejected; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, FixMatchConfig& c);
void to_json(nlohmann::json& j, const FixMatchConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, PairwiseConfig& c);
void to_json(nlohmann::json& j, const PairwiseConfig& c);

/// Parses a JSON file; errors carry the path.
nlohmann::json read_json_file(const std::string& path);

}  // namespace cereal
