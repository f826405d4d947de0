#include "cereal/config.hpp"

#include <fstream>
#include <set>

#include "cereal/error.hpp"

namespace cereal {

using nlohmann::json;

EstimatorMode parse_estimator(const std::string& name) {
  if (name == "labeled_only") return EstimatorMode::labeled_only;
  if (name == "cereal") return EstimatorMode::cereal;
  fail(ErrorKind::invalid_argument, "unknown estimator '" + name + "' (labeled_only|cereal)");
}

std::string estimator_name(EstimatorMode m) {
  return m == EstimatorMode::cereal ? "cereal" : "labeled_only";
}

SurrogateMode parse_surrogate(const std::string& name) {
  if (name == "supervised") return SurrogateMode::supervised;
  if (name == "fixmatch") return SurrogateMode::fixmatch;
  fail(ErrorKind::invalid_argument, "unknown surrogate '" + name + "' (supervised|fixmatch)");
}

std::string surrogate_name(SurrogateMode m) {
  return m == SurrogateMode::fixmatch ? "fixmatch" : "supervised";
}

void ExperimentConfig::validate(std::size_t dataset_size) const {
  require(seed_size >= 1, "seed_size must be >= 1");
  require(batch_n >= 1, "batch_n must be >= 1");
  require(seed_size <= budget, "budget must be at least seed_size");
  require(budget <= dataset_size, "budget " + std::to_string(budget) + " exceeds dataset size " +
                                      std::to_string(dataset_size));
  require(k_ref >= 1, "k_ref must be >= 1");
  require(bald_passes >= 1, "bald_passes must be >= 1");
  require(estimator == EstimatorMode::labeled_only || pseudo_label,
          "the cereal estimator needs pseudo_label = true");
  if (metric == Metric::ari) require(seed_size >= 2, "ari needs seed_size >= 2");
  model.validate();
  train.validate();
  fixmatch.validate();
}

std::string ExperimentConfig::method_name() const {
  std::string name = acquisition_name(acquisition);
  if (surrogate == SurrogateMode::fixmatch) name += "+fixmatch";
  if (pseudo_label) name += "+pl";
  if (estimator == EstimatorMode::labeled_only && pseudo_label) name += "(labeled_only)";
  return name;
}

void PairwiseConfig::validate() const {
  require(pairs_per_round >= 1, "pairwise.pairs_per_round must be >= 1");
  require(total_pairs >= pairs_per_round, "pairwise.total_pairs must be >= pairs_per_round");
  require(num_outputs >= 1 || k_ref >= 1, "pairwise needs num_outputs or k_ref");
  require(learning_rate > 0.0, "pairwise.learning_rate must be > 0");
  require(batch_size >= 1 && epochs >= 1, "pairwise batch_size and epochs must be >= 1");
  require(threshold > 0.0 && threshold < 1.0, "pairwise.threshold must be in (0, 1)");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object())
    fail(ErrorKind::format, std::string("config section '") + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.contains(k))
      fail(ErrorKind::format, std::string("unknown key '") + k + "' in config section '" + section + "'");
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::format, std::string("config key '") + key + "' has the wrong type");
    }
  }
}

template <class E, class Parse>
void get_enum(const json& j, const char* key, E& out, Parse parse) {
  std::string s;
  if (j.contains(key)) {
    get(j, key, s);
    out = parse(s);
  }
}

}  // namespace

void from_json(const json& j, ModelConfig& c) {
  check_keys(j, {"hidden_width", "num_layers", "dropout"}, "model");
  get(j, "hidden_width", c.hidden_width);
  get(j, "num_layers", c.num_layers);
  get(j, "dropout", c.dropout);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"hidden_width", c.hidden_width}, {"num_layers", c.num_layers}, {"dropout", c.dropout}};
}

void from_json(const json& j, TrainConfig& c) {
  check_keys(j,
             {"optimizer", "learning_rate", "weight_decay", "momentum", "nesterov", "batch_size",
              "epochs", "schedule", "select_on_validation", "validation_fraction",
              "min_validation_points"},
             "train");
  get_enum(j, "optimizer", c.optimizer, parse_optimizer);
  get(j, "learning_rate", c.learning_rate);
  get(j, "weight_decay", c.weight_decay);
  get(j, "momentum", c.momentum);
  get(j, "nesterov", c.nesterov);
  get(j, "batch_size", c.batch_size);
  get(j, "epochs", c.epochs);
  get_enum(j, "schedule", c.schedule, parse_schedule);
  get(j, "select_on_validation", c.select_on_validation);
  get(j, "validation_fraction", c.validation_fraction);
  get(j, "min_validation_points", c.min_validation_points);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"optimizer", optimizer_name(c.optimizer)},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"momentum", c.momentum},
       {"nesterov", c.nesterov},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"schedule", schedule_name(c.schedule)},
       {"select_on_validation", c.select_on_validation},
       {"validation_fraction", c.validation_fraction},
       {"min_validation_points", c.min_validation_points}};
}

void from_json(const json& j, FixMatchConfig& c) {
  check_keys(j,
             {"labeled_batch", "unlabeled_ratio", "threshold", "unlabeled_weight", "mixup_alpha",
              "learning_rate", "weight_decay", "momentum", "nesterov", "epochs"},
             "fixmatch");
  get(j, "labeled_batch", c.labeled_batch);
  get(j, "unlabeled_ratio", c.unlabeled_ratio);
  get(j, "threshold", c.threshold);
  get(j, "unlabeled_weight", c.unlabeled_weight);
  get(j, "mixup_alpha", c.mixup_alpha);
  get(j, "learning_rate", c.learning_rate);
  get(j, "weight_decay", c.weight_decay);
  get(j, "momentum", c.momentum);
  get(j, "nesterov", c.nesterov);
  get(j, "epochs", c.epochs);
}

void to_json(json& j, const FixMatchConfig& c) {
  j = {{"labeled_batch", c.labeled_batch}, {"unlabeled_ratio", c.unlabeled_ratio},
       {"threshold", c.threshold},         {"unlabeled_weight", c.unlabeled_weight},
       {"mixup_alpha", c.mixup_alpha},     {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},   {"momentum", c.momentum},
       {"nesterov", c.nesterov},           {"epochs", c.epochs}};
}

void from_json(const json& j, ExperimentConfig& c) {
  check_keys(j,
             {"seed_size", "batch_n", "budget", "acquisition", "estimator", "surrogate",
              "pseudo_label", "metric", "k_ref", "seed", "bald_passes", "model", "train",
              "fixmatch", "dataset", "clustering", "truth", "pairwise"},
             "experiment");
  get(j, "seed_size", c.seed_size);
  get(j, "batch_n", c.batch_n);
  get(j, "budget", c.budget);
  get_enum(j, "acquisition", c.acquisition, parse_acquisition);
  get_enum(j, "estimator", c.estimator, parse_estimator);
  get_enum(j, "surrogate", c.surrogate, parse_surrogate);
  get(j, "pseudo_label", c.pseudo_label);
  get_enum(j, "metric", c.metric, parse_metric);
  get(j, "k_ref", c.k_ref);
  get(j, "seed", c.seed);
  get(j, "bald_passes", c.bald_passes);
  if (j.contains("model")) from_json(j["model"], c.model);
  if (j.contains("train")) from_json(j["train"], c.train);
  if (j.contains("fixmatch")) from_json(j["fixmatch"], c.fixmatch);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"seed_size", c.seed_size},
       {"batch_n", c.batch_n},
       {"budget", c.budget},
       {"acquisition", acquisition_name(c.acquisition)},
       {"estimator", estimator_name(c.estimator)},
       {"surrogate", surrogate_name(c.surrogate)},
       {"pseudo_label", c.pseudo_label},
       {"metric", metric_name(c.metric)},
       {"k_ref", c.k_ref},
       {"seed", c.seed},
       {"bald_passes", c.bald_passes},
       {"model", c.model},
       {"train", c.train},
       {"fixmatch", c.fixmatch}};
}

void from_json(const json& j, PairwiseConfig& c) {
  check_keys(j,
             {"total_pairs", "pairs_per_round", "num_outputs", "learning_rate", "weight_decay",
              "batch_size", "epochs", "thresholded", "threshold", "metric", "k_ref", "seed",
              "dataset", "clustering", "truth"},
             "pairwise");
  get(j, "total_pairs", c.total_pairs);
  get(j, "pairs_per_round", c.pairs_per_round);
  get(j, "num_outputs", c.num_outputs);
  get(j, "learning_rate", c.learning_rate);
  get(j, "weight_decay", c.weight_decay);
  get(j, "batch_size", c.batch_size);
  get(j, "epochs", c.epochs);
  get(j, "thresholded", c.thresholded);
  get(j, "threshold", c.threshold);
  get_enum(j, "metric", c.metric, parse_metric);
  get(j, "k_ref", c.k_ref);
  get(j, "seed", c.seed);
}

void to_json(json& j, const PairwiseConfig& c) {
  j = {{"total_pairs", c.total_pairs},   {"pairs_per_round", c.pairs_per_round},
       {"num_outputs", c.num_outputs},   {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
       {"epochs", c.epochs},             {"thresholded", c.thresholded},
       {"threshold", c.threshold},       {"metric", metric_name(c.metric)},
       {"k_ref", c.k_ref},               {"seed", c.seed}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format, path + ": malformed JSON: " + e.what());
  }
}

}  // namespace cereal
