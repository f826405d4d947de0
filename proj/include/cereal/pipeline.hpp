#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cereal/config.hpp"
#include "cereal/metrics.hpp"
#include "cereal/mlp.hpp"
#include "cereal/types.hpp"

namespace cereal {

/// Source of reference labels. Answers must be deterministic per point.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual int label(std::size_t index) = 0;
};

class PairAnnotator {
 public:
  virtual ~PairAnnotator() = default;
  virtual bool same_cluster(std::size_t i, std::size_t j) = 0;
};

/// Answers from a full reference labeling.
class TruthAnnotator final : public Annotator, public PairAnnotator {
 public:
  explicit TruthAnnotator(std::vector<int> truth) : truth_(std::move(truth)) {}
  int label(std::size_t index) override { return truth_.at(index); }
  bool same_cluster(std::size_t i, std::size_t j) override { return truth_.at(i) == truth_.at(j); }

 private:
  std::vector<int> truth_;
};

/// Argmax of the eval-mode forward for every listed position, lowest class on ties.
std::map<std::size_t, int> pseudo_label(const Mlp& model, std::span<const std::size_t> unlabeled,
                                        const EmbeddingDataset& data);

/// Class probabilities for the given dataset positions. Stands in for the
/// trained surrogate when set.
using Predictor = std::function<Matrix(std::span<const std::size_t> positions)>;

enum class SessionStatus { awaiting_labels, training, done };
std::string status_name(SessionStatus s);
SessionStatus parse_status(const std::string& name);

struct AuditEntry {
  int round = 0;
  std::vector<std::size_t> queried;
  /// Acquisition scores of the queried points; empty for the seed round.
  std::vector<double> scores;
  double estimate = 0.0;
  long labels_used = 0;

  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

/// One active-sampling run as an explicit state machine: a pending batch
/// awaits labels; once every pending point is labeled the surrogate is
/// retrained, pseudo-labels and the estimate are refreshed and the next batch
/// is chosen. The surrogate sees column-standardized vectors. All randomness is derived from (seed, round), so a restored
/// session continues exactly as an uninterrupted one.
class ActiveSession {
 public:
  ActiveSession(std::shared_ptr<const EmbeddingDataset> data,
                std::shared_ptr<const Clustering> test, ExperimentConfig cfg,
                std::optional<std::vector<int>> truth = std::nullopt);

  void set_predictor(Predictor p) { predictor_ = std::move(p); }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const EmbeddingDataset& dataset() const noexcept { return *data_; }
  const Clustering& test() const noexcept { return *test_; }
  SessionStatus status() const noexcept { return status_; }
  /// Completed rounds; the seed round is round 0.
  int round() const noexcept { return round_; }
  const std::vector<std::size_t>& pending() const noexcept { return pending_; }
  const std::map<std::size_t, int>& received() const noexcept { return received_; }
  const LabelStore& labels() const noexcept { return labels_; }
  const ErrorCurve& curve() const noexcept { return curve_; }
  const std::vector<AuditEntry>& audit() const noexcept { return audit_; }
  std::optional<double> current_estimate() const;
  std::size_t labels_used() const noexcept { return labels_.human().size(); }

  /// Records a label for a pending point. Resubmitting the same label is a
  /// no-op; a different label or a non-pending point is a conflict. Returns
  /// true when this submission completed the batch and advanced the round.
  bool submit(std::size_t index, int label);

  nlohmann::json to_json() const;
  static ActiveSession from_json(const nlohmann::json& j,
                                 std::shared_ptr<const EmbeddingDataset> data,
                                 std::shared_ptr<const Clustering> test,
                                 std::optional<std::vector<int>> truth = std::nullopt);

 private:
  ActiveSession() = default;
  void advance();
  void choose_next(const std::optional<Mlp>& model);
  Matrix surrogate_probs(const std::optional<Mlp>& model,
                         std::span<const std::size_t> positions) const;
  std::optional<Mlp> train(const std::vector<std::size_t>& unlabeled) const;

  std::shared_ptr<const EmbeddingDataset> data_;
  std::shared_ptr<const Clustering> test_;
  ExperimentConfig cfg_;
  std::optional<std::vector<int>> truth_;
  Predictor predictor_;
  /// Standardized vectors; the surrogate only ever sees these.
  std::shared_ptr<const Matrix> features_;

  SessionStatus status_ = SessionStatus::awaiting_labels;
  int round_ = -1;
  LabelStore labels_;
  std::vector<std::size_t> pending_;
  std::vector<double> pending_scores_;
  std::map<std::size_t, int> received_;
  ErrorCurve curve_;
  std::vector<AuditEntry> audit_;
};

struct ExperimentResult {
  ErrorCurve curve;
  double final_estimate = 0.0;
  std::vector<AuditEntry> audit;
  LabelStore labels;
};

/// Runs a session to its budget, answering every query from the annotator.
ExperimentResult run_experiment(const EmbeddingDataset& data, const Clustering& test,
                                Annotator& annotator, const ExperimentConfig& cfg,
                                std::optional<std::vector<int>> truth = std::nullopt,
                                Predictor predictor = {});

struct SuiteMethod {
  std::string name;
  ExperimentConfig config;
};

struct SuiteRow {
  std::string method;
  double mean_aec = 0.0;
  double std_err = 0.0;
  std::size_t runs = 0;
  std::vector<double> aecs;  // clustering-major, seed-minor
};

/// Every method on every (clustering, seed) pair. Runs sharing a clustering
/// and seed use the same experiment seed across methods. std_err is the
/// sample standard deviation over sqrt(runs), 0 for a single run.
std::vector<SuiteRow> run_suite(const EmbeddingDataset& data, const std::vector<Clustering>& tests,
                                const std::vector<int>& truth,
                                const std::vector<SuiteMethod>& methods,
                                const std::vector<std::uint64_t>& seeds);

/// labels_used,estimate[,true_value,abs_error]
void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path);
void write_suite_csv(const std::vector<SuiteRow>& rows, const std::filesystem::path& path);
/// One {round, queried: [id...], scores, estimate, labels_used} per line.
void write_audit_jsonl(const std::vector<AuditEntry>& audit, const EmbeddingDataset& data,
                       const std::filesystem::path& path);

}  // namespace cereal
