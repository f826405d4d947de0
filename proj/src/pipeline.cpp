#include "cereal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cereal/acquisition.hpp"
#include "cereal/error.hpp"
#include "cereal/fixmatch.hpp"
#include "cereal/training.hpp"

namespace cereal {

using nlohmann::json;

namespace {

enum StreamTag : std::uint64_t { kSeedTag = 1, kTrainTag = 2, kAcquireTag = 3 };

Rng round_stream(std::uint64_t seed, StreamTag tag, int round) {
  return Rng(seed).fork(tag).fork(static_cast<std::uint64_t>(round));
}

std::vector<std::size_t> keys_of(const std::map<std::size_t, int>& m) {
  std::vector<std::size_t> out;
  out.reserve(m.size());
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

}  // namespace

std::map<std::size_t, int> pseudo_label(const Mlp& model, std::span<const std::size_t> unlabeled,
                                        const EmbeddingDataset& data) {
  std::map<std::size_t, int> out;
  if (unlabeled.empty()) return out;
  require(model.input_dim() == data.dim(), "pseudo_label: model input width != dataset dimension");
  const Matrix probs = forward(model, data.vectors().gather(unlabeled), Mode::eval);
  const auto classes = argmax_rows(probs);
  for (std::size_t j = 0; j < unlabeled.size(); ++j) out.emplace(unlabeled[j], classes[j]);
  return out;
}

std::string status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_labels: return "awaiting_labels";
    case SessionStatus::training: return "training";
    case SessionStatus::done: return "done";
  }
  return "?";
}

SessionStatus parse_status(const std::string& name) {
  if (name == "awaiting_labels") return SessionStatus::awaiting_labels;
  if (name == "training") return SessionStatus::training;
  if (name == "done") return SessionStatus::done;
  fail(ErrorKind::format, "unknown session status '" + name + "'");
}

ActiveSession::ActiveSession(std::shared_ptr<const EmbeddingDataset> data,
                             std::shared_ptr<const Clustering> test, ExperimentConfig cfg,
                             std::optional<std::vector<int>> truth)
    : data_(std::move(data)),
      test_(std::move(test)),
      cfg_(std::move(cfg)),
      truth_(std::move(truth)),
      labels_(cfg_.k_ref) {
  require(data_ && test_, "session needs a dataset and a test clustering");
  require(clustering_size(*test_) == data_->size(),
          "test clustering size does not match the dataset");
  cfg_.validate(data_->size());
  features_ = std::make_shared<const Matrix>(standardize_columns(data_->vectors()));
  if (truth_) {
    require(truth_->size() == data_->size(), "truth labels do not match the dataset");
    curve_.true_value = exact_metric(cfg_.metric, *test_, *truth_, cfg_.k_ref);
  }
  Rng rng = Rng(cfg_.seed).fork(kSeedTag);
  const std::vector<double> flat(data_->size(), 0.0);
  pending_ = select(flat, cfg_.seed_size, rng);
}

std::optional<double> ActiveSession::current_estimate() const {
  if (curve_.points.empty()) return std::nullopt;
  return curve_.points.back().estimate;
}

bool ActiveSession::submit(std::size_t index, int label) {
  if (status_ != SessionStatus::awaiting_labels)
    fail(ErrorKind::conflict, "session is not awaiting labels");
  if (std::find(pending_.begin(), pending_.end(), index) == pending_.end())
    fail(ErrorKind::conflict, "point '" + data_->id(index) + "' is not pending");
  if (label < 0 || label >= cfg_.k_ref)
    fail(ErrorKind::invalid_argument,
         "label " + std::to_string(label) + " outside [0, " + std::to_string(cfg_.k_ref) + ")");
  if (auto it = received_.find(index); it != received_.end()) {
    if (it->second != label)
      fail(ErrorKind::conflict, "point '" + data_->id(index) + "' already labeled differently");
    return false;
  }
  received_.emplace(index, label);
  if (received_.size() < pending_.size()) return false;
  advance();
  return true;
}

std::optional<Mlp> ActiveSession::train(const std::vector<std::size_t>& unlabeled) const {
  const auto labeled = keys_of(labels_.human());
  std::vector<int> y;
  y.reserve(labeled.size());
  for (std::size_t i : labeled) y.push_back(labels_.human().at(i));
  const Matrix x = features_->gather(labeled);
  Rng rng = round_stream(cfg_.seed, kTrainTag, round_);
  if (cfg_.surrogate == SurrogateMode::fixmatch)
    return train_fixmatch(rng, x, y, cfg_.k_ref, features_->gather(unlabeled), cfg_.model,
                          cfg_.fixmatch);
  return train_supervised(rng, x, y, cfg_.k_ref, cfg_.model, cfg_.train);
}

Matrix ActiveSession::surrogate_probs(const std::optional<Mlp>& model,
                                      std::span<const std::size_t> positions) const {
  if (predictor_) {
    Matrix p = predictor_(positions);
    require(p.rows() == positions.size() && p.cols() == static_cast<std::size_t>(cfg_.k_ref),
            "predictor returned the wrong shape");
    return p;
  }
  return forward(*model, features_->gather(positions), Mode::eval);
}

void ActiveSession::advance() {
  status_ = SessionStatus::training;
  AuditEntry entry;
  entry.queried = pending_;
  entry.scores = pending_scores_;
  for (const auto& [i, y] : received_) labels_.add_human(i, y);
  received_.clear();
  pending_.clear();
  pending_scores_.clear();
  ++round_;

  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < data_->size(); ++i)
    if (!labels_.is_human_labeled(i)) unlabeled.push_back(i);

  const bool finished = labels_used() >= cfg_.budget;
  const bool need_pseudo = cfg_.pseudo_label && !unlabeled.empty();
  const bool need_acquire = !finished && needs_surrogate(cfg_.acquisition);
  std::optional<Mlp> model;
  if (!predictor_ && (need_pseudo || need_acquire)) model = train(unlabeled);

  if (need_pseudo) {
    const Matrix probs = surrogate_probs(model, unlabeled);
    const auto classes = argmax_rows(probs);
    std::map<std::size_t, int> pseudo;
    for (std::size_t j = 0; j < unlabeled.size(); ++j) pseudo.emplace(unlabeled[j], classes[j]);
    labels_.set_pseudo(std::move(pseudo));
  } else {
    labels_.clear_pseudo();
  }

  double estimate;
  if (cfg_.estimator == EstimatorMode::cereal) {
    estimate = estimate_metric(cfg_.metric, *test_, labels_);
  } else {
    LabelStore human_only(cfg_.k_ref);
    for (const auto& [i, y] : labels_.human()) human_only.add_human(i, y);
    estimate = estimate_metric(cfg_.metric, *test_, human_only);
  }
  curve_.add(static_cast<long>(labels_used()), estimate);
  entry.round = round_;
  entry.estimate = estimate;
  entry.labels_used = static_cast<long>(labels_used());
  audit_.push_back(std::move(entry));

  if (finished) {
    status_ = SessionStatus::done;
    return;
  }
  choose_next(model);
  status_ = SessionStatus::awaiting_labels;
}

void ActiveSession::choose_next(const std::optional<Mlp>& model) {
  AcquisitionContext ctx;
  for (std::size_t i = 0; i < data_->size(); ++i)
    if (!labels_.is_human_labeled(i)) ctx.candidates.push_back(i);
  const std::size_t n = std::min(cfg_.batch_n, cfg_.budget - labels_used());
  Rng rng = round_stream(cfg_.seed, kAcquireTag, round_);

  std::vector<double> scores(ctx.candidates.size(), 0.0);
  const bool deterministic_bald = cfg_.acquisition == Acquisition::bald && predictor_;
  if (needs_surrogate(cfg_.acquisition) && !deterministic_bald) {
    ctx.test = test_.get();
    ctx.vectors = features_.get();
    ctx.bald_passes = cfg_.bald_passes;
    if (model) ctx.surrogate = &*model;
    if (predictor_) ctx.candidate_probs = surrogate_probs(model, ctx.candidates);
    ctx.labeled_stats = build_contingency(harden(*test_), labels_.human(), cfg_.k_ref);
    scores = score_candidates(cfg_.acquisition, ctx, rng);
  }
  const auto picked = select(scores, n, rng);
  for (std::size_t j : picked) {
    pending_.push_back(ctx.candidates[j]);
    pending_scores_.push_back(scores[j]);
  }
}

namespace {

json pairs_json(const std::map<std::size_t, int>& m) {
  json out = json::array();
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

std::map<std::size_t, int> pairs_from(const json& j) {
  std::map<std::size_t, int> out;
  for (const auto& p : j) out.emplace(p.at(0).get<std::size_t>(), p.at(1).get<int>());
  return out;
}

}  // namespace

json ActiveSession::to_json() const {
  json curve = json::array();
  for (const auto& p : curve_.points) curve.push_back({p.labels_used, p.estimate});
  json audit = json::array();
  for (const auto& e : audit_)
    audit.push_back({{"round", e.round},
                     {"queried", e.queried},
                     {"scores", e.scores},
                     {"estimate", e.estimate},
                     {"labels_used", e.labels_used}});
  return {{"config", cfg_},
          {"dataset_size", data_->size()},
          {"status", status_name(status_)},
          {"round", round_},
          {"human", pairs_json(labels_.human())},
          {"pseudo", pairs_json(labels_.pseudo())},
          {"pending", pending_},
          {"pending_scores", pending_scores_},
          {"received", pairs_json(received_)},
          {"curve", curve},
          {"audit", audit}};
}

ActiveSession ActiveSession::from_json(const json& j, std::shared_ptr<const EmbeddingDataset> data,
                                       std::shared_ptr<const Clustering> test,
                                       std::optional<std::vector<int>> truth) {
  try {
    ActiveSession s(std::move(data), std::move(test), j.at("config").get<ExperimentConfig>(),
                    std::move(truth));
    require(j.at("dataset_size").get<std::size_t>() == s.data_->size(),
            "saved session does not match the dataset size");
    s.status_ = parse_status(j.at("status").get<std::string>());
    s.round_ = j.at("round").get<int>();
    s.labels_ = LabelStore(s.cfg_.k_ref);
    for (const auto& [i, y] : pairs_from(j.at("human"))) s.labels_.add_human(i, y);
    s.labels_.set_pseudo(pairs_from(j.at("pseudo")));
    s.pending_ = j.at("pending").get<std::vector<std::size_t>>();
    s.pending_scores_ = j.at("pending_scores").get<std::vector<double>>();
    s.received_ = pairs_from(j.at("received"));
    s.curve_.points.clear();
    for (const auto& p : j.at("curve")) s.curve_.add(p.at(0).get<long>(), p.at(1).get<double>());
    s.audit_.clear();
    for (const auto& e : j.at("audit"))
      s.audit_.push_back({e.at("round").get<int>(), e.at("queried").get<std::vector<std::size_t>>(),
                          e.at("scores").get<std::vector<double>>(), e.at("estimate").get<double>(),
                          e.at("labels_used").get<long>()});
    for (std::size_t i : s.pending_)
      require(i < s.data_->size() && !s.labels_.is_human_labeled(i),
              "saved session has an invalid pending point");
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed session state: ") + e.what());
  }
}

ExperimentResult run_experiment(const EmbeddingDataset& data, const Clustering& test,
                                Annotator& annotator, const ExperimentConfig& cfg,
                                std::optional<std::vector<int>> truth, Predictor predictor) {
  // Non-owning handles; the session does not outlive this call.
  std::shared_ptr<const EmbeddingDataset> d(&data, [](const EmbeddingDataset*) {});
  std::shared_ptr<const Clustering> c(&test, [](const Clustering*) {});
  ActiveSession session(d, c, cfg, std::move(truth));
  if (predictor) session.set_predictor(std::move(predictor));
  while (session.status() != SessionStatus::done) {
    const auto batch = session.pending();
    for (std::size_t i : batch) {
      int label;
      try {
        label = annotator.label(i);
      } catch (const std::exception& e) {
        fail(ErrorKind::io, "annotator failed in round " + std::to_string(session.round() + 1) +
                                " on '" + data.id(i) + "': " + e.what());
      }
      session.submit(i, label);
    }
  }
  return {session.curve(), *session.current_estimate(), session.audit(), session.labels()};
}

std::vector<SuiteRow> run_suite(const EmbeddingDataset& data, const std::vector<Clustering>& tests,
                                const std::vector<int>& truth,
                                const std::vector<SuiteMethod>& methods,
                                const std::vector<std::uint64_t>& seeds) {
  require(truth.size() == data.size(), "run_suite needs ground-truth labels for every point");
  require(!tests.empty() && !seeds.empty() && !methods.empty(),
          "run_suite needs clusterings, seeds and methods");
  const std::size_t per_method = tests.size() * seeds.size();
  const std::size_t total = methods.size() * per_method;
  std::vector<double> aecs(total, 0.0);
  std::vector<std::string> errors(total);

  const auto count = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const auto run = static_cast<std::size_t>(r);
    const std::size_t m = run / per_method;
    const std::size_t c = (run % per_method) / seeds.size();
    const std::size_t s = run % seeds.size();
    try {
      ExperimentConfig cfg = methods[m].config;
      cfg.seed = Rng(seeds[s]).fork(c).next_u64();
      TruthAnnotator annotator(truth);
      const auto result = run_experiment(data, tests[c], annotator, cfg, truth);
      aecs[run] = aec(result.curve);
    } catch (const std::exception& e) {
      errors[run] = e.what();
    }
  }
  for (std::size_t r = 0; r < total; ++r)
    if (!errors[r].empty())
      fail(ErrorKind::invalid_argument,
           "suite run for method '" + methods[r / per_method].name + "' failed: " + errors[r]);

  std::vector<SuiteRow> rows;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    SuiteRow row;
    row.method = methods[m].name;
    row.runs = per_method;
    row.aecs.assign(aecs.begin() + static_cast<std::ptrdiff_t>(m * per_method),
                    aecs.begin() + static_cast<std::ptrdiff_t>((m + 1) * per_method));
    double sum = 0.0;
    for (double a : row.aecs) sum += a;
    row.mean_aec = sum / static_cast<double>(per_method);
    if (per_method > 1) {
      double ss = 0.0;
      for (double a : row.aecs) ss += (a - row.mean_aec) * (a - row.mean_aec);
      row.std_err = std::sqrt(ss / static_cast<double>(per_method - 1)) /
                    std::sqrt(static_cast<double>(per_method));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path) {
  auto out = open_out(path);
  const bool truth = curve.true_value.has_value();
  out << "labels_used,estimate" << (truth ? ",true_value,abs_error" : "") << '\n';
  std::vector<std::pair<long, std::optional<double>>> rows;
  for (const auto& p : curve.points) rows.emplace_back(p.labels_used, p.estimate);
  for (long g : curve.gaps) rows.emplace_back(g, std::nullopt);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [x, est] : rows) {
    out << x << ',';
    if (est) out << *est;
    if (truth) {
      out << ',' << *curve.true_value << ',';
      if (est) out << std::abs(*est - *curve.true_value);
    }
    out << '\n';
  }
}

void write_suite_csv(const std::vector<SuiteRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "method,mean_aec,std_err,runs\n";
  for (const auto& r : rows) out << r.method << ',' << r.mean_aec << ',' << r.std_err << ',' << r.runs << '\n';
}

void write_audit_jsonl(const std::vector<AuditEntry>& audit, const EmbeddingDataset& data,
                       const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& e : audit) {
    json ids = json::array();
    for (std::size_t i : e.queried) ids.push_back(data.id(i));
    json rec = {{"round", e.round},
                {"queried", ids},
                {"scores", e.scores},
                {"estimate", e.estimate},
                {"labels_used", e.labels_used}};
    out << rec.dump() << '\n';
  }
}

}  // namespace cereal
