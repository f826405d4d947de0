// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "harness_util.hpp"
#include "httplib.h"
#include "oracles.hpp"

#include "cereal/acquisition.hpp"
#include "cereal/datagen.hpp"
#include "cereal/fixmatch.hpp"
#include "cereal/io.hpp"
#include "cereal/metrics.hpp"
#include "cereal/pairwise.hpp"
#include "cereal/pipeline.hpp"
#include "cereal/training.hpp"

using namespace cereal;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_seconds;
  if (!in_time) o.detail += "; over time limit";
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s %s (%.1fs, limit %.0fs): %s\n", pass ? "PASS" : "FAIL", name.c_str(), secs,
              limit_seconds, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double accuracy(const Mlp& m, const Matrix& x, std::span<const int> y) {
  const auto p = argmax_rows(forward(m, x, Mode::eval));
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

/// The desk-scale benchmark blobs: true NMI of k-means k in {6, 8, 10} falls
/// in [0.4, 0.9].
BlobSpec benchmark_blobs() {
  BlobSpec spec;
  spec.n_points = 2000;
  spec.n_clusters = 8;
  spec.dimension = 16;
  spec.cluster_std = 4.0;
  spec.center_spread = 10.0;
  spec.seed = 1;
  return spec;
}

const std::uint64_t kKMeansSeed = 7;

Outcome metric_oracles() {
  Rng rng(99);
  const int tables = 2000;
  double worst = 0.0;
  for (int t = 0; t < tables; ++t) {
    const auto table = oracle::random_table(rng, 8, 3);
    const ContingencyStats s(table);
    const auto l = oracle::expand(table);
    const int kc = static_cast<int>(table.size()), ky = static_cast<int>(table.front().size());
    worst = std::max(worst, std::fabs(nmi(s) - static_cast<double>(oracle::nmi(l, kc, ky))));
    worst = std::max(worst, std::fabs(ami(s) - static_cast<double>(oracle::ami(table))));
    if (s.total() >= 2) worst = std::max(worst, std::fabs(ari(s) - static_cast<double>(oracle::ari(l))));
  }
  return {worst <= 1e-10, std::to_string(tables) + " tables, max deviation " + fmt(worst)};
}

Outcome gradient_check() {
  Rng rng(2024);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t d = 2 + rng.below(6), h = 3 + rng.below(8), k = 2 + rng.below(4);
    const std::size_t layers = 1 + rng.below(4), batch = 1 + rng.below(8);
    auto m = Mlp::he_uniform(mlp_widths(d, h, layers, k), 0.0, rng);
    for (auto& layer : m.layers())
      for (auto& b : layer.bias) b = 0.1 * rng.normal();
    Matrix x(batch, d);
    for (auto& v : x.values()) v = rng.normal();
    std::vector<int> y(batch);
    for (auto& v : y) v = static_cast<int>(rng.below(k));
    const auto pass = forward_pass(m, x, Mode::eval);
    const auto analytic =
        backward(m, pass, cross_entropy_grad(pass.probs, y, 1.0 / static_cast<double>(batch)));
    const auto numeric = oracle::numeric_gradient(
        m, [&](const Mlp& p) { return cross_entropy_logits(forward_pass(p, x, Mode::eval).logits, y); }, 1e-5);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return {worst < 1e-4, "20 instances, max relative error " + fmt(worst)};
}

Outcome full_budget() {
  BlobSpec spec;
  spec.n_points = 500;
  spec.n_clusters = 5;
  spec.dimension = 8;
  spec.cluster_std = 3.0;
  spec.seed = 3;
  const auto blobs = make_blobs(spec);
  Rng krng(4);
  const Clustering test = kmeans(blobs.dataset.vectors(), 6, krng).clustering;
  const double exact = exact_metric(Metric::nmi, test, blobs.labels, 5);
  int runs = 0, exact_runs = 0;
  for (auto kind : {Acquisition::random, Acquisition::max_entropy, Acquisition::bald,
                    Acquisition::cross_entropy, Acquisition::soft_nmi, Acquisition::hard_nmi})
    for (bool cereal_mode : {false, true}) {
      ExperimentConfig cfg;
      cfg.seed_size = 50;
      cfg.batch_n = 150;
      cfg.budget = 500;
      cfg.k_ref = 5;
      cfg.acquisition = kind;
      cfg.model.hidden_width = 32;
      cfg.model.num_layers = 2;
      cfg.train.epochs = 5;
      cfg.fixmatch.epochs = 2;
      cfg.bald_passes = 5;
      if (cereal_mode) {
        cfg.estimator = EstimatorMode::cereal;
        cfg.pseudo_label = true;
        cfg.surrogate = SurrogateMode::fixmatch;
      }
      TruthAnnotator ann(blobs.labels);
      const auto r = run_experiment(blobs.dataset, test, ann, cfg, blobs.labels);
      ++runs;
      exact_runs += r.final_estimate == exact;
    }
  return {exact_runs == runs, std::to_string(exact_runs) + "/" + std::to_string(runs) +
                                  " runs end exactly at v(C,Y) = " + fmt(exact)};
}

Outcome acquisition_identities() {
  Rng rng(11);
  int mismatches = 0, blanks_off = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t kc = 1 + rng.below(5), ky = 1 + rng.below(5);
    oracle::Table table(kc, std::vector<long long>(ky));
    for (auto& row : table)
      for (auto& v : row) v = static_cast<long long>(rng.below(6));
    const NmiField field((ContingencyStats(table)));
    std::vector<double> pi(ky);
    double s = 0;
    for (auto& v : pi) s += v = rng.uniform();
    for (auto& v : pi) v /= s;
    const int c = static_cast<int>(rng.below(kc));
    std::vector<double> onehot(kc, 0.0);
    onehot[c] = 1.0;
    mismatches += score_hard_nmi(field, c, pi) != score_soft_nmi(field, onehot, pi);

    // Independent table: outer product of marginals gives zero information.
    oracle::Table indep(kc, std::vector<long long>(ky));
    std::vector<long long> a(kc), b(ky);
    for (auto& v : a) v = 1 + static_cast<long long>(rng.below(3));
    for (auto& v : b) v = 1 + static_cast<long long>(rng.below(3));
    for (std::size_t i = 0; i < kc; ++i)
      for (std::size_t j = 0; j < ky; ++j) indep[i][j] = a[i] * b[j];
    const NmiField blank((ContingencyStats(indep)));
    std::vector<double> f(kc);
    double fs = 0;
    for (auto& v : f) fs += v = rng.uniform();
    for (auto& v : f) v /= fs;
    blanks_off += std::fabs(score_soft_nmi(blank, f, pi) - 1.0) > 1e-12;
    blanks_off += std::fabs(score_hard_nmi(blank, c, pi) - 1.0) > 1e-12;
  }
  const std::vector<double> flat(4, 0.0);
  std::vector<int> hits(4, 0);
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    Rng r = Rng(5).fork(static_cast<std::uint64_t>(s));
    for (auto p : select(flat, 2, r)) ++hits[p];
  }
  double worst_freq = 0;
  for (int h : hits) worst_freq = std::max(worst_freq, std::fabs(h / double(trials) - 0.5));
  const bool ok = mismatches == 0 && blanks_off == 0 && worst_freq <= 0.02;
  return {ok, "hard/soft mismatches " + std::to_string(mismatches) + ", zero-information deviations " +
                  std::to_string(blanks_off) + ", max select frequency error " + fmt(worst_freq)};
}

Outcome fixmatch_reductions() {
  Rng rng(21);
  Matrix lx(40, 6), ux(120, 6);
  for (auto& v : lx.values()) v = rng.normal();
  for (auto& v : ux.values()) v = rng.normal();
  std::vector<int> ly(40);
  for (auto& v : ly) v = static_cast<int>(rng.below(3));
  ModelConfig mc;
  mc.hidden_width = 32;
  FixMatchConfig cfg;
  cfg.epochs = 4;
  const auto sup = train_supervised(Rng(3), lx, ly, 3, mc, cfg.supervised_equivalent());
  const bool empty_same = train_fixmatch(Rng(3), lx, ly, 3, Matrix(0, 6), mc, cfg) == sup;
  auto zero = cfg;
  zero.unlabeled_weight = 0.0;
  const bool zero_same = train_fixmatch(Rng(3), lx, ly, 3, ux, mc, zero) == sup;

  const auto model = Mlp::he_uniform(mc.widths(6, 3), 0.2, rng);
  bool decomposed = true;
  for (double w : {0.0, 0.5, 1.0, 3.0}) {
    auto c = cfg;
    c.unlabeled_weight = w;
    c.threshold = 0.4;
    Rng r(8);
    const auto l = fixmatch_loss(model, lx, ly, ux, c, r);
    decomposed &= l.loss == l.supervised + w * l.unsupervised;
  }
  const Matrix probs = forward(model, ux, Mode::eval);
  const double max_conf = *std::max_element(probs.values().begin(), probs.values().end());
  auto strict = cfg;
  strict.threshold = 1.0;
  Rng r(9);
  const auto l = fixmatch_loss(model, lx, ly, ux, strict, r);
  const bool ok = empty_same && zero_same && decomposed && max_conf < 1.0 && l.mask_rate == 0.0;
  return {ok, std::string("empty unlabeled ") + (empty_same ? "identical" : "differs") +
                  ", lambda_u=0 " + (zero_same ? "identical" : "differs") + ", decomposition " +
                  (decomposed ? "exact" : "inexact") + ", tau=1 mask rate " + fmt(l.mask_rate)};
}

Outcome table_ordering() {
  const auto blobs = make_blobs(benchmark_blobs());
  std::vector<Clustering> tests;
  std::string nmis;
  bool in_range = true;
  for (std::size_t k : {6u, 8u, 10u}) {
    Rng rng = Rng(kKMeansSeed).fork(k);
    tests.emplace_back(kmeans(blobs.dataset.vectors(), k, rng).clustering);
    const double v = exact_metric(Metric::nmi, tests.back(), blobs.labels, 8);
    in_range &= v >= 0.4 && v <= 0.9;
    nmis += (nmis.empty() ? "" : "/") + fmt(v);
  }
  ExperimentConfig base;
  base.seed_size = 50;
  base.batch_n = 50;
  base.budget = 500;
  base.k_ref = 8;
  auto cereal_cfg = base;
  cereal_cfg.surrogate = SurrogateMode::fixmatch;
  cereal_cfg.pseudo_label = true;
  cereal_cfg.estimator = EstimatorMode::cereal;
  const auto rows = run_suite(blobs.dataset, tests, blobs.labels,
                              {{"cereal", cereal_cfg}, {"random", base}}, {0, 1, 2, 3, 4});
  const auto& c = rows[0];
  const auto& r = rows[1];
  const double pooled = std::sqrt(c.std_err * c.std_err + r.std_err * r.std_err);
  const double reduction = r.mean_aec - c.mean_aec;
  return {in_range && reduction > pooled,
          "true NMI " + nmis + "; cereal " + fmt(c.mean_aec) + " +- " + fmt(c.std_err) + " vs random " +
              fmt(r.mean_aec) + " +- " + fmt(r.std_err) + " over " + std::to_string(c.runs) +
              " runs; reduction " + fmt(reduction) + ", pooled SE " + fmt(pooled)};
}

Outcome surrogate_ordering() {
  const auto blobs = make_blobs(benchmark_blobs());
  const Matrix x = standardize_columns(blobs.dataset.vectors());
  const ExperimentConfig defaults;
  double fm = 0, sup = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng pick(seed);
    pick.shuffle(order.begin(), order.end());
    const std::vector<std::size_t> li(order.begin(), order.begin() + 200), ui(order.begin() + 200, order.end());
    std::vector<int> ly, uy;
    for (auto i : li) ly.push_back(blobs.labels[i]);
    for (auto i : ui) uy.push_back(blobs.labels[i]);
    const Matrix lx = x.gather(li), ux = x.gather(ui);
    sup += accuracy(train_supervised(Rng(seed).fork(1), lx, ly, 8, defaults.model, defaults.train), ux, uy);
    fm += accuracy(train_fixmatch(Rng(seed).fork(1), lx, ly, 8, ux, defaults.model, defaults.fixmatch), ux, uy);
  }
  fm /= 5;
  sup /= 5;
  return {fm >= sup, "unlabeled accuracy fixmatch " + fmt(fm) + " vs supervised " + fmt(sup)};
}

Outcome l2c_convergence() {
  BlobSpec spec;
  spec.n_points = 20;
  spec.n_clusters = 2;
  spec.dimension = 4;
  spec.cluster_std = 0.5;
  spec.seed = 13;
  const auto blobs = make_blobs(spec);
  Rng krng(14);
  const Clustering test = kmeans(blobs.dataset.vectors(), 2, krng).clustering;
  PairwiseConfig cfg;
  cfg.total_pairs = 190;
  cfg.pairs_per_round = 190;
  cfg.k_ref = 2;
  TruthAnnotator ann(blobs.labels);
  const auto r = run_pairwise_pipeline(blobs.dataset, test, ann, cfg, blobs.labels);
  const double acc = r.pair_accuracy.empty() ? 0.0 : r.pair_accuracy.back();
  const double err = r.curve.points.empty() ? 1.0
                                            : std::fabs(r.curve.points.back().estimate - *r.curve.true_value);

  std::vector<int> labels(400);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  Rng prng(15);
  const auto pairs = sample_pairs(labels.size(), 10000, prng);
  int same = 0;
  for (const auto& [i, j] : pairs) same += labels[i] == labels[j];
  const double rate = same / 10000.0;
  return {acc >= 0.95 && err <= 0.05 && std::fabs(rate - 0.25) <= 0.02,
          "pair accuracy " + fmt(acc) + ", estimate error " + fmt(err) + ", positive rate " + fmt(rate)};
}

Outcome aec_arithmetic() {
  ErrorCurve three;
  three.true_value = 0.0;
  three.add(50, 0.2);
  three.add(100, 0.1);
  three.add(150, 0.0);
  ErrorCurve one;
  one.true_value = 0.0;
  one.add(50, 0.3);
  one.add(100, 0.1);
  const double a = aec(three), b = aec(one);
  return {a == 10.0 && b == 10.0, "three-point " + fmt(a) + ", single interval " + fmt(b)};
}

Outcome service_equivalence() {
  const auto dir = harness::temp_dir("acceptance_service");
  const auto gen = harness::cli({"gen", "--n", "300", "--k", "4", "--dim", "8", "--std", "3", "--seed",
                                 "2", "--kmeans-k", "5", "--out", dir.string()});
  if (gen.code != 0) return {false, "gen failed: " + gen.err};
  const std::string data = (dir / "dataset.jsonl").string(), truth_path = (dir / "truth.jsonl").string(),
                    clustering = (dir / "kmeans_k5.jsonl").string();
  ExperimentConfig cfg;
  cfg.seed_size = 20;
  cfg.batch_n = 20;
  cfg.budget = 120;
  cfg.acquisition = Acquisition::hard_nmi;
  cfg.surrogate = SurrogateMode::fixmatch;
  cfg.estimator = EstimatorMode::cereal;
  cfg.pseudo_label = true;
  cfg.model.hidden_width = 32;
  cfg.fixmatch.epochs = 8;
  cfg.seed = 17;
  std::ofstream(dir / "config.json") << json(cfg).dump();
  const auto sim = harness::cli({"simulate", "--config", (dir / "config.json").string(), "--data", data,
                                 "--clustering", clustering, "--truth", truth_path, "--out",
                                 (dir / "sim").string()});
  if (sim.code != 0) return {false, "simulate failed: " + sim.err};
  const auto expected = harness::read_curve_csv(dir / "sim" / "curve.csv");
  const auto truth = harness::read_label_map(truth_path);
  const json body{{"config", cfg}, {"dataset", data}, {"clustering", clustering}, {"truth", truth_path}};

  // First service instance: seed batch and one more round over HTTP, then shut down.
  std::string id;
  json before;
  {
    SessionService svc(dir / "state");
    httplib::Server server;
    svc.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/sessions", body.dump(), "application/json");
    if (!created || created->status != 201) {
      server.stop();
      thread.join();
      return {false, "session creation failed"};
    }
    id = json::parse(created->body).at("session_id");
    for (int round = 0; round < 2; ++round) {
      const auto q = json::parse(client.Get("/sessions/" + id + "/queries")->body);
      json labels = json::array();
      for (const auto& item : q.at("items"))
        labels.push_back({{"id", item.at("id")}, {"label", truth.at(item.at("id").get<std::string>())}});
      client.Post("/sessions/" + id + "/labels", json{{"labels", labels}}.dump(), "application/json");
    }
    before = json::parse(client.Get("/sessions/" + id)->body);
    server.stop();
    thread.join();
  }
  SessionService restarted(dir / "state");
  const bool restored = restarted.summary(id).body == before;
  harness::answer_batches(restarted, id, truth);
  const auto got = harness::curve_points(restarted.curve(id).body);
  const bool same = got == expected;
  return {restored && same, std::string("restart ") + (restored ? "restores identical state" : "differs") +
                                ", " + std::to_string(got.size()) + " service points vs " +
                                std::to_string(expected.size()) + " CLI points, curves " +
                                (same ? "identical" : "differ")};
}

}  // namespace

int main() {
  report("metric oracle equivalence", 60, metric_oracles);
  report("gradient check", 60, gradient_check);
  report("full-budget exactness", 120, full_budget);
  report("acquisition identities", 60, acquisition_identities);
  report("fixmatch reductions", 60, fixmatch_reductions);
  report("desk-scale AEC ordering", 1200, table_ordering);
  report("surrogate accuracy ordering", 600, surrogate_ordering);
  report("pairwise small-instance convergence", 60, l2c_convergence);
  report("AEC arithmetic", 60, aec_arithmetic);
  report("service and CLI equivalence", 300, service_equivalence);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
