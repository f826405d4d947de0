#include "cereal/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cereal/config.hpp"
#include "cereal/datagen.hpp"
#include "cereal/error.hpp"
#include "cereal/io.hpp"
#include "cereal/pairwise.hpp"
#include "cereal/pipeline.hpp"
#include "cereal/service.hpp"

namespace cereal {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct DataFlags {
  std::string config;
  std::string data;
  std::string clustering;
  std::string truth;
  std::string out = ".";
};

/// File value unless the flag was given.
std::string pick_path(const std::string& flag, const json& file, const char* key) {
  if (!flag.empty()) return flag;
  if (file.contains(key)) return file[key].get<std::string>();
  return {};
}

std::string need(const std::string& value, const char* what) {
  if (value.empty()) fail(ErrorKind::invalid_argument, std::string("missing required ") + what);
  return value;
}

int infer_k_ref(const std::vector<int>& truth) {
  return 1 + *std::max_element(truth.begin(), truth.end());
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct ExperimentOverrides {
  std::optional<std::size_t> seed_size, batch_n, budget;
  std::optional<std::string> acquisition, estimator, surrogate, metric;
  std::optional<bool> pseudo_label;
  std::optional<int> k_ref, epochs;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--seed-size", seed_size, "Uniform seed labels");
    app->add_option("--batch", batch_n, "Labels queried per round");
    app->add_option("--budget", budget, "Total label budget M");
    app->add_option("--acquisition", acquisition,
                    "random|max_entropy|bald|cross_entropy|soft_nmi|hard_nmi");
    app->add_option("--estimator", estimator, "labeled_only|cereal");
    app->add_option("--surrogate", surrogate, "supervised|fixmatch");
    app->add_option("--pseudo-label", pseudo_label, "Pseudo-label the unlabeled points");
    app->add_option("--metric", metric, "nmi|ami|ari");
    app->add_option("--k-ref", k_ref, "Number of reference clusters");
    app->add_option("--epochs", epochs, "Training epochs for the configured surrogate");
    app->add_option("--seed", seed, "Experiment seed");
  }

  void apply(ExperimentConfig& c) const {
    if (seed_size) c.seed_size = *seed_size;
    if (batch_n) c.batch_n = *batch_n;
    if (budget) c.budget = *budget;
    if (acquisition) c.acquisition = parse_acquisition(*acquisition);
    if (estimator) c.estimator = parse_estimator(*estimator);
    if (surrogate) c.surrogate = parse_surrogate(*surrogate);
    if (metric) c.metric = parse_metric(*metric);
    if (pseudo_label) c.pseudo_label = *pseudo_label;
    if (k_ref) c.k_ref = *k_ref;
    if (epochs) {
      c.train.epochs = *epochs;
      c.fixmatch.epochs = *epochs;
    }
    if (seed) c.seed = *seed;
  }
};

struct Gen {
  BlobSpec spec;
  std::vector<std::size_t> kmeans_k;
  std::uint64_t kmeans_seed = 0;
  std::string out = ".";
};

void run_gen(const Gen& g, std::ostream& out) {
  const Blobs blobs = make_blobs(g.spec);
  fs::create_directories(g.out);
  save_embeddings(blobs.dataset, fs::path(g.out) / "dataset.jsonl");
  LabelStore truth(static_cast<int>(g.spec.n_clusters));
  for (std::size_t i = 0; i < blobs.labels.size(); ++i) truth.add_human(i, blobs.labels[i]);
  save_labels(truth, blobs.dataset, fs::path(g.out) / "truth.jsonl");
  out << "wrote " << blobs.dataset.size() << " points to " << (fs::path(g.out) / "dataset.jsonl").string() << '\n';
  for (std::size_t k : g.kmeans_k) {
    Rng rng = Rng(g.kmeans_seed).fork(k);
    const auto km = kmeans(blobs.dataset.vectors(), k, rng);
    const auto path = fs::path(g.out) / ("kmeans_k" + std::to_string(k) + ".jsonl");
    save_clustering(km.clustering, blobs.dataset, path);
    const double v =
        exact_metric(Metric::nmi, km.clustering, blobs.labels, static_cast<int>(g.spec.n_clusters));
    out << "k=" << k << " nmi=" << std::setprecision(6) << v << " -> " << path.string() << '\n';
  }
}

struct ClusterCmd {
  std::string data, out;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  int max_iter = 300;
};

void run_cluster(const ClusterCmd& c, std::ostream& out) {
  const auto data = load_embeddings(c.data);
  Rng rng(c.seed);
  const auto km = kmeans(data.vectors(), c.k, rng, c.max_iter);
  save_clustering(km.clustering, data, c.out);
  out << "k=" << c.k << " iterations=" << km.iterations << " inertia=" << std::setprecision(10)
      << km.inertia << '\n';
}

struct EvaluateCmd {
  std::string metric = "nmi", clustering, labels, data;
  std::optional<int> k_ref;
};

void run_evaluate(const EvaluateCmd& c, std::ostream& out) {
  const Metric metric = parse_metric(c.metric);
  std::optional<EmbeddingDataset> data;
  Clustering test;
  if (!c.data.empty()) {
    data.emplace(load_embeddings(c.data));
    test = load_clustering(c.clustering, *data);
  } else {
    auto [ids, clustering] = load_clustering_standalone(c.clustering);
    data.emplace(ids, Matrix(ids.size(), 1));
    test = std::move(clustering);
  }
  const auto truth = load_full_labels(c.labels, *data);
  const int k = c.k_ref.value_or(infer_k_ref(truth));
  out << std::setprecision(17) << exact_metric(metric, test, truth, k) << '\n';
}

struct SimulateCmd {
  DataFlags files;
  ExperimentOverrides overrides;
};

void run_simulate(const SimulateCmd& c, std::ostream& out) {
  const json file = c.files.config.empty() ? json::object() : read_json_file(c.files.config);
  ExperimentConfig cfg = file.get<ExperimentConfig>();
  c.overrides.apply(cfg);
  const auto data = load_embeddings(need(pick_path(c.files.data, file, "dataset"), "--data"));
  const auto test = load_clustering(need(pick_path(c.files.clustering, file, "clustering"), "--clustering"), data);
  const auto truth = load_full_labels(need(pick_path(c.files.truth, file, "truth"), "--truth"), data);
  if (cfg.k_ref == 0) cfg.k_ref = infer_k_ref(truth);
  TruthAnnotator annotator(truth);
  const auto result = run_experiment(data, test, annotator, cfg, truth);

  const fs::path dir = c.files.out;
  fs::create_directories(dir);
  write_curve_csv(result.curve, dir / "curve.csv");
  write_audit_jsonl(result.audit, data, dir / "audit.jsonl");
  save_labels(result.labels, data, dir / "labels.jsonl");
  const double area = aec(result.curve);
  write_json({{"method", cfg.method_name()},
              {"config", cfg},
              {"final_estimate", result.final_estimate},
              {"true_value", *result.curve.true_value},
              {"aec", area},
              {"rounds", result.audit.size()}},
             dir / "summary.json");
  out << std::setprecision(6) << cfg.method_name() << ": final estimate " << result.final_estimate
      << ", true " << *result.curve.true_value << ", AEC " << area << '\n';
}

struct SuiteCmd {
  std::string config, out = ".";
};

void run_suite_cmd(const SuiteCmd& c, std::ostream& out) {
  const json grid = read_json_file(c.config);
  EmbeddingDataset data;
  std::vector<int> truth;
  std::vector<Clustering> tests;
  if (grid.contains("blobs")) {
    BlobSpec spec;
    const json& b = grid["blobs"];
    spec.n_points = b.value("n_points", spec.n_points);
    spec.n_clusters = b.value("n_clusters", spec.n_clusters);
    spec.dimension = b.value("dimension", spec.dimension);
    spec.cluster_std = b.value("cluster_std", spec.cluster_std);
    spec.center_spread = b.value("center_spread", spec.center_spread);
    spec.seed = b.value("seed", spec.seed);
    auto blobs = make_blobs(spec);
    data = std::move(blobs.dataset);
    truth = std::move(blobs.labels);
    const auto ks = grid.value("kmeans_k", std::vector<std::size_t>{spec.n_clusters});
    const std::uint64_t kseed = grid.value("kmeans_seed", std::uint64_t{0});
    for (std::size_t k : ks) {
      Rng rng = Rng(kseed).fork(k);
      tests.emplace_back(kmeans(data.vectors(), k, rng).clustering);
    }
  } else {
    data = load_embeddings(grid.at("dataset").get<std::string>());
    truth = load_full_labels(grid.at("truth").get<std::string>(), data);
    for (const auto& p : grid.at("clusterings")) tests.push_back(load_clustering(p.get<std::string>(), data));
  }
  const auto seeds = grid.value("seeds", std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  const json base = grid.value("base", json::object());
  std::vector<SuiteMethod> methods;
  for (json m : grid.at("methods")) {
    json merged = base;
    std::string name;
    if (m.contains("name")) {
      name = m["name"].get<std::string>();
      m.erase("name");
    }
    merged.merge_patch(m);
    ExperimentConfig cfg = merged.get<ExperimentConfig>();
    if (cfg.k_ref == 0) cfg.k_ref = infer_k_ref(truth);
    methods.push_back({name.empty() ? cfg.method_name() : name, cfg});
  }
  const auto rows = run_suite(data, tests, truth, methods, seeds);
  fs::create_directories(c.out);
  write_suite_csv(rows, fs::path(c.out) / "aec.csv");
  for (const auto& r : rows)
    out << std::setprecision(6) << r.method << ": " << r.mean_aec << " +- " << r.std_err << " ("
        << r.runs << " runs)\n";
}

struct PairwiseCmd {
  DataFlags files;
  std::optional<std::size_t> total_pairs, per_round;
  std::optional<bool> thresholded;
  std::optional<int> k_ref, outputs, epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> metric;
};

void run_pairwise_cmd(const PairwiseCmd& c, std::ostream& out) {
  const json file = c.files.config.empty() ? json::object() : read_json_file(c.files.config);
  PairwiseConfig cfg;
  if (file.contains("pairwise")) cfg = file["pairwise"].get<PairwiseConfig>();
  else cfg = file.get<PairwiseConfig>();
  if (c.total_pairs) cfg.total_pairs = *c.total_pairs;
  if (c.per_round) cfg.pairs_per_round = *c.per_round;
  if (c.thresholded) cfg.thresholded = *c.thresholded;
  if (c.k_ref) cfg.k_ref = *c.k_ref;
  if (c.outputs) cfg.num_outputs = *c.outputs;
  if (c.epochs) cfg.epochs = *c.epochs;
  if (c.seed) cfg.seed = *c.seed;
  if (c.metric) cfg.metric = parse_metric(*c.metric);
  const auto data = load_embeddings(need(pick_path(c.files.data, file, "dataset"), "--data"));
  const auto test = load_clustering(need(pick_path(c.files.clustering, file, "clustering"), "--clustering"), data);
  const auto truth = load_full_labels(need(pick_path(c.files.truth, file, "truth"), "--truth"), data);
  if (cfg.k_ref == 0) cfg.k_ref = infer_k_ref(truth);
  TruthAnnotator annotator(truth);
  const auto result = run_pairwise_pipeline(data, test, annotator, cfg, truth);
  const fs::path dir = c.files.out;
  fs::create_directories(dir);
  write_curve_csv(result.curve, dir / "curve.csv");
  save_pairs(result.annotations, data, dir / "pairs.jsonl");
  for (const auto& w : result.warnings) out << "warning: " << w << '\n';
  out << std::setprecision(6) << "pairwise: " << result.curve.points.size() << " estimates, "
      << result.curve.gaps.size() << " gaps";
  if (!result.curve.points.empty())
    out << ", final " << result.curve.points.back().estimate << ", true " << *result.curve.true_value;
  out << '\n';
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-sample clustering evaluation"};
  app.require_subcommand(1);

  Gen gen;
  auto* g = app.add_subcommand("gen", "Generate a blob dataset, truth labels and k-means clusterings");
  g->add_option("--n", gen.spec.n_points, "Points");
  g->add_option("--k", gen.spec.n_clusters, "Reference clusters");
  g->add_option("--dim", gen.spec.dimension, "Dimension");
  g->add_option("--std", gen.spec.cluster_std, "Cluster standard deviation");
  g->add_option("--spread", gen.spec.center_spread, "Side of the center hypercube");
  g->add_option("--seed", gen.spec.seed, "Data seed");
  g->add_option("--kmeans-k", gen.kmeans_k, "k values for the emitted clusterings");
  g->add_option("--kmeans-seed", gen.kmeans_seed, "k-means seed");
  g->add_option("--out", gen.out, "Output directory");

  ClusterCmd cluster;
  auto* cl = app.add_subcommand("cluster", "Run k-means on a dataset");
  cl->add_option("--data", cluster.data, "Dataset JSON-lines")->required();
  cl->add_option("--k", cluster.k, "Clusters")->required();
  cl->add_option("--seed", cluster.seed, "Seed");
  cl->add_option("--max-iter", cluster.max_iter, "Lloyd iteration cap");
  cl->add_option("--out", cluster.out, "Clustering JSON-lines")->required();

  EvaluateCmd evaluate;
  auto* ev = app.add_subcommand("evaluate", "Exact metric from full labels");
  ev->add_option("--metric", evaluate.metric, "nmi|ami|ari");
  ev->add_option("--clustering", evaluate.clustering, "Clustering JSON-lines")->required();
  ev->add_option("--labels", evaluate.labels, "Reference labels JSON-lines")->required();
  ev->add_option("--data", evaluate.data, "Dataset JSON-lines");
  ev->add_option("--k-ref", evaluate.k_ref, "Reference clusters");

  SimulateCmd simulate;
  auto* sim = app.add_subcommand("simulate", "Run one experiment with a ground-truth annotator");
  sim->add_option("--config", simulate.files.config, "Experiment JSON");
  sim->add_option("--data", simulate.files.data, "Dataset JSON-lines");
  sim->add_option("--clustering", simulate.files.clustering, "Clustering JSON-lines");
  sim->add_option("--truth", simulate.files.truth, "Reference labels JSON-lines");
  sim->add_option("--out", simulate.files.out, "Output directory");
  simulate.overrides.add(sim);

  SuiteCmd suite;
  auto* su = app.add_subcommand("suite", "Mean AEC per method over clusterings and seeds");
  su->add_option("--config", suite.config, "Grid JSON")->required();
  su->add_option("--out", suite.out, "Output directory");

  PairwiseCmd pairwise;
  auto* pw = app.add_subcommand("pairwise", "Estimate from pairwise same-cluster annotations");
  pw->add_option("--config", pairwise.files.config, "Pairwise JSON");
  pw->add_option("--data", pairwise.files.data, "Dataset JSON-lines");
  pw->add_option("--clustering", pairwise.files.clustering, "Clustering JSON-lines");
  pw->add_option("--truth", pairwise.files.truth, "Reference labels JSON-lines");
  pw->add_option("--out", pairwise.files.out, "Output directory");
  pw->add_option("--total-pairs", pairwise.total_pairs, "Pair budget");
  pw->add_option("--per-round", pairwise.per_round, "Pairs per round");
  pw->add_option("--thresholded", pairwise.thresholded, "Only pseudo-label confident points");
  pw->add_option("--k-ref", pairwise.k_ref, "Reference clusters");
  pw->add_option("--outputs", pairwise.outputs, "Surrogate output width");
  pw->add_option("--epochs", pairwise.epochs, "Training epochs");
  pw->add_option("--seed", pairwise.seed, "Seed");
  pw->add_option("--metric", pairwise.metric, "nmi|ami|ari");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state_dir = "cereal_state";
  auto* sv = app.add_subcommand("serve", "Serve annotation sessions over HTTP");
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--port", port, "Port");
  sv->add_option("--state-dir", state_dir,
                 std::string("Session directory (overridden by ") + kStateDirEnv + ")");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*g) run_gen(gen, out);
    else if (*cl) run_cluster(cluster, out);
    else if (*ev) run_evaluate(evaluate, out);
    else if (*sim) run_simulate(simulate, out);
    else if (*su) run_suite_cmd(suite, out);
    else if (*pw) run_pairwise_cmd(pairwise, out);
    else if (*sv) {
      SessionService service(resolve_state_dir(state_dir));
      out << "serving " << service.session_count() << " sessions on http://" << host << ':' << port
          << '\n'
          << std::flush;
      serve(service, host, port);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace cereal
