#include "cereal/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "cereal/error.hpp"

namespace cereal {

using nlohmann::json;

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

/// Parses every nonblank line; callback receives (1-based line number, record).
template <class F>
void for_each_record(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::format, where(path, line) + "malformed JSON: " + e.what());
    }
    if (!rec.is_object()) fail(ErrorKind::format, where(path, line) + "record is not an object");
    f(line, rec);
  }
}

std::string get_id(const json& rec, const std::filesystem::path& path, std::size_t line) {
  auto it = rec.find("id");
  if (it == rec.end() || !it->is_string())
    fail(ErrorKind::format, where(path, line) + "missing string field 'id'");
  auto id = it->get<std::string>();
  if (id.empty()) fail(ErrorKind::format, where(path, line) + "empty id");
  return id;
}

std::vector<double> get_numbers(const json& v, const char* field,
                                const std::filesystem::path& path, std::size_t line) {
  if (!v.is_array()) fail(ErrorKind::format, where(path, line) + "'" + field + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) fail(ErrorKind::format, where(path, line) + "'" + field + "' has a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

void open_out(std::ofstream& out, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out.open(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
}

/// Shared by both clustering loaders once every record has a dataset position.
Clustering assemble_clustering(std::vector<std::optional<int>> hard,
                               std::vector<std::optional<std::vector<double>>> soft, bool is_soft,
                               const std::vector<std::string>& ids,
                               const std::filesystem::path& path) {
  const std::size_t n = ids.size();
  if (!is_soft) {
    std::vector<int> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!hard[i]) fail(ErrorKind::format, path.string() + ": missing id '" + ids[i] + "'");
      a[i] = *hard[i];
    }
    return HardClustering(std::move(a));
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!soft[i]) fail(ErrorKind::format, path.string() + ": missing id '" + ids[i] + "'");
    if (i == 0) k = soft[i]->size();
  }
  Matrix m(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = *soft[i];
    double sum = 0.0;
    for (double p : row) sum += p;
    if (std::abs(sum - 1.0) > 1e-6)
      fail(ErrorKind::format, path.string() + ": distribution for '" + ids[i] +
                                  "' sums to " + std::to_string(sum));
    for (std::size_t j = 0; j < k; ++j) m(i, j) = row[j] / sum;
  }
  return SoftClustering(std::move(m));
}

struct ClusterLines {
  std::vector<std::pair<std::string, std::size_t>> ids;  // id, line
  std::vector<std::optional<int>> hard;
  std::vector<std::vector<double>> soft;
  bool is_soft = false;
};

ClusterLines read_cluster_lines(const std::filesystem::path& path) {
  ClusterLines out;
  std::optional<bool> soft_format;
  std::size_t width = 0;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    auto id = get_id(rec, path, line);
    const bool has_cluster = rec.contains("cluster");
    const bool has_dist = rec.contains("distribution");
    if (has_cluster == has_dist)
      fail(ErrorKind::format, where(path, line) + "expected exactly one of 'cluster' or 'distribution'");
    if (soft_format && *soft_format != has_dist)
      fail(ErrorKind::format, where(path, line) + "mixed hard and soft records");
    soft_format = has_dist;
    if (has_cluster) {
      const auto& c = rec["cluster"];
      if (!c.is_number_integer() || c.get<long long>() < 0)
        fail(ErrorKind::format, where(path, line) + "'cluster' must be a nonnegative integer");
      out.hard.push_back(c.get<int>());
      out.soft.emplace_back();
    } else {
      auto row = get_numbers(rec["distribution"], "distribution", path, line);
      if (row.empty()) fail(ErrorKind::format, where(path, line) + "empty distribution");
      if (out.soft.empty() || width == 0) width = row.size();
      if (row.size() != width)
        fail(ErrorKind::format, where(path, line) + "distribution width mismatch");
      for (double p : row)
        if (p < 0.0) fail(ErrorKind::format, where(path, line) + "negative probability");
      out.soft.push_back(std::move(row));
      out.hard.emplace_back();
    }
    out.ids.emplace_back(std::move(id), line);
  });
  if (out.ids.empty()) fail(ErrorKind::format, path.string() + ": empty clustering file");
  out.is_soft = soft_format.value_or(false);
  return out;
}

}  // namespace

EmbeddingDataset load_embeddings(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  std::vector<double> flat;
  std::vector<std::optional<std::string>> payloads;
  std::map<std::string, std::size_t> seen;
  std::size_t dim = 0;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    auto id = get_id(rec, path, line);
    auto vit = rec.find("vector");
    if (vit == rec.end()) fail(ErrorKind::format, where(path, line) + "missing field 'vector'");
    auto v = get_numbers(*vit, "vector", path, line);
    if (ids.empty()) {
      if (v.empty()) fail(ErrorKind::format, where(path, line) + "empty vector");
      dim = v.size();
    } else if (v.size() != dim) {
      fail(ErrorKind::format, where(path, line) + "dimension mismatch: expected " +
                                  std::to_string(dim) + ", got " + std::to_string(v.size()));
    }
    if (auto [it, fresh] = seen.emplace(id, line); !fresh)
      fail(ErrorKind::format, where(path, line) + "duplicate id '" + id + "' (first on line " +
                                  std::to_string(it->second) + ")");
    std::optional<std::string> payload;
    if (auto pit = rec.find("payload"); pit != rec.end() && !pit->is_null()) {
      if (!pit->is_string()) fail(ErrorKind::format, where(path, line) + "'payload' must be a string");
      payload = pit->get<std::string>();
    }
    ids.push_back(std::move(id));
    flat.insert(flat.end(), v.begin(), v.end());
    payloads.push_back(std::move(payload));
  });
  if (ids.empty()) fail(ErrorKind::format, path.string() + ": empty dataset file");
  if (ids.size() < 2) fail(ErrorKind::format, path.string() + ": dataset needs at least 2 points");
  Matrix m(ids.size(), dim);
  std::copy(flat.begin(), flat.end(), m.data());
  return EmbeddingDataset(std::move(ids), std::move(m), std::move(payloads));
}

void save_embeddings(const EmbeddingDataset& data, const std::filesystem::path& path) {
  std::ofstream out;
  open_out(out, path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = data.vectors().row(i);
    json rec = {{"id", data.id(i)}, {"vector", std::vector<double>(row.begin(), row.end())}};
    if (data.payload(i)) rec["payload"] = *data.payload(i);
    out << rec.dump() << '\n';
  }
}

Clustering load_clustering(const std::filesystem::path& path, const EmbeddingDataset& data) {
  auto lines = read_cluster_lines(path);
  const std::size_t n = data.size();
  std::vector<std::optional<int>> hard(n);
  std::vector<std::optional<std::vector<double>>> soft(n);
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < lines.ids.size(); ++r) {
    const auto& [id, line] = lines.ids[r];
    auto i = data.find(id);
    if (!i) fail(ErrorKind::format, where(path, line) + "extra id '" + id + "' not in dataset");
    if (seen[*i]) fail(ErrorKind::format, where(path, line) + "duplicate id '" + id + "'");
    seen[*i] = true;
    if (lines.is_soft)
      soft[*i] = std::move(lines.soft[r]);
    else
      hard[*i] = lines.hard[r];
  }
  return assemble_clustering(std::move(hard), std::move(soft), lines.is_soft, data.ids(), path);
}

std::pair<std::vector<std::string>, Clustering> load_clustering_standalone(
    const std::filesystem::path& path) {
  auto lines = read_cluster_lines(path);
  const std::size_t n = lines.ids.size();
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> seen;
  std::vector<std::optional<int>> hard(n);
  std::vector<std::optional<std::vector<double>>> soft(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& [id, line] = lines.ids[r];
    if (!seen.emplace(id, r).second)
      fail(ErrorKind::format, where(path, line) + "duplicate id '" + id + "'");
    ids.push_back(id);
    if (lines.is_soft)
      soft[r] = std::move(lines.soft[r]);
    else
      hard[r] = lines.hard[r];
  }
  auto c = assemble_clustering(std::move(hard), std::move(soft), lines.is_soft, ids, path);
  return {std::move(ids), std::move(c)};
}

void save_clustering(const Clustering& c, const EmbeddingDataset& data,
                     const std::filesystem::path& path) {
  require(clustering_size(c) == data.size(), "clustering size does not match dataset");
  std::ofstream out;
  open_out(out, path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    json rec = {{"id", data.id(i)}};
    if (const auto* h = std::get_if<HardClustering>(&c))
      rec["cluster"] = h->assignment[i];
    else
      rec["distribution"] = cluster_distribution(c, i);
    out << rec.dump() << '\n';
  }
}

LabelStore load_labels(const std::filesystem::path& path, const EmbeddingDataset& data,
                       std::optional<int> num_classes) {
  struct Rec {
    std::size_t index;
    int label;
    bool human;
    std::size_t line;
  };
  std::vector<Rec> recs;
  std::vector<bool> seen(data.size(), false);
  int max_label = -1;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    auto id = get_id(rec, path, line);
    auto i = data.find(id);
    if (!i) fail(ErrorKind::format, where(path, line) + "id '" + id + "' not in dataset");
    if (seen[*i]) fail(ErrorKind::format, where(path, line) + "duplicate id '" + id + "'");
    seen[*i] = true;
    auto lit = rec.find("label");
    if (lit == rec.end() || !lit->is_number_integer() || lit->get<long long>() < 0)
      fail(ErrorKind::format, where(path, line) + "'label' must be a nonnegative integer");
    bool human = true;
    if (auto sit = rec.find("source"); sit != rec.end()) {
      if (*sit == "human")
        human = true;
      else if (*sit == "pseudo")
        human = false;
      else
        fail(ErrorKind::format, where(path, line) + "'source' must be \"human\" or \"pseudo\"");
    }
    const int label = lit->get<int>();
    max_label = std::max(max_label, label);
    recs.push_back({*i, label, human, line});
  });
  const int k = num_classes.value_or(std::max(1, max_label + 1));
  LabelStore store(k);
  std::map<std::size_t, int> pseudo;
  for (const auto& r : recs) {
    if (r.label >= k)
      fail(ErrorKind::format, where(path, r.line) + "label " + std::to_string(r.label) +
                                  " out of range for K_ref=" + std::to_string(k));
    if (r.human)
      store.add_human(r.index, r.label);
    else
      pseudo[r.index] = r.label;
  }
  store.set_pseudo(std::move(pseudo));
  return store;
}

void save_labels(const LabelStore& store, const EmbeddingDataset& data,
                 const std::filesystem::path& path) {
  std::ofstream out;
  open_out(out, path);
  auto write = [&](const std::map<std::size_t, int>& m, const char* source) {
    for (const auto& [i, y] : m)
      out << json{{"id", data.id(i)}, {"label", y}, {"source", source}}.dump() << '\n';
  };
  write(store.human(), "human");
  write(store.pseudo(), "pseudo");
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

std::vector<int> load_full_labels(const std::filesystem::path& path, const EmbeddingDataset& data) {
  auto store = load_labels(path, data);
  auto merged = store.merged();
  if (merged.size() != data.size())
    fail(ErrorKind::format, path.string() + ": labels cover " + std::to_string(merged.size()) +
                                " of " + std::to_string(data.size()) + " points");
  std::vector<int> out(data.size());
  for (const auto& [i, y] : merged) out[i] = y;
  return out;
}

}  // namespace cereal
