#pragma once

// Helpers shared by the harness tests and the acceptance suite: temporary
// workspaces, CLI invocation and a scripted annotator for the session service.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cereal/cli.hpp"
#include "cereal/service.hpp"

namespace harness {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cereal_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cereal::cli_run(args, out, err);
  return {code, out.str(), err.str()};
}

/// id -> label from a labels JSON-lines file.
inline std::map<std::string, int> read_label_map(const std::filesystem::path& path) {
  std::map<std::string, int> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) {
      const auto j = nlohmann::json::parse(line);
      out[j.at("id").get<std::string>()] = j.at("label").get<int>();
    }
  return out;
}

using CurvePoints = std::vector<std::pair<long, double>>;

/// Non-gap rows of a curve CSV.
inline CurvePoints read_curve_csv(const std::filesystem::path& path) {
  CurvePoints out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const auto next = line.find(',', comma + 1);
    const std::string est = line.substr(comma + 1, next == std::string::npos ? next : next - comma - 1);
    if (est.empty()) continue;
    out.emplace_back(std::stol(line.substr(0, comma)), std::stod(est));
  }
  return out;
}

inline CurvePoints curve_points(const nlohmann::json& curve) {
  CurvePoints out;
  for (const auto& p : curve.at("points"))
    out.emplace_back(p.at("labels_used").get<long>(), p.at("estimate").get<double>());
  return out;
}

/// Answers queried batches from the label map until the session is done or
/// max_batches batches were answered. Returns the number of batches answered.
inline int answer_batches(cereal::SessionService& service, const std::string& id,
                          const std::map<std::string, int>& truth, int max_batches = -1) {
  int batches = 0;
  while (max_batches < 0 || batches < max_batches) {
    const auto q = service.queries(id);
    if (q.status != 200 || q.body.at("status") == "done") break;
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& item : q.body.at("items")) {
      const auto sid = item.at("id").get<std::string>();
      labels.push_back({{"id", sid}, {"label", truth.at(sid)}});
    }
    const auto r = service.submit_labels(id, {{"labels", labels}});
    if (r.status != 200) break;
    ++batches;
  }
  return batches;
}

}  // namespace harness
