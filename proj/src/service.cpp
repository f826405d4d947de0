#include "cereal/service.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "httplib.h"

#include "cereal/error.hpp"
#include "cereal/io.hpp"

namespace cereal {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve_state_dir(const fs::path& flag_value) {
  if (const char* env = std::getenv(kStateDirEnv); env != nullptr && *env != '\0') return env;
  return flag_value;
}

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::invalid_argument:
    case ErrorKind::format:
    case ErrorKind::io: return 400;
  }
  return 500;
}

ServiceResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

template <class F>
ServiceResponse guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return error_response(http_status(e.kind()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  }
}

void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out << text;
    if (!out.flush()) fail(ErrorKind::io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

SessionService::SessionService(fs::path state_dir) : state_dir_(std::move(state_dir)) {
  fs::create_directories(state_dir_);
  std::set<fs::path> files;
  for (const auto& entry : fs::directory_iterator(state_dir_))
    if (entry.path().extension() == ".json") files.insert(entry.path());
  for (const auto& path : files) {
    std::ifstream in(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::format, path.string() + ": corrupt session file: " + e.what());
    }
    const auto id = j.at("session_id").get<std::string>();
    std::optional<std::string> truth;
    if (j.contains("truth") && !j["truth"].is_null()) truth = j["truth"].get<std::string>();
    sessions_[id] = open(id, j.at("dataset").get<std::string>(),
                         j.at("clustering").get<std::string>(), truth, j.at("state"), std::nullopt);
    if (id.size() > 1 && id[0] == 's')
      next_id_ = std::max(next_id_, std::strtol(id.c_str() + 1, nullptr, 10) + 1);
  }
}

std::shared_ptr<SessionService::Entry> SessionService::open(
    const std::string& id, const std::string& dataset, const std::string& clustering,
    const std::optional<std::string>& truth, const std::optional<json>& state,
    const std::optional<ExperimentConfig>& cfg) {
  auto data = std::make_shared<const EmbeddingDataset>(load_embeddings(dataset));
  auto test = std::make_shared<const Clustering>(load_clustering(clustering, *data));
  std::optional<std::vector<int>> truth_labels;
  if (truth) truth_labels = load_full_labels(*truth, *data);
  auto e = std::make_shared<Entry>();
  e->id = id;
  e->dataset_path = dataset;
  e->clustering_path = clustering;
  e->truth_path = truth;
  if (state)
    e->session.emplace(ActiveSession::from_json(*state, data, test, truth_labels));
  else
    e->session.emplace(data, test, *cfg, truth_labels);
  return e;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorKind::not_found, "unknown session '" + id + "'");
  return it->second;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(registry_mutex_);
  return sessions_.size();
}

void SessionService::persist(const Entry& e) const {
  json j = {{"session_id", e.id},
            {"dataset", e.dataset_path},
            {"clustering", e.clustering_path},
            {"truth", e.truth_path ? json(*e.truth_path) : json(nullptr)},
            {"state", e.session->to_json()}};
  write_atomically(state_dir_ / (e.id + ".json"), j.dump());
}

json SessionService::summary_of(const Entry& e) const {
  const auto& s = *e.session;
  const auto& data = s.dataset();
  json pending = json::array();
  for (std::size_t i : s.pending()) pending.push_back(data.id(i));
  json received = json::array();
  for (const auto& [i, y] : s.received()) received.push_back({{"id", data.id(i)}, {"label", y}});
  json out = {{"session_id", e.id},
              {"dataset", e.dataset_path},
              {"clustering", e.clustering_path},
              {"config", s.config()},
              {"status", status_name(s.status())},
              {"round", s.round() + 1},
              {"labels_used", s.labels_used()},
              {"budget", s.config().budget},
              {"pending", pending},
              {"submitted", received},
              {"human_labels", s.labels().human().size()},
              {"pseudo_labels", s.labels().pseudo().size()},
              {"num_classes", s.config().k_ref},
              {"current_estimate", nullptr},
              {"payloads_available", data.has_payloads()}};
  if (auto est = s.current_estimate()) out["current_estimate"] = *est;
  if (!data.has_payloads())
    out["warning"] = "dataset has no payloads; items cannot be shown to a human annotator";
  return out;
}

ServiceResponse SessionService::create(const json& body) {
  return guarded([&]() -> ServiceResponse {
    if (!body.is_object()) fail(ErrorKind::format, "request body must be a JSON object");
    ExperimentConfig cfg = body.contains("config") ? body["config"].get<ExperimentConfig>()
                                                   : ExperimentConfig{};
    const auto dataset = body.at("dataset").get<std::string>();
    const auto clustering = body.at("clustering").get<std::string>();
    std::optional<std::string> truth;
    if (body.contains("truth") && !body["truth"].is_null()) truth = body["truth"].get<std::string>();
    if (cfg.k_ref == 0 && truth) {
      const auto data = load_embeddings(dataset);
      const auto labels = load_full_labels(*truth, data);
      cfg.k_ref = 1 + *std::max_element(labels.begin(), labels.end());
    }
    auto e = open("", dataset, clustering, truth, std::nullopt, cfg);
    // ids are only issued to sessions that opened successfully
    std::lock_guard lock(registry_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04ld", next_id_);
    e->id = buf;
    persist(*e);
    ++next_id_;
    sessions_[e->id] = e;
    return {201, summary_of(*e)};
  });
}

ServiceResponse SessionService::queries(const std::string& id) const {
  return guarded([&]() -> ServiceResponse {
    auto e = find(id);
    std::shared_lock lock(e->mutex);
    const auto& s = *e->session;
    json items = json::array();
    for (std::size_t i : s.pending()) {
      if (s.received().contains(i)) continue;
      const auto& payload = s.dataset().payload(i);
      items.push_back({{"id", s.dataset().id(i)},
                       {"payload", payload ? json(*payload) : json(nullptr)}});
    }
    return {200, json{{"session_id", id},
                      {"round", s.round() + 1},
                      {"status", status_name(s.status())},
                      {"batch_size", s.pending().size()},
                      {"items", items}}};
  });
}

ServiceResponse SessionService::submit_labels(const std::string& id, const json& body) {
  return guarded([&]() -> ServiceResponse {
    auto e = find(id);
    std::unique_lock lock(e->mutex);
    auto& s = *e->session;
    const auto& data = s.dataset();
    const json& labels = body.at("labels");
    if (!labels.is_array()) fail(ErrorKind::format, "'labels' must be an array");
    if (s.status() != SessionStatus::awaiting_labels)
      fail(ErrorKind::conflict, "session is " + status_name(s.status()));

    std::vector<std::pair<std::size_t, int>> items;
    std::map<std::size_t, int> seen = s.received();
    for (const auto& item : labels) {
      const auto name = item.at("id").get<std::string>();
      const int label = item.at("label").get<int>();
      const auto pos = data.find(name);
      if (!pos || std::find(s.pending().begin(), s.pending().end(), *pos) == s.pending().end())
        fail(ErrorKind::conflict, "point '" + name + "' is not pending");
      if (label < 0 || label >= s.config().k_ref)
        fail(ErrorKind::invalid_argument, "label " + std::to_string(label) + " for '" + name +
                                              "' outside [0, " +
                                              std::to_string(s.config().k_ref) + ")");
      if (auto [it, fresh] = seen.emplace(*pos, label); !fresh && it->second != label)
        fail(ErrorKind::conflict, "point '" + name + "' already labeled differently");
      items.emplace_back(*pos, label);
    }
    bool advanced = false;
    for (const auto& [pos, label] : items) advanced = s.submit(pos, label) || advanced;
    persist(*e);
    json out = {{"status", status_name(s.status())},
                {"labels_used", s.labels_used()},
                {"round", s.round() + 1},
                {"advanced", advanced},
                {"remaining_in_batch", s.pending().size() - s.received().size()},
                {"estimate", nullptr}};
    if (auto est = s.current_estimate()) out["estimate"] = *est;
    return {200, out};
  });
}

ServiceResponse SessionService::curve(const std::string& id) const {
  return guarded([&]() -> ServiceResponse {
    auto e = find(id);
    std::shared_lock lock(e->mutex);
    const auto& c = e->session->curve();
    json points = json::array();
    for (const auto& p : c.points)
      points.push_back({{"labels_used", p.labels_used}, {"estimate", p.estimate}});
    json out = {{"session_id", id}, {"points", points}, {"true_value", nullptr}};
    if (c.true_value) out["true_value"] = *c.true_value;
    return {200, out};
  });
}

ServiceResponse SessionService::summary(const std::string& id) const {
  return guarded([&]() -> ServiceResponse {
    auto e = find(id);
    std::shared_lock lock(e->mutex);
    return {200, summary_of(*e)};
  });
}

void SessionService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
    res.set_header("Access-Control-Allow-Origin", "*");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return json::parse(req.body);
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };
  server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    reply(res, body ? create(*body) : error_response(400, "request body is not JSON"));
  });
  server.Get(R"(/sessions/([^/]+)/queries)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, queries(req.matches[1]));
             });
  server.Post(R"(/sessions/([^/]+)/labels)",
              [=, this](const httplib::Request& req, httplib::Response& res) {
                auto body = parse(req);
                reply(res, body ? submit_labels(req.matches[1], *body)
                                : error_response(400, "request body is not JSON"));
              });
  server.Get(R"(/sessions/([^/]+)/curve)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, curve(req.matches[1]));
             });
  server.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, summary(req.matches[1]));
  });
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_exception_handler(
      [=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        reply(res, error_response(500, what));
      });
}

void serve(SessionService& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port))
    fail(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace cereal
