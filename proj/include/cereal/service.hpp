#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "json.hpp"

#include "cereal/pipeline.hpp"

namespace httplib {
class Server;
}

namespace cereal {

/// Environment variable that overrides the service state directory.
inline constexpr const char* kStateDirEnv = "CEREAL_STATE_DIR";

/// The flag value unless the environment variable is set.
std::filesystem::path resolve_state_dir(const std::filesystem::path& flag_value);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Annotation sessions backed by ActiveSession, persisted one JSON file per
/// session under the state directory. Mutations on one session are
/// serialized; reads take a shared lock and see a consistent snapshot.
class SessionService {
 public:
  /// Loads every session already persisted in state_dir.
  explicit SessionService(std::filesystem::path state_dir);

  /// body: {config, dataset, clustering, truth?}; paths are files on this host.
  ServiceResponse create(const nlohmann::json& body);
  ServiceResponse queries(const std::string& id) const;
  /// body: {labels: [{id, label}]}. All-or-nothing: any rejected item leaves
  /// the session untouched.
  ServiceResponse submit_labels(const std::string& id, const nlohmann::json& body);
  ServiceResponse curve(const std::string& id) const;
  ServiceResponse summary(const std::string& id) const;

  std::size_t session_count() const;
  const std::filesystem::path& state_dir() const noexcept { return state_dir_; }

  /// Registers the HTTP routes on server.
  void mount(httplib::Server& server);

 private:
  struct Entry {
    std::string id;
    std::string dataset_path;
    std::string clustering_path;
    std::optional<std::string> truth_path;
    std::optional<ActiveSession> session;
    mutable std::shared_mutex mutex;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::shared_ptr<Entry> open(const std::string& id, const std::string& dataset,
                              const std::string& clustering, const std::optional<std::string>& truth,
                              const std::optional<nlohmann::json>& state,
                              const std::optional<ExperimentConfig>& cfg);
  void persist(const Entry& e) const;
  nlohmann::json summary_of(const Entry& e) const;

  std::filesystem::path state_dir_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  long next_id_ = 1;
};

/// Blocks serving on host:port until the server is stopped.
void serve(SessionService& service, const std::string& host, int port);

}  // namespace cereal
