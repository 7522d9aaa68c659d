#pragma once

#include <memory>
#include <string>

#include "slicebench/benchmark_group.hpp"
#include "slicebench/registry.hpp"

namespace httplib {
class Server;
}

namespace slicebench {

struct ServiceConfig {
  std::string data_dir = "data";
  std::string host = "0.0.0.0";
  int port = 8080;
  bool fixture_mode = true;
  std::string fixture_path;  // sequence fixture for data views
  std::string endpoint_template;  // live sequence endpoint (fixture_mode off)
  std::string cache_dir;
  Registry::Clock clock;  // injectable for deterministic tests

  // JSON config file, then SLICEBENCH_* environment overrides
  // (PORT, DATA_DIR, FIXTURE_MODE, FIXTURE_PATH).
  static ServiceConfig load(const std::string& config_path);
  void apply_env();
};

class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();

  // Blocking listen on the configured host/port.
  bool run();
  // Binds an ephemeral port and returns it; pair with run_after_bind().
  int bind_any_port();
  bool run_after_bind();
  void stop();

  httplib::Server& server() { return *server_; }
  Registry& registry() { return registry_; }
  GroupStore& groups() { return groups_; }

 private:
  void install_routes();

  ServiceConfig cfg_;
  Registry registry_;
  GroupStore groups_;
  LeaderboardStore leaderboard_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace slicebench
