#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "gridmdp/harness.hpp"

namespace httplib {
class Server;
}

namespace gridmdp {

struct Reply {
    int status = 200;
    nlohmann::json body;
};

/// Episode registry behind the HTTP API. `handle` is transport-free so the
/// routes can be driven directly; `serve` binds it to a socket.
///
///   POST   /episodes                    {"scenario": NAME_OR_DIR}
///   GET    /episodes/{id}
///   POST   /episodes/{id}/step          {"action": ACTION}
///   POST   /episodes/{id}/simulate      {"action": ACTION}
///   POST   /episodes/{id}/agent-suggest {"agent": SPEC}
///   DELETE /episodes/{id}
///
/// Scenario names resolve to DATA_ROOT/scenarios/NAME.
class EpisodeService {
public:
    explicit EpisodeService(std::filesystem::path data_root, EnvConfig env_config = {}, ScoringConfig scoring = {});

    Reply handle(const std::string& method, const std::string& path, const std::string& body);

    Reply create(const nlohmann::json& body);
    Reply state(const std::string& id);
    Reply step(const std::string& id, const nlohmann::json& body);
    Reply simulate(const std::string& id, const nlohmann::json& body);
    Reply suggest(const std::string& id, const nlohmann::json& body);
    Reply remove(const std::string& id);

private:
    struct Episode;

    std::shared_ptr<Episode> find(const std::string& id);
    std::shared_ptr<const Scenario> scenario(const std::string& name);
    nlohmann::json state_json(const Episode& ep) const;

    std::filesystem::path data_root_;
    EnvConfig env_config_;
    ScoringConfig scoring_;
    std::mutex mutex_;  // guards the maps and the id counter
    std::map<std::string, std::shared_ptr<Episode>> episodes_;
    std::map<std::string, std::shared_ptr<const Scenario>> scenarios_;
    long next_id_ = 1;
};

/// Routes every request on `server` to `service`.
void bind_routes(httplib::Server& server, EpisodeService& service);

/// Blocks until the process is stopped.
void serve(EpisodeService& service, const std::string& host, int port);

}  // namespace gridmdp
