#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "retouch/scoring.hpp"
#include "retouch/session.hpp"

namespace retouch {

struct ServiceOptions {
    std::shared_ptr<const DistributionProvider> provider;
    // Builds the agents for a new session; may throw ConfigError.
    std::function<AgentSet(AgentKind)> agent_factory;
    // When set, every session is mirrored to <persist_dir>/<id>/ after each change.
    std::optional<std::filesystem::path> persist_dir;
    SessionConfig defaults;
};

/// HTTP front end over in-memory sessions.
///
/// Routes: POST /sessions, GET /sessions/{id}, POST /sessions/{id}/step,
/// POST /sessions/{id}/instruction, POST /sessions/{id}/select,
/// GET /sessions/{id}/images/{key}, GET /sessions/{id}/program, GET /healthz.
/// Mutations of one session are serialized; concurrent requests queue.
class RetouchService {
public:
    explicit RetouchService(ServiceOptions options);
    ~RetouchService();
    RetouchService(const RetouchService&) = delete;
    RetouchService& operator=(const RetouchService&) = delete;

    // Returns the bound port (port 0 picks a free one). Throws IoError.
    int bind(const std::string& host, int port);
    // Serves on the bound socket until stop() is called.
    void listen();
    // bind() + listen() on a background thread; returns the port.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Default factory: rule agents, or chat agents configured from the environment.
std::function<AgentSet(AgentKind)> default_agent_factory(AgentBackendConfig chat_config);

}  // namespace retouch
