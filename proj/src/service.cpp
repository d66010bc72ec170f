#include "retouch/service.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "retouch/errors.hpp"

namespace retouch {

namespace {

using nlohmann::json;

struct HttpError {
    int status;
    std::string message;
    bool retryable = false;
};

struct SessionEntry {
    std::mutex mutex;
    SessionState state;
    AgentSet agents;
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
    json body = {{"error", e.message}};
    if (e.status == 502) body["retryable"] = e.retryable;
    send_json(res, e.status, body);
}

// Maps library errors onto the HTTP contract.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const HttpError& e) {
        send_error(res, e);
    } catch (const WrongState& e) {
        send_error(res, {409, e.what()});
    } catch (const AgentFailure& e) {
        send_error(res, {502, e.what(), true});
    } catch (const BackendError& e) {
        send_error(res, {502, e.what(), true});
    } catch (const Error& e) {
        send_error(res, {422, e.what()});
    } catch (const std::invalid_argument& e) {
        send_error(res, {422, e.what()});
    } catch (const std::exception& e) {
        send_error(res, {500, e.what()});
    }
}

json parse_body(const httplib::Request& req) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw HttpError{422, "request body must be a JSON object"};
        return body;
    } catch (const json::parse_error&) {
        throw HttpError{422, "request body is not valid JSON"};
    }
}

std::string new_session_id() {
    static std::mutex mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                  static_cast<unsigned long long>(rng()));
    return buf;
}

int parse_int_field(const std::string& name, const std::string& text) {
    int value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) throw HttpError{422, "field '" + name + "' must be an integer"};
    return value;
}

bool parse_bool_field(const std::string& name, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw HttpError{422, "field '" + name + "' must be a boolean"};
}

ImageBuffer decode_part(const httplib::MultipartFormData& part) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(part.content.data());
    try {
        return decode_image({bytes, part.content.size()});
    } catch (const DecodeError& e) {
        throw HttpError{422, "cannot decode '" + part.name + "': " + e.what()};
    }
}

}  // namespace

struct RetouchService::Impl {
    ServiceOptions options;
    httplib::Server server;
    std::thread thread;
    std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions;

    std::shared_ptr<SessionEntry> find(const std::string& id) {
        std::lock_guard lock(sessions_mutex);
        const auto it = sessions.find(id);
        if (it == sessions.end()) throw HttpError{404, "unknown session " + id};
        return it->second;
    }

    static std::string image_prefix(const std::string& id) { return "/sessions/" + id + "/images/"; }

    json transcript(const std::string& id, const SessionState& state) const {
        return json::parse(session_transcript(state, image_prefix(id)));
    }

    void persist(const std::string& id, const SessionState& state) const {
        if (options.persist_dir) export_session(state, *options.persist_dir / id);
    }

    void create(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) throw HttpError{422, "expected multipart/form-data"};
        if (!req.has_file("source")) throw HttpError{422, "missing 'source' image"};
        SessionConfig config = options.defaults;
        auto text = [&](const std::string& key) -> std::optional<std::string> {
            if (!req.has_file(key)) return std::nullopt;
            return req.get_file_value(key).content;
        };
        try {
            if (auto v = text("mode")) config.mode = mode_from_name(*v);
            if (auto v = text("agent")) config.agent = agent_kind_from_name(*v);
            if (auto v = text("score")) config.score = score_kind_from_name(*v);
        } catch (const ConfigError& e) {
            throw HttpError{422, e.what()};
        }
        if (auto v = text("max_iters")) config.max_iters = parse_int_field("max_iters", *v);
        if (auto v = text("n_candidates")) config.n_candidates = parse_int_field("n_candidates", *v);
        if (auto v = text("warm_start")) config.warm_start = parse_bool_field("warm_start", *v);
        if (auto v = text("seed")) config.seed = static_cast<std::uint64_t>(parse_int_field("seed", *v));

        auto source = decode_part(req.get_file_value("source"));
        std::vector<ImageBuffer> refs;
        for (const char* key : {"refs", "refs[]"}) {
            for (const auto& part : req.get_file_values(key)) refs.push_back(decode_part(part));
        }

        auto entry = std::make_shared<SessionEntry>();
        if (config.mode == SessionMode::Reference) {
            if (refs.empty()) throw HttpError{422, "reference mode needs at least one 'refs' image"};
            config.n_refs = static_cast<int>(refs.size());
            entry->state = start_reference_session(std::move(source), std::move(refs), config, options.provider);
        } else {
            entry->state = start_instruction_session(std::move(source), config);
        }
        try {
            entry->agents = options.agent_factory(config.agent);
        } catch (const ConfigError& e) {
            throw HttpError{422, e.what()};
        }
        if (config.mode == SessionMode::Instruction && !entry->agents.critic->supports_instructions()) {
            throw HttpError{422, "instruction mode needs chat agents"};
        }

        std::string id;
        {
            std::lock_guard lock(sessions_mutex);
            do {
                id = new_session_id();
            } while (sessions.count(id));
            sessions.emplace(id, entry);
        }
        std::lock_guard lock(entry->mutex);
        persist(id, entry->state);
        send_json(res, 201, {{"session_id", id}, {"state", transcript(id, entry->state)}});
    }

    void get_state(const std::string& id, httplib::Response& res) {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        send_json(res, 200, transcript(id, entry->state));
    }

    void step(const std::string& id, httplib::Response& res) {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        run_iteration(entry->state, entry->agents);
        persist(id, entry->state);
        auto doc = transcript(id, entry->state);
        send_json(res, 200, {{"iteration_record", doc["history"].back()}, {"status", doc["status"]}});
    }

    void instruction(const std::string& id, const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body.contains("text") || !body["text"].is_string() || body["text"].get<std::string>().empty()) {
            throw HttpError{422, "body needs a non-empty 'text' string"};
        }
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        interactive_step(entry->state, body["text"].get<std::string>(), entry->agents);
        persist(id, entry->state);
        auto doc = transcript(id, entry->state);
        json candidates = json::array();
        for (const auto& c : doc["history"].back()["candidates"]) {
            candidates.push_back({{"index", c["index"]}, {"image_url", c["image"]}, {"program", c["program"]}});
        }
        send_json(res, 200, {{"candidates", candidates}, {"status", doc["status"]}});
    }

    void select(const std::string& id, const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body.contains("index") || !body["index"].is_number_integer()) {
            throw HttpError{422, "body needs an integer 'index'"};
        }
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        if (entry->state.status != SessionStatus::AwaitingUser) {
            throw HttpError{409, "session is " + std::string(status_name(entry->state.status)) +
                                     ", not awaiting a selection"};
        }
        try {
            user_select(entry->state, body["index"].get<int>());
        } catch (const IndexError& e) {
            throw HttpError{422, e.what()};
        }
        persist(id, entry->state);
        send_json(res, 200, {{"state", transcript(id, entry->state)}});
    }

    void image(const std::string& id, const std::string& key, httplib::Response& res) {
        auto entry = find(id);
        ImagePtr img;
        {
            std::lock_guard lock(entry->mutex);
            img = find_image(entry->state, key);
        }
        if (!img) throw HttpError{404, "unknown image " + key};
        const auto png = encode_png(*img);
        res.status = 200;
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    }

    void program(const std::string& id, httplib::Response& res) {
        auto entry = find(id);
        std::string text;
        {
            std::lock_guard lock(entry->mutex);
            text = serialize_program(entry->state.composed);
        }
        res.status = 200;
        res.set_content(text, "application/json");
    }

    void routes() {
        server.set_payload_max_length(std::size_t{512} << 20);
        server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { create(req, res); });
        });
        server.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { get_state(req.matches[1], res); });
        });
        server.Post(R"(/sessions/([0-9a-f]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { step(req.matches[1], res); });
        });
        server.Post(R"(/sessions/([0-9a-f]+)/instruction)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        guarded(res, [&] { instruction(req.matches[1], req, res); });
                    });
        server.Post(R"(/sessions/([0-9a-f]+)/select)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { select(req.matches[1], req, res); });
        });
        server.Get(R"(/sessions/([0-9a-f]+)/images/([A-Za-z0-9-]+))",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] { image(req.matches[1], req.matches[2], res); });
                   });
        server.Get(R"(/sessions/([0-9a-f]+)/program)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { program(req.matches[1], res); });
        });
    }
};

RetouchService::RetouchService(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
    if (!options.provider) throw ConfigError("service needs a distribution provider");
    if (!options.agent_factory) throw ConfigError("service needs an agent factory");
    options.defaults.validate();
    impl_->options = std::move(options);
    impl_->routes();
}

RetouchService::~RetouchService() {
    stop();
}

int RetouchService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void RetouchService::listen() {
    impl_->server.listen_after_bind();
}

int RetouchService::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void RetouchService::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::function<AgentSet(AgentKind)> default_agent_factory(AgentBackendConfig chat_config) {
    return [chat_config = std::move(chat_config)](AgentKind kind) {
        if (kind == AgentKind::Rule) return make_rule_agents();
        auto backend = std::make_shared<HttpChatBackend>(chat_config);
        return make_chat_agents(std::move(backend), chat_config);
    };
}

}  // namespace retouch
