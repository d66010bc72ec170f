#include "retouch/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "retouch/errors.hpp"
#include "retouch/metrics.hpp"
#include "retouch/service.hpp"
#include "retouch/session.hpp"

namespace retouch {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

std::string env_or(const char* name, const std::string& fallback = {}) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

struct BackendFlags {
    std::string provider = "auto";
    std::string embed_endpoint;
    std::string chat_endpoint;
    std::string model = AgentBackendConfig{}.model;

    void add_to(CLI::App& cmd, bool with_chat) {
        cmd.add_option("--provider", provider, "Style distribution provider")
            ->check(CLI::IsMember({"auto", "stats", "embed"}));
        cmd.add_option("--embed-endpoint", embed_endpoint, "Embedding service URL (default $RETOUCH_EMBED_ENDPOINT)");
        if (with_chat) {
            cmd.add_option("--chat-endpoint", chat_endpoint, "Chat-completion URL (default $RETOUCH_CHAT_ENDPOINT)");
            cmd.add_option("--model", model, "Chat model name");
        }
    }

    std::shared_ptr<const DistributionProvider> make_provider(std::ostream& err) const {
        const std::string url = embed_endpoint.empty() ? env_or("RETOUCH_EMBED_ENDPOINT") : embed_endpoint;
        if (provider == "stats" || (provider == "auto" && url.empty())) {
            if (provider == "auto") err << "note: no embedding endpoint configured, scoring with image statistics\n";
            return std::make_shared<StatsProvider>();
        }
        if (url.empty()) throw ConfigError("--provider embed needs --embed-endpoint or RETOUCH_EMBED_ENDPOINT");
        return std::make_shared<EmbeddingProvider>(std::make_shared<HttpEmbeddingBackend>(url));
    }

    AgentBackendConfig chat_config() const {
        AgentBackendConfig config;
        config.endpoint = chat_endpoint.empty() ? env_or("RETOUCH_CHAT_ENDPOINT") : chat_endpoint;
        config.model = model;
        return config;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunFlags {
    std::string source;
    std::vector<std::string> refs;
    int iters = 10;
    int candidates = 3;
    std::string score = "clip-kl-global";
    std::string agent = "rule";
    std::string out = "out.png";
    std::string program_out;
    std::string session_out;
    bool no_warm_start = false;
    std::uint64_t seed = 0;
    BackendFlags backend;
};

int cmd_run(const RunFlags& f, std::ostream& err) {
    SessionConfig config;
    config.max_iters = f.iters;
    config.n_candidates = f.candidates;
    config.score = score_kind_from_name(f.score);
    config.agent = agent_kind_from_name(f.agent);
    config.warm_start = !f.no_warm_start;
    config.seed = f.seed;
    config.n_refs = static_cast<int>(f.refs.size());
    config.validate();
    if (f.refs.size() != 5) err << "note: " << f.refs.size() << " references given, 5 expected\n";

    const AgentSet agents = config.agent == AgentKind::Rule
                                ? make_rule_agents()
                                : make_chat_agents(std::make_shared<HttpChatBackend>(f.backend.chat_config()),
                                                   f.backend.chat_config());
    auto provider = f.backend.make_provider(err);

    std::vector<std::string> warnings;
    auto source = load_image(f.source, &warnings);
    std::vector<ImageBuffer> refs;
    for (const auto& r : f.refs) refs.push_back(load_image(r, &warnings));
    for (const auto& w : warnings) err << "warning: " << w << "\n";

    const auto depth = source.source_depth();
    auto result = run_session(std::move(source), std::move(refs), config, agents, provider);
    save_image(result.final_image, f.out, depth);
    if (!f.program_out.empty()) write_text(f.program_out, serialize_program(result.composed));
    if (!f.session_out.empty()) export_session(result.state, f.session_out);
    err << "status: " << status_name(result.state.status) << ", iterations: " << result.state.history.size()
        << ", steps: " << result.composed.steps.size() << "\n";
    return kExitOk;
}

int cmd_apply(const std::string& program_path, const std::string& input, const std::string& output) {
    const auto text = read_text(program_path);
    const auto program = parse_program_any(text);
    const auto img = load_image(input);
    save_image(execute_program(img, program), output, img.source_depth());
    return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, std::ostream& out) {
    const auto report = evaluate(load_image(pred), load_image(gt));
    nlohmann::ordered_json doc = {{"psnr", report.psnr}, {"ssim", report.ssim}, {"delta_e", report.delta_e}};
    out << doc.dump() << "\n";
    return kExitOk;
}

int cmd_pairs(const std::string& dir, int m, const std::string& out_path, const BackendFlags& backend,
              std::ostream& out, std::ostream& err) {
    if (m < 1) throw ConfigError("--m must be >= 1");
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (entry.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());
    auto provider = backend.make_provider(err);
    std::vector<ImageBuffer> images;
    for (const auto& p : files) images.push_back(load_image(p));
    const auto pairs = build_reference_pairs(images, *provider, PromptSet::global_only(), static_cast<std::size_t>(m));

    nlohmann::ordered_json doc;
    doc["m"] = m;
    nlohmann::ordered_json map = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto names = nlohmann::ordered_json::array();
        for (auto j : pairs[i]) names.push_back(files[j].filename().string());
        map[files[i].filename().string()] = std::move(names);
    }
    doc["pairs"] = std::move(map);
    if (out_path.empty()) {
        out << doc.dump(2) << "\n";
    } else {
        write_text(out_path, doc.dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_serve(const std::string& host, int port, const std::string& persist, const BackendFlags& backend,
              std::ostream& err) {
    ServiceOptions options;
    options.provider = backend.make_provider(err);
    options.agent_factory = default_agent_factory(backend.chat_config());
    if (!persist.empty()) options.persist_dir = persist;
    RetouchService service(std::move(options));
    const int bound = service.bind(host, port);
    err << "listening on http://" << host << ":" << bound << "\n";
    service.listen();
    return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"White-box photo retouching driven by reference images or instructions"};
    app.require_subcommand(1);

    RunFlags run;
    auto* run_cmd = app.add_subcommand("run", "Retouch a source image towards a set of references");
    run_cmd->add_option("--source", run.source, "Source image")->required();
    run_cmd->add_option("--ref", run.refs, "Reference image (repeat, 5 expected)")->required();
    run_cmd->add_option("--iters", run.iters, "Iteration budget");
    run_cmd->add_option("--candidates", run.candidates, "Candidates per iteration");
    run_cmd->add_option("--score", run.score, "Selection score")
        ->check(CLI::IsMember({"clip-kl-global", "clip-kl-all", "rgb-hist", "yuv-hist"}));
    run_cmd->add_option("--agent", run.agent, "Agent implementation")->check(CLI::IsMember({"rule", "chat"}));
    run_cmd->add_option("--out", run.out, "Output image (PNG)");
    run_cmd->add_option("--program-out", run.program_out, "Write the composed program here");
    run_cmd->add_option("--session-out", run.session_out, "Export the session transcript into this directory");
    run_cmd->add_flag("--no-warm-start", run.no_warm_start, "Disable the warm-start candidate");
    run_cmd->add_option("--seed", run.seed, "Seed for stochastic agents");
    run.backend.add_to(*run_cmd, true);

    std::string program_path, apply_in, apply_out;
    auto* apply_cmd = app.add_subcommand("apply", "Apply a saved program to an image");
    apply_cmd->add_option("--program", program_path, "Program file (.retouch.json or filter calls)")->required();
    apply_cmd->add_option("--input", apply_in, "Input image")->required();
    apply_cmd->add_option("--output", apply_out, "Output image (PNG)")->required();

    std::string pred, gt;
    auto* eval_cmd = app.add_subcommand("eval", "Compare a prediction with ground truth");
    eval_cmd->add_option("--pred", pred, "Predicted image")->required();
    eval_cmd->add_option("--gt", gt, "Ground-truth image")->required();

    std::string pairs_dir, pairs_out;
    int pairs_m = 5;
    BackendFlags pairs_backend;
    auto* pairs_cmd = app.add_subcommand("pairs", "Pick the most style-similar references for every image");
    pairs_cmd->add_option("--dir", pairs_dir, "Directory of images")->required();
    pairs_cmd->add_option("--m", pairs_m, "References per image");
    pairs_cmd->add_option("--out", pairs_out, "Output JSON (default stdout)");
    pairs_backend.add_to(*pairs_cmd, false);

    std::string host = "127.0.0.1", persist;
    int port = 8080;
    BackendFlags serve_backend;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
    serve_cmd->add_option("--persist", persist, "Mirror sessions into this directory");
    serve_backend.add_to(*serve_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(run, err);
        if (*apply_cmd) return cmd_apply(program_path, apply_in, apply_out);
        if (*eval_cmd) return cmd_eval(pred, gt, out);
        if (*pairs_cmd) return cmd_pairs(pairs_dir, pairs_m, pairs_out, pairs_backend, out, err);
        if (*serve_cmd) return cmd_serve(host, port, persist, serve_backend, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParamOutOfRange& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EmptyReferenceSet& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BackendError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitConfig;
}

}  // namespace retouch
