#include "retouch/agents.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <regex>

#include "http_endpoint.hpp"
#include "prompts.hpp"
#include "retouch/errors.hpp"

namespace retouch {

namespace {

void replace_all(std::string& text, std::string_view key, std::string_view value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
}

std::string format_scores(const std::optional<ScoreSummary>& s) {
    if (!s) return "PSNR n/a, SSIM n/a, LPIPS n/a, Delta E n/a";
    char buf[160];
    std::snprintf(buf, sizeof buf, "PSNR %.2f, SSIM %.4f, LPIPS n/a, Delta E %.2f", s->psnr, s->ssim, s->delta_e);
    return buf;
}

std::string candidate_blocks(int n) {
    static constexpr const char* ordinals[] = {"first", "second", "third", "fourth", "fifth",
                                               "sixth", "seventh", "eighth", "ninth", "tenth"};
    std::string out;
    for (int i = 1; i <= n; ++i) {
        out += "\nCandidate " + std::to_string(i) + "\n[Description of the ";
        out += i <= 10 ? ordinals[i - 1] : (std::to_string(i) + "th");
        out += " candidate]\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

}  // namespace

void CriticRequest::validate() const {
    if (!source) throw PreconditionError("critic request without a source image");
    const bool has_refs = !refs.empty();
    const bool has_instruction = instruction.has_value();
    if (has_refs == has_instruction) {
        throw PreconditionError("critic request needs exactly one of references or an instruction");
    }
    if (n_candidates < 1) throw PreconditionError("critic request needs n_candidates >= 1");
}

void AgentBackendConfig::validate() const {
    if (timeout.count() <= 0) throw ConfigError("agent backend timeout must be positive");
    if (endpoint.empty()) throw ConfigError("agent backend endpoint is not configured");
    detail::split_endpoint(endpoint);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                        static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::string build_chat_request(const std::vector<ChatMessage>& messages, std::string_view model, double temperature) {
    nlohmann::ordered_json doc;
    doc["model"] = model;
    doc["temperature"] = temperature;
    doc["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : messages) {
        nlohmann::ordered_json msg;
        msg["role"] = m.role;
        if (m.png_images.empty()) {
            msg["content"] = m.text;
        } else {
            auto parts = nlohmann::ordered_json::array();
            parts.push_back({{"type", "text"}, {"text", m.text}});
            for (const auto& png : m.png_images) {
                parts.push_back({{"type", "image_url"},
                                 {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
            }
            msg["content"] = std::move(parts);
        }
        doc["messages"].push_back(std::move(msg));
    }
    return doc.dump();
}

std::string extract_chat_reply(std::string_view response_body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(response_body);
    } catch (const nlohmann::json::parse_error&) {
        throw BackendError("chat backend returned invalid JSON");
    }
    try {
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        std::string text;
        for (const auto& part : content) {
            if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
        }
        return text;
    } catch (const nlohmann::json::exception&) {
        throw BackendError("chat backend response has no choices[0].message.content");
    }
}

HttpChatBackend::HttpChatBackend(AgentBackendConfig config) : config_(std::move(config)) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) {
        throw ConfigError("chat agents need an API key in the environment variable " + config_.api_key_env);
    }
    api_key_ = key;
    config_.validate();
}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& messages, double temperature) {
    const auto endpoint = detail::split_endpoint(config_.endpoint);
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    client.set_bearer_token_auth(api_key_);
    const auto res = client.Post(endpoint.path.empty() ? "/" : endpoint.path,
                                 build_chat_request(messages, config_.model, temperature), "application/json");
    if (!res) throw BackendError("chat backend unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendError("chat backend returned HTTP " + std::to_string(res->status));
    return extract_chat_reply(res->body);
}

std::string critic_system_prompt(bool instruction_mode) {
    return std::string(instruction_mode ? prompts::kCriticTaskInstruction : prompts::kCriticTaskReference) +
           prompts::kCriticBody;
}

std::string critic_user_prompt(const CriticRequest& req) {
    const bool instruction_mode = req.instruction.has_value();
    std::string text = instruction_mode ? prompts::kCriticUserInstruction : prompts::kCriticUserReference;
    replace_all(text, "{n}", std::to_string(req.n_candidates));
    replace_all(text, "{range_list}", range_list_text());
    replace_all(text, "{source_stats}", format_stats(req.source_stats));
    if (instruction_mode) {
        std::string history;
        for (std::size_t i = 0; i < req.history.size(); ++i) {
            history += "- Step " + std::to_string(i + 1) + ": " + format_stats(req.history[i]) + "\n";
        }
        if (history.empty()) history = "(none)\n";
        history.pop_back();
        replace_all(text, "{history}", history);
        replace_all(text, "{instruction}", *req.instruction);
    } else {
        replace_all(text, "{target_stats}", req.ref_stats_mean ? format_stats(*req.ref_stats_mean) : "n/a");
        replace_all(text, "{scores}", format_scores(req.score_summary));
    }
    return text + candidate_blocks(req.n_candidates);
}

std::string codegen_system_prompt() {
    return prompts::kCodegenSystem;
}

std::string codegen_user_prompt(const DifferenceDescription& desc, std::string_view save_name) {
    std::string text = prompts::kCodegenUser;
    std::string description = desc.raw_text;
    while (!description.empty() && (description.back() == '\n' || description.back() == ' ')) description.pop_back();
    replace_all(text, "{save_adj_img_name}", save_name);
    replace_all(text, "{description}", description);
    return text;
}

std::vector<std::string> split_candidates(std::string_view reply) {
    static const std::regex header(R"(^[\s#*]*candidate\s*(\d+)\b.*$)", std::regex::icase);
    std::vector<std::string> blocks;
    std::string current;
    bool inside = false;
    std::size_t start = 0;
    while (start <= reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string_view::npos) end = reply.size();
        const std::string line(reply.substr(start, end - start));
        if (std::regex_match(line, header)) {
            if (inside) blocks.push_back(std::move(current));
            current.clear();
            inside = true;
        } else if (inside) {
            current += line;
            current += '\n';
        }
        start = end + 1;
    }
    if (inside) blocks.push_back(std::move(current));
    return blocks;
}

std::vector<DifferenceDescription> parse_critic_reply(std::string_view reply, int n) {
    auto blocks = split_candidates(reply);
    if (blocks.empty()) blocks.emplace_back(reply);
    std::vector<DifferenceDescription> out;
    for (const auto& block : blocks) {
        if (static_cast<int>(out.size()) == n) break;
        out.push_back(parse_description(block));
    }
    if (static_cast<int>(out.size()) < n) {
        const bool all_stop = std::all_of(out.begin(), out.end(),
                                          [](const DifferenceDescription& d) { return d.overall == Overall::Stop; });
        if (!all_stop) {
            throw DescriptionParseError("expected " + std::to_string(n) + " candidate descriptions, got " +
                                        std::to_string(out.size()));
        }
        const DifferenceDescription stop = out.front();
        out.resize(static_cast<std::size_t>(n), stop);
    }
    return out;
}

CriticResult critic_describe(ChatBackend& backend, const AgentBackendConfig& config, const CriticRequest& req) {
    req.validate();
    const bool instruction_mode = req.instruction.has_value();
    ChatMessage system{"system", critic_system_prompt(instruction_mode), {}};
    ChatMessage user{"user", critic_user_prompt(req), {}};
    user.png_images.push_back(encode_png(thumbnail(*req.source, config.max_image_side)));
    for (const auto& ref : req.refs) user.png_images.push_back(encode_png(thumbnail(*ref, config.max_image_side)));
    const std::vector<ChatMessage> messages = {system, user};

    CriticResult result;
    std::string last_error;
    for (std::size_t attempt = 0; attempt < config.temperatures.size(); ++attempt) {
        result.attempts = static_cast<int>(attempt + 1);
        result.replies.push_back(backend.complete(messages, config.temperatures[attempt]));
        try {
            result.descriptions = parse_critic_reply(result.replies.back(), req.n_candidates);
            return result;
        } catch (const DescriptionParseError& e) {
            last_error = e.what();
        }
    }
    throw AgentFailure("visual critic produced no parseable reply after " +
                           std::to_string(config.temperatures.size()) + " attempts: " + last_error,
                       static_cast<int>(config.temperatures.size()));
}

CodegenResult codegen_generate(ChatBackend& backend, const AgentBackendConfig& config,
                               const DifferenceDescription& desc, std::string_view save_name) {
    if (desc.overall == Overall::Stop) throw PreconditionError("code generation requested for a Stop description");
    const std::vector<ChatMessage> messages = {
        {"system", codegen_system_prompt(), {}},
        {"user", codegen_user_prompt(desc, save_name), {}},
    };
    CodegenResult result;
    std::string last_error;
    for (std::size_t attempt = 0; attempt < config.temperatures.size(); ++attempt) {
        result.attempts = static_cast<int>(attempt + 1);
        result.replies.push_back(backend.complete(messages, config.temperatures[attempt]));
        try {
            result.program = parse_program(result.replies.back());
            result.program.provenance = "codegen attempt " + std::to_string(attempt + 1);
            return result;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw AgentFailure("code generator produced no executable program after " +
                           std::to_string(config.temperatures.size()) + " attempts: " + last_error,
                       static_cast<int>(config.temperatures.size()));
}

ChatCritic::ChatCritic(std::shared_ptr<ChatBackend> backend, AgentBackendConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {}

CriticResult ChatCritic::describe(const CriticRequest& req) {
    return critic_describe(*backend_, config_, req);
}

ChatCodeGenerator::ChatCodeGenerator(std::shared_ptr<ChatBackend> backend, AgentBackendConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {}

CodegenResult ChatCodeGenerator::generate(const DifferenceDescription& desc, std::string_view save_name) {
    return codegen_generate(*backend_, config_, desc, save_name);
}

double aspect_relative_difference(FilterKind kind, const ImageStats& source, const ImageStats& refs) {
    static constexpr double kFloor = 1e-6;
    auto relative = [](double src, double ref, double scale) { return 100.0 * (ref - src) / std::max(scale, kFloor); };
    switch (kind) {
        case FilterKind::Exposure: return relative(source.pixel_mean, refs.pixel_mean, std::abs(refs.pixel_mean));
        case FilterKind::Contrast: return relative(source.pixel_std, refs.pixel_std, std::abs(refs.pixel_std));
        case FilterKind::Highlight: return relative(source.p10_high, refs.p10_high, std::abs(refs.p10_high));
        case FilterKind::Shadow: return relative(source.p10_low, refs.p10_low, std::abs(refs.p10_low));
        case FilterKind::Saturation: return relative(source.sat_mean, refs.sat_mean, std::abs(refs.sat_mean));
        case FilterKind::Temperature:
            // Warmth is a signed channel gap, so it is measured against overall brightness.
            return relative(source.mean_r - source.mean_b, refs.mean_r - refs.mean_b, refs.pixel_mean);
        case FilterKind::Texture:
            return relative(source.laplacian_variance, refs.laplacian_variance, std::abs(refs.laplacian_variance));
    }
    return 0.0;
}

std::vector<DifferenceDescription> rule_critic(const CriticRequest& req) {
    req.validate();
    if (!req.ref_stats_mean) throw PreconditionError("rule critic needs reference statistics");
    const auto& ranges = allowed_ranges();
    const int last = static_cast<int>(ranges.size()) - 1;

    std::array<std::optional<std::pair<Direction, int>>, 7> base{};
    for (auto kind : kAllFilters) {
        const double diff = aspect_relative_difference(kind, req.source_stats, *req.ref_stats_mean);
        const double magnitude = std::abs(diff);
        if (!(magnitude >= 1.0)) continue;
        int index = last;
        for (int r = 0; r <= last; ++r) {
            if (magnitude < ranges[r].hi) {
                index = r;
                break;
            }
        }
        base[static_cast<std::size_t>(kind)] = std::make_pair(diff > 0 ? Direction::Increase : Direction::Decrease, index);
    }

    std::vector<DifferenceDescription> out;
    for (int i = 0; i < req.n_candidates; ++i) {
        // Offsets 0, +1, -1, +2, -2, ... around the measured range.
        const int offset = i == 0 ? 0 : ((i % 2 == 1) ? (i + 1) / 2 : -(i / 2));
        DifferenceDescription desc;
        for (auto kind : kAllFilters) {
            const auto& b = base[static_cast<std::size_t>(kind)];
            if (!b) continue;
            const int index = std::clamp(b->second + offset, 0, last);
            desc.judgment(kind) = AspectJudgment{b->first, ranges[index]};
        }
        desc.overall = desc.all_na() ? Overall::Stop : Overall::Go;
        desc.raw_text = render_description(desc);
        out.push_back(std::move(desc));
    }
    return out;
}

RetouchProgram rule_codegen(const DifferenceDescription& desc) {
    if (desc.overall == Overall::Stop) throw PreconditionError("code generation requested for a Stop description");
    auto judged = [&](FilterKind k) { return desc.judgment(k).direction != Direction::NA; };

    std::vector<FilterKind> phase;
    if (judged(FilterKind::Exposure) || judged(FilterKind::Contrast)) {
        phase = {FilterKind::Exposure, FilterKind::Contrast};
    } else if (judged(FilterKind::Highlight) || judged(FilterKind::Shadow)) {
        phase = {FilterKind::Highlight, FilterKind::Shadow};
    } else {
        phase = {FilterKind::Saturation, FilterKind::Temperature, FilterKind::Texture};
    }
    RetouchProgram program;
    program.provenance = "rule-codegen";
    for (auto kind : phase) {
        const auto& j = desc.judgment(kind);
        if (j.direction == Direction::NA) continue;
        const double sign = j.direction == Direction::Increase ? 1.0 : -1.0;
        program.steps.push_back({kind, std::clamp(sign * j.range.midpoint() / 100.0, -1.0, 1.0)});
    }
    return program;
}

CriticResult RuleCritic::describe(const CriticRequest& req) {
    CriticResult result;
    result.descriptions = rule_critic(req);
    for (const auto& d : result.descriptions) result.replies.push_back(d.raw_text);
    return result;
}

CodegenResult RuleCodeGenerator::generate(const DifferenceDescription& desc, std::string_view save_name) {
    CodegenResult result;
    result.program = rule_codegen(desc);
    result.replies.push_back(render_program_calls(result.program, save_name));
    return result;
}

}  // namespace retouch
