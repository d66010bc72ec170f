#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retouch/dsl.hpp"
#include "retouch/image.hpp"
#include "retouch/stats.hpp"

namespace retouch {

using ImagePtr = std::shared_ptr<const ImageBuffer>;

struct ScoreSummary {
    double psnr;
    double ssim;
    double delta_e;
};

/// Everything the critic sees for one iteration.
///
/// Reference mode fills refs and ref_stats_mean; instruction mode fills
/// instruction and, after the first step, history (stats of each earlier
/// selected image, oldest first).
struct CriticRequest {
    ImagePtr source;
    std::vector<ImagePtr> refs;
    ImageStats source_stats;
    std::optional<ImageStats> ref_stats_mean;
    std::optional<ScoreSummary> score_summary;
    std::optional<std::string> instruction;
    std::vector<ImageStats> history;
    int n_candidates = 3;

    // Throws PreconditionError.
    void validate() const;
};

struct AgentBackendConfig {
    std::string endpoint;
    std::string model = "gpt-5";
    std::string api_key_env = "RETOUCH_API_KEY";
    std::array<double, 3> temperatures = {0.2, 0.7, 1.0};
    std::chrono::seconds timeout{120};
    int max_image_side = 768;

    // Throws ConfigError.
    void validate() const;
};

struct ChatMessage {
    std::string role;
    std::string text;
    std::vector<std::vector<std::uint8_t>> png_images;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    // Throws BackendError on transport failure.
    virtual std::string complete(const std::vector<ChatMessage>& messages, double temperature) = 0;
};

// Chat-completion JSON over HTTP(S); the bearer key comes from config.api_key_env.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(AgentBackendConfig config);
    std::string complete(const std::vector<ChatMessage>& messages, double temperature) override;

private:
    AgentBackendConfig config_;
    std::string api_key_;
};

std::string build_chat_request(const std::vector<ChatMessage>& messages, std::string_view model, double temperature);
// Content of choices[0].message; throws BackendError when the shape is wrong.
std::string extract_chat_reply(std::string_view response_body);

std::string critic_system_prompt(bool instruction_mode);
std::string critic_user_prompt(const CriticRequest& req);
std::string codegen_system_prompt();
std::string codegen_user_prompt(const DifferenceDescription& desc, std::string_view save_name);

// Splits a critic reply into its "Candidate k" blocks, in order.
std::vector<std::string> split_candidates(std::string_view reply);

// Exactly n descriptions, or DescriptionParseError. A reply whose parsed
// blocks all say Stop is accepted even with fewer than n blocks.
std::vector<DifferenceDescription> parse_critic_reply(std::string_view reply, int n);

struct CriticResult {
    std::vector<DifferenceDescription> descriptions;
    int attempts = 1;
    std::vector<std::string> replies;
};

struct CodegenResult {
    RetouchProgram program;
    int attempts = 1;
    std::vector<std::string> replies;
};

class Critic {
public:
    virtual ~Critic() = default;
    // Throws AgentFailure when no usable reply was produced.
    virtual CriticResult describe(const CriticRequest& req) = 0;
    virtual bool wants_score_summary() const { return false; }
    virtual bool supports_instructions() const { return false; }
};

class CodeGenerator {
public:
    virtual ~CodeGenerator() = default;
    // Throws AgentFailure; PreconditionError when desc says Stop.
    virtual CodegenResult generate(const DifferenceDescription& desc, std::string_view save_name) = 0;
};

CriticResult critic_describe(ChatBackend& backend, const AgentBackendConfig& config, const CriticRequest& req);
CodegenResult codegen_generate(ChatBackend& backend, const AgentBackendConfig& config,
                               const DifferenceDescription& desc, std::string_view save_name);

class ChatCritic final : public Critic {
public:
    ChatCritic(std::shared_ptr<ChatBackend> backend, AgentBackendConfig config);
    CriticResult describe(const CriticRequest& req) override;
    bool wants_score_summary() const override { return true; }
    bool supports_instructions() const override { return true; }

private:
    std::shared_ptr<ChatBackend> backend_;
    AgentBackendConfig config_;
};

class ChatCodeGenerator final : public CodeGenerator {
public:
    ChatCodeGenerator(std::shared_ptr<ChatBackend> backend, AgentBackendConfig config);
    CodegenResult generate(const DifferenceDescription& desc, std::string_view save_name) override;

private:
    std::shared_ptr<ChatBackend> backend_;
    AgentBackendConfig config_;
};

// Relative difference, in percent, between reference and source on the
// aspect's proxy statistic. Positive means the references are higher.
double aspect_relative_difference(FilterKind kind, const ImageStats& source, const ImageStats& refs);

// Deterministic critic comparing image statistics.
std::vector<DifferenceDescription> rule_critic(const CriticRequest& req);
// Deterministic code generator following the three-phase plan.
RetouchProgram rule_codegen(const DifferenceDescription& desc);

class RuleCritic final : public Critic {
public:
    CriticResult describe(const CriticRequest& req) override;
};

class RuleCodeGenerator final : public CodeGenerator {
public:
    CodegenResult generate(const DifferenceDescription& desc, std::string_view save_name) override;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace retouch
