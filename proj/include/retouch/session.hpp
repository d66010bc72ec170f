#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retouch/agents.hpp"
#include "retouch/dsl.hpp"
#include "retouch/filters.hpp"
#include "retouch/image.hpp"
#include "retouch/scoring.hpp"
#include "retouch/stats.hpp"

namespace retouch {

enum class SessionMode { Reference, Instruction };
enum class AgentKind { Rule, Chat };

enum class SessionStatus { Running, StoppedCriticStop, StoppedStagnation, StoppedBudget, AwaitingUser };
enum class SelectionSource { Score, User };

std::string_view status_name(SessionStatus s) noexcept;
std::string_view mode_name(SessionMode m) noexcept;
std::string_view agent_kind_name(AgentKind k) noexcept;
SessionMode mode_from_name(std::string_view name);
AgentKind agent_kind_from_name(std::string_view name);

inline constexpr int kStagnationLimit = 3;

struct SessionConfig {
    int max_iters = 10;
    int n_candidates = 3;
    int n_refs = 5;
    ScoreKind score = ScoreKind::ClipKlGlobal;
    AgentKind agent = AgentKind::Rule;
    SessionMode mode = SessionMode::Reference;
    bool warm_start = true;
    std::uint64_t seed = 0;

    // Throws ConfigError.
    void validate() const;
};

struct Candidate {
    // "source", "critic" or "warm-start".
    std::string origin;
    // Index into the iteration's descriptions for critic candidates, else -1.
    int description_index = -1;
    RetouchProgram program;
    ImagePtr image;
};

struct IterationRecord {
    int t = 0;
    std::vector<std::string> critic_replies;
    std::vector<DifferenceDescription> descriptions;
    std::vector<std::string> codegen_replies;
    std::vector<std::string> notes;
    // Index 0 is always the source the iteration started from.
    std::vector<Candidate> candidates;
    // One per candidate in score mode; empty when the user selects.
    std::vector<double> scores;
    // -1 while the user has not chosen yet.
    int selected = -1;
    SelectionSource selection_source = SelectionSource::Score;
    bool skipped = false;
    std::optional<std::string> instruction;
    double wall_ms = 0.0;
};

struct SessionState {
    SessionConfig config;
    ImagePtr original;
    ImagePtr source;
    std::vector<ImagePtr> refs;
    std::shared_ptr<const SelectionScorer> scorer;
    std::optional<ImageStats> ref_stats_mean;
    std::vector<IterationRecord> history;
    // Stats of each image the user picked, oldest first (instruction mode).
    std::vector<ImageStats> stats_history;
    int consecutive_source_selections = 0;
    SessionStatus status = SessionStatus::Running;
    RetouchProgram composed;
};

struct AgentSet {
    std::shared_ptr<Critic> critic;
    std::shared_ptr<CodeGenerator> codegen;
};

AgentSet make_rule_agents();
AgentSet make_chat_agents(std::shared_ptr<ChatBackend> backend, const AgentBackendConfig& config);

// Reference mode. Throws EmptyReferenceSet or ConfigError.
SessionState start_reference_session(ImageBuffer source, std::vector<ImageBuffer> refs, SessionConfig config,
                                     std::shared_ptr<const DistributionProvider> provider);
SessionState start_instruction_session(ImageBuffer source, SessionConfig config);

// The rule-based first-iteration candidate: mean matching by exposure,
// then saturation matching.
RetouchProgram warm_start_program(const ImageStats& source, const ImageStats& refs);
ImageBuffer warm_start_candidate(const ImageBuffer& source, std::span<const ImageBuffer> refs);

/// One automatic iteration. Requires status Running in reference mode
/// (WrongState otherwise). Agent failures are absorbed into the record;
/// BackendError propagates with the state unchanged.
const IterationRecord& run_iteration(SessionState& state, const AgentSet& agents);

struct SessionResult {
    ImageBuffer final_image;
    SessionState state;
    RetouchProgram composed;
};

SessionResult run_session(ImageBuffer source, std::vector<ImageBuffer> refs, SessionConfig config,
                          const AgentSet& agents, std::shared_ptr<const DistributionProvider> provider);

/// Produces candidates for a user instruction and waits for user_select.
/// AgentFailure propagates with the state unchanged.
const IterationRecord& interactive_step(SessionState& state, std::string_view instruction, const AgentSet& agents);

// Throws WrongState unless AwaitingUser, IndexError for a bad index.
void user_select(SessionState& state, int index);

// Image keys: "original", "source", and "t<t>-c<i>" for candidate i of iteration t.
ImagePtr find_image(const SessionState& state, std::string_view key);

// JSON transcript; every image appears as image_prefix + key.
std::string session_transcript(const SessionState& state, std::string_view image_prefix = "",
                               bool include_timing = true);

// Writes final.png, program.retouch.json and session.json into dir. The
// exported transcript leaves out wall-clock timings so reruns are byte-identical.
void export_session(const SessionState& state, const std::filesystem::path& dir);

}  // namespace retouch
