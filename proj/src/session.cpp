#include "retouch/session.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <future>
#include <json.hpp>

#include "retouch/errors.hpp"
#include "retouch/metrics.hpp"

namespace retouch {

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kSummarySide = 256;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

ImagePtr share(ImageBuffer img) {
    return std::make_shared<const ImageBuffer>(std::move(img));
}

Candidate source_candidate(const SessionState& state) {
    return Candidate{"source", -1, RetouchProgram{{}, "source"}, state.source};
}

// Photometric scores between the source and each reference. Contents and
// sizes differ, so both sides are compared at a fixed resolution.
ScoreSummary score_summary(const ImageBuffer& source, const std::vector<ImagePtr>& refs) {
    const auto small_src = resize_area(source, kSummarySide, kSummarySide);
    ScoreSummary sum{0.0, 0.0, 0.0};
    for (const auto& ref : refs) {
        const auto report = evaluate(small_src, resize_area(*ref, kSummarySide, kSummarySide));
        sum.psnr += report.psnr;
        sum.ssim += report.ssim;
        sum.delta_e += report.delta_e;
    }
    const double n = static_cast<double>(refs.size());
    return {sum.psnr / n, sum.ssim / n, sum.delta_e / n};
}

struct Generated {
    std::optional<Candidate> candidate;
    std::vector<std::string> replies;
    std::optional<std::string> note;
};

Generated generate_candidate(const AgentSet& agents, const ImageBuffer& source, const DifferenceDescription& desc,
                             int index) {
    Generated out;
    try {
        auto result = agents.codegen->generate(desc, "adj_img");
        out.replies = std::move(result.replies);
        auto image = execute_program(source, result.program);
        out.candidate = Candidate{"critic", index, std::move(result.program), share(std::move(image))};
    } catch (const AgentFailure& e) {
        out.note = "candidate " + std::to_string(index + 1) + " dropped: " + e.what();
    } catch (const ParamOutOfRange& e) {
        out.note = "candidate " + std::to_string(index + 1) + " dropped: " + e.what();
    }
    return out;
}

// Code generation and execution for every Go description, in description order.
void build_candidates(IterationRecord& record, const AgentSet& agents, const ImageBuffer& source) {
    std::vector<std::future<Generated>> jobs;
    for (std::size_t i = 0; i < record.descriptions.size(); ++i) {
        if (record.descriptions[i].overall != Overall::Go) continue;
        jobs.push_back(std::async(std::launch::async, generate_candidate, std::cref(agents), std::cref(source),
                                  std::cref(record.descriptions[i]), static_cast<int>(i)));
    }
    std::exception_ptr failure;
    std::vector<Generated> done;
    for (auto& job : jobs) {
        try {
            done.push_back(job.get());
        } catch (...) {
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    for (auto& g : done) {
        for (auto& r : g.replies) record.codegen_replies.push_back(std::move(r));
        if (g.note) record.notes.push_back(*g.note);
        if (g.candidate) record.candidates.push_back(std::move(*g.candidate));
    }
}

void apply_budget(SessionState& state) {
    if (state.status == SessionStatus::Running && static_cast<int>(state.history.size()) >= state.config.max_iters) {
        state.status = SessionStatus::StoppedBudget;
    }
}

void append_steps(RetouchProgram& composed, const RetouchProgram& program) {
    composed.steps.insert(composed.steps.end(), program.steps.begin(), program.steps.end());
}

}  // namespace

std::string_view status_name(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::Running: return "running";
        case SessionStatus::StoppedCriticStop: return "stopped_critic_stop";
        case SessionStatus::StoppedStagnation: return "stopped_stagnation";
        case SessionStatus::StoppedBudget: return "stopped_budget";
        case SessionStatus::AwaitingUser: return "awaiting_user";
    }
    return "unknown";
}

std::string_view mode_name(SessionMode m) noexcept {
    return m == SessionMode::Reference ? "reference" : "instruction";
}

std::string_view agent_kind_name(AgentKind k) noexcept {
    return k == AgentKind::Rule ? "rule" : "chat";
}

SessionMode mode_from_name(std::string_view name) {
    if (name == "reference") return SessionMode::Reference;
    if (name == "instruction") return SessionMode::Instruction;
    throw ConfigError("unknown session mode '" + std::string(name) + "'");
}

AgentKind agent_kind_from_name(std::string_view name) {
    if (name == "rule") return AgentKind::Rule;
    if (name == "chat") return AgentKind::Chat;
    throw ConfigError("unknown agent kind '" + std::string(name) + "'");
}

void SessionConfig::validate() const {
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (n_candidates < 1) throw ConfigError("n_candidates must be >= 1");
    if (n_refs < 1) throw ConfigError("n_refs must be >= 1");
}

AgentSet make_rule_agents() {
    return {std::make_shared<RuleCritic>(), std::make_shared<RuleCodeGenerator>()};
}

AgentSet make_chat_agents(std::shared_ptr<ChatBackend> backend, const AgentBackendConfig& config) {
    return {std::make_shared<ChatCritic>(backend, config), std::make_shared<ChatCodeGenerator>(backend, config)};
}

SessionState start_reference_session(ImageBuffer source, std::vector<ImageBuffer> refs, SessionConfig config,
                                     std::shared_ptr<const DistributionProvider> provider) {
    config.mode = SessionMode::Reference;
    config.validate();
    if (refs.empty()) throw EmptyReferenceSet("reference mode needs at least one reference image");
    SessionState state;
    state.config = config;
    state.original = share(std::move(source));
    state.source = state.original;
    std::vector<ImageStats> ref_stats;
    for (const auto& r : refs) ref_stats.push_back(compute_stats(r));
    state.ref_stats_mean = mean_stats(ref_stats);
    state.scorer = std::make_shared<const SelectionScorer>(config.score, std::move(provider), refs);
    for (auto& r : refs) state.refs.push_back(share(std::move(r)));
    state.composed.provenance = "session";
    return state;
}

SessionState start_instruction_session(ImageBuffer source, SessionConfig config) {
    config.mode = SessionMode::Instruction;
    config.validate();
    SessionState state;
    state.config = config;
    state.original = share(std::move(source));
    state.source = state.original;
    state.composed.provenance = "session";
    return state;
}

RetouchProgram warm_start_program(const ImageStats& source, const ImageStats& refs) {
    constexpr double kFloor = 1e-4;
    const double exposure = std::clamp(std::log2(std::max(refs.pixel_mean, kFloor) / std::max(source.pixel_mean, kFloor)),
                                       -1.0, 1.0);
    const double saturation = std::clamp(refs.sat_mean / std::max(source.sat_mean, kFloor) - 1.0, -1.0, 1.0);
    return RetouchProgram{{{FilterKind::Exposure, exposure}, {FilterKind::Saturation, saturation}}, "warm-start"};
}

ImageBuffer warm_start_candidate(const ImageBuffer& source, std::span<const ImageBuffer> refs) {
    if (refs.empty()) throw EmptyReferenceSet("warm start needs references");
    std::vector<ImageStats> stats;
    for (const auto& r : refs) stats.push_back(compute_stats(r));
    return execute_program(source, warm_start_program(compute_stats(source), mean_stats(stats)));
}

const IterationRecord& run_iteration(SessionState& state, const AgentSet& agents) {
    if (state.config.mode != SessionMode::Reference) throw WrongState("automatic iterations need reference mode");
    if (state.status != SessionStatus::Running) {
        throw WrongState("session is " + std::string(status_name(state.status)));
    }
    const auto start = Clock::now();
    const int t = static_cast<int>(state.history.size());
    IterationRecord record;
    record.t = t;
    record.candidates.push_back(source_candidate(state));

    CriticRequest req;
    req.source = state.source;
    req.refs = state.refs;
    req.source_stats = compute_stats(*state.source);
    req.ref_stats_mean = state.ref_stats_mean;
    req.n_candidates = state.config.n_candidates;
    if (agents.critic->wants_score_summary()) req.score_summary = score_summary(*state.source, state.refs);

    bool critic_stop = false;
    try {
        auto critic = agents.critic->describe(req);
        record.critic_replies = std::move(critic.replies);
        record.descriptions = std::move(critic.descriptions);
        critic_stop = std::all_of(record.descriptions.begin(), record.descriptions.end(),
                                  [](const DifferenceDescription& d) { return d.overall == Overall::Stop; });
    } catch (const AgentFailure& e) {
        record.skipped = true;
        record.notes.push_back(std::string("iteration skipped: ") + e.what());
    }

    if (!record.skipped && !critic_stop) {
        build_candidates(record, agents, *state.source);
        if (t == 0 && state.config.warm_start) {
            auto program = warm_start_program(req.source_stats, *state.ref_stats_mean);
            auto image = execute_program(*state.source, program);
            record.candidates.push_back(Candidate{"warm-start", -1, std::move(program), share(std::move(image))});
        }
    }

    for (const auto& c : record.candidates) record.scores.push_back(state.scorer->score(*c.image));
    const auto best = argmin_first(record.scores);
    record.selected = static_cast<int>(best);
    record.selection_source = SelectionSource::Score;
    record.wall_ms = elapsed_ms(start);

    // Everything below only mutates state, so a BackendError above leaves it untouched.
    const auto& chosen = record.candidates[best];
    if (critic_stop) {
        state.status = SessionStatus::StoppedCriticStop;
    } else if (!record.skipped) {
        if (best == 0) {
            ++state.consecutive_source_selections;
        } else {
            state.consecutive_source_selections = 0;
            state.source = chosen.image;
            append_steps(state.composed, chosen.program);
        }
        if (state.consecutive_source_selections >= kStagnationLimit) state.status = SessionStatus::StoppedStagnation;
    }
    state.history.push_back(std::move(record));
    apply_budget(state);
    return state.history.back();
}

SessionResult run_session(ImageBuffer source, std::vector<ImageBuffer> refs, SessionConfig config,
                          const AgentSet& agents, std::shared_ptr<const DistributionProvider> provider) {
    auto state = start_reference_session(std::move(source), std::move(refs), config, std::move(provider));
    while (state.status == SessionStatus::Running) run_iteration(state, agents);
    auto composed = state.composed;
    ImageBuffer final_image = *state.source;
    return {std::move(final_image), std::move(state), std::move(composed)};
}

const IterationRecord& interactive_step(SessionState& state, std::string_view instruction, const AgentSet& agents) {
    if (state.config.mode != SessionMode::Instruction) throw WrongState("instructions need instruction mode");
    if (state.status != SessionStatus::Running) {
        throw WrongState("session is " + std::string(status_name(state.status)));
    }
    if (!agents.critic->supports_instructions()) {
        throw PreconditionError("instruction mode needs a chat-backed critic");
    }
    const auto start = Clock::now();
    IterationRecord record;
    record.t = static_cast<int>(state.history.size());
    record.instruction = std::string(instruction);
    record.selection_source = SelectionSource::User;
    record.candidates.push_back(source_candidate(state));

    CriticRequest req;
    req.source = state.source;
    req.source_stats = compute_stats(*state.source);
    req.instruction = std::string(instruction);
    req.history = state.stats_history;
    req.n_candidates = state.config.n_candidates;

    auto critic = agents.critic->describe(req);
    record.critic_replies = std::move(critic.replies);
    record.descriptions = std::move(critic.descriptions);
    build_candidates(record, agents, *state.source);
    record.wall_ms = elapsed_ms(start);

    state.history.push_back(std::move(record));
    state.status = SessionStatus::AwaitingUser;
    return state.history.back();
}

void user_select(SessionState& state, int index) {
    if (state.status != SessionStatus::AwaitingUser || state.history.empty()) {
        throw WrongState("no candidates are awaiting a choice");
    }
    auto& record = state.history.back();
    if (index < 0 || index >= static_cast<int>(record.candidates.size())) {
        throw IndexError("candidate index " + std::to_string(index) + " is out of range [0, " +
                         std::to_string(record.candidates.size()) + ")");
    }
    record.selected = index;
    const auto& chosen = record.candidates[static_cast<std::size_t>(index)];
    state.source = chosen.image;
    append_steps(state.composed, chosen.program);
    state.stats_history.push_back(compute_stats(*state.source));
    state.status = SessionStatus::Running;
    apply_budget(state);
}

ImagePtr find_image(const SessionState& state, std::string_view key) {
    if (key == "original") return state.original;
    if (key == "source") return state.source;
    int t = -1;
    int c = -1;
    char tail = 0;
    const std::string k(key);
    if (std::sscanf(k.c_str(), "t%d-c%d%c", &t, &c, &tail) != 2) return nullptr;
    if (k != "t" + std::to_string(t) + "-c" + std::to_string(c)) return nullptr;
    if (t < 0 || t >= static_cast<int>(state.history.size())) return nullptr;
    const auto& cands = state.history[static_cast<std::size_t>(t)].candidates;
    if (c < 0 || c >= static_cast<int>(cands.size())) return nullptr;
    return cands[static_cast<std::size_t>(c)].image;
}

std::string session_transcript(const SessionState& state, std::string_view image_prefix, bool include_timing) {
    using nlohmann::ordered_json;
    const std::string prefix(image_prefix);
    ordered_json doc;
    doc["mode"] = mode_name(state.config.mode);
    doc["status"] = status_name(state.status);
    doc["config"] = {
        {"max_iters", state.config.max_iters},     {"n_candidates", state.config.n_candidates},
        {"n_refs", state.config.n_refs},           {"score", score_kind_name(state.config.score)},
        {"agent", agent_kind_name(state.config.agent)}, {"warm_start", state.config.warm_start},
        {"seed", state.config.seed},
    };
    doc["original"] = prefix + "original";
    doc["source"] = prefix + "source";
    doc["width"] = state.original->width();
    doc["height"] = state.original->height();
    doc["n_refs"] = state.refs.size();
    doc["consecutive_source_selections"] = state.consecutive_source_selections;
    doc["composed_program"] = ordered_json::parse(serialize_program(state.composed));
    auto history = ordered_json::array();
    for (const auto& r : state.history) {
        ordered_json rec;
        rec["t"] = r.t;
        if (r.instruction) rec["instruction"] = *r.instruction;
        rec["skipped"] = r.skipped;
        rec["critic_replies"] = r.critic_replies;
        auto descs = ordered_json::array();
        for (const auto& d : r.descriptions) {
            ordered_json dj;
            dj["overall"] = d.overall == Overall::Go ? "go" : "stop";
            ordered_json aspects;
            for (auto kind : kAllFilters) {
                const auto& j = d.judgment(kind);
                if (j.direction == Direction::NA) {
                    aspects[std::string(filter_name(kind))] = nullptr;
                } else {
                    aspects[std::string(filter_name(kind))] = {{"direction", direction_name(j.direction)},
                                                               {"range", {j.range.lo, j.range.hi}}};
                }
            }
            dj["aspects"] = std::move(aspects);
            dj["text"] = d.raw_text;
            descs.push_back(std::move(dj));
        }
        rec["descriptions"] = std::move(descs);
        rec["codegen_replies"] = r.codegen_replies;
        auto cands = ordered_json::array();
        for (std::size_t i = 0; i < r.candidates.size(); ++i) {
            const auto& c = r.candidates[i];
            ordered_json cj;
            cj["index"] = i;
            cj["origin"] = c.origin;
            if (c.description_index >= 0) cj["description_index"] = c.description_index;
            cj["program"] = ordered_json::parse(serialize_program(c.program));
            cj["image"] = prefix + "t" + std::to_string(r.t) + "-c" + std::to_string(i);
            cands.push_back(std::move(cj));
        }
        rec["candidates"] = std::move(cands);
        rec["scores"] = r.scores;
        rec["selected"] = r.selected >= 0 ? ordered_json(r.selected) : ordered_json(nullptr);
        rec["selection_source"] = r.selection_source == SelectionSource::Score ? "score" : "user";
        rec["notes"] = r.notes;
        if (include_timing) rec["wall_ms"] = r.wall_ms;
        history.push_back(std::move(rec));
    }
    doc["history"] = std::move(history);
    return doc.dump(2);
}

void export_session(const SessionState& state, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_image(*state.source, dir / "final.png", state.original->source_depth());
    auto write_text = [&](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out) throw IoError("cannot write " + path.string());
    };
    write_text(dir / "program.retouch.json", serialize_program(state.composed));
    write_text(dir / "session.json", session_transcript(state, "", false));
}

}  // namespace retouch
