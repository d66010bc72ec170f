#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "retouch/filters.hpp"

namespace retouch {

/// Parses the filter-call subset of agent-written code.
///
/// Every `filter.<name>(<decimal>)` call is collected in textual order;
/// comments and surrounding assignments are ignored. The text is never
/// executed. Throws ParseError when no call is found, a name or argument is
/// invalid, or a `...` placeholder appears anywhere in the text.
RetouchProgram parse_program(std::string_view text);

// One `<var> = filter.<name>(<param>)` line per step; parse_program inverts it.
std::string render_program_calls(const RetouchProgram& program, std::string_view var = "adj_img");

// Canonical `.retouch.json` document.
std::string serialize_program(const RetouchProgram& program);

// Reader for serialize_program output. Throws ParseError(BadDocument).
RetouchProgram parse_program_json(std::string_view json_text);

// Accepts either a JSON document or filter-call text.
RetouchProgram parse_program_any(std::string_view text);

enum class Direction { Increase, Decrease, NA };

struct PercentRange {
    int lo;
    int hi;

    bool operator==(const PercentRange&) const = default;
    double midpoint() const noexcept { return 0.5 * (lo + hi); }
};

// The six discrete difference ranges the critic may pick from.
const std::array<PercentRange, 6>& allowed_ranges() noexcept;
bool is_allowed_range(PercentRange r) noexcept;
// "(0, 5), (5, 10), ..." as substituted into the critic prompt.
std::string range_list_text();

struct AspectJudgment {
    Direction direction = Direction::NA;
    PercentRange range{0, 0};  // meaningful only when direction != NA

    bool operator==(const AspectJudgment&) const = default;
};

enum class Overall { Go, Stop };

struct DifferenceDescription {
    // Indexed by FilterKind order.
    std::array<AspectJudgment, 7> judgments{};
    Overall overall = Overall::Go;
    std::string raw_text;

    const AspectJudgment& judgment(FilterKind kind) const { return judgments[static_cast<std::size_t>(kind)]; }
    AspectJudgment& judgment(FilterKind kind) { return judgments[static_cast<std::size_t>(kind)]; }
    bool all_na() const noexcept;
};

/// Reads one critic description block ("- Exposure: ... - Overall: Go").
///
/// Missing aspects are N/A. A missing Overall line means Go, as does a Stop
/// that contradicts non-N/A aspects. Throws DescriptionParseError when no
/// aspect line is recognised at all.
DifferenceDescription parse_description(std::string_view text);

// Renders a description in the critic output format; parse_description inverts it.
std::string render_description(const DifferenceDescription& desc);

std::string_view direction_name(Direction d) noexcept;

}  // namespace retouch
