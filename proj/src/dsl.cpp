#include "retouch/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <json.hpp>
#include <optional>
#include <regex>
#include <sstream>

#include "retouch/errors.hpp"

namespace retouch {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Drops `# ...` comments, leaving quoted strings alone.
std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    char quote = 0;
    bool in_comment = false;
    for (char c : text) {
        if (c == '\n') {
            in_comment = false;
            quote = 0;
            out.push_back(c);
            continue;
        }
        if (in_comment) continue;
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '#') {
            in_comment = true;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

std::optional<double> parse_decimal(std::string_view token) {
    static const std::regex decimal(R"(^[+-]?(\d+\.?\d*|\.\d+)$)");
    const std::string s(trim(token));
    if (!std::regex_match(s, decimal)) return std::nullopt;
    std::string_view digits = s;
    if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
    return value;
}

std::string format_param(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
    return std::string(buf, ec == std::errc() ? ptr : buf);
}

RetouchStep checked_step(std::string_view name, double param) {
    const auto kind = filter_from_name(name);
    if (!kind) throw ParseError(ParseFailure::UnknownFilter, "unknown filter '" + std::string(name) + "'");
    if (!(std::abs(param) <= 1.0)) {
        throw ParseError(ParseFailure::BadParam,
                         "parameter for " + std::string(name) + " outside [-1, 1]: " + format_param(param));
    }
    return {*kind, param};
}

}  // namespace

RetouchProgram parse_program(std::string_view text) {
    if (text.find("...") != std::string_view::npos || text.find("\xE2\x80\xA6") != std::string_view::npos) {
        throw ParseError(ParseFailure::Placeholder, "placeholder '...' found; output is not executable");
    }
    static const std::regex call(R"(\bfilter\s*\.\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\))");
    const std::string code = strip_comments(text);
    RetouchProgram program;
    for (auto it = std::sregex_iterator(code.begin(), code.end(), call); it != std::sregex_iterator(); ++it) {
        const std::string name = (*it)[1].str();
        const std::string arg = (*it)[2].str();
        if (!filter_from_name(name)) {
            throw ParseError(ParseFailure::UnknownFilter, "unknown filter '" + name + "'");
        }
        const auto value = parse_decimal(arg);
        if (!value) {
            throw ParseError(ParseFailure::BadParam, "non-numeric parameter for " + name + ": '" + arg + "'");
        }
        program.steps.push_back(checked_step(name, *value));
    }
    if (program.steps.empty()) throw ParseError(ParseFailure::NoCalls, "no filter calls found");
    return program;
}

std::string render_program_calls(const RetouchProgram& program, std::string_view var) {
    std::string out;
    for (const auto& step : program.steps) {
        out += var;
        out += " = filter.";
        out += filter_name(step.filter);
        out += '(';
        out += format_param(step.param);
        out += ")\n";
    }
    return out;
}

std::string serialize_program(const RetouchProgram& program) {
    ordered_json doc;
    doc["steps"] = ordered_json::array();
    for (const auto& step : program.steps) {
        ordered_json s;
        s["filter"] = filter_name(step.filter);
        s["param"] = step.param;
        doc["steps"].push_back(std::move(s));
    }
    doc["provenance"] = program.provenance;
    return doc.dump();
}

RetouchProgram parse_program_json(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(ParseFailure::BadDocument, std::string("program JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("steps") || !doc["steps"].is_array()) {
        throw ParseError(ParseFailure::BadDocument, "program JSON must be an object with a 'steps' array");
    }
    RetouchProgram program;
    for (const auto& s : doc["steps"]) {
        if (!s.is_object() || !s.contains("filter") || !s["filter"].is_string() || !s.contains("param") ||
            !s["param"].is_number()) {
            throw ParseError(ParseFailure::BadDocument, "each step needs a string 'filter' and numeric 'param'");
        }
        program.steps.push_back(checked_step(s["filter"].get<std::string>(), s["param"].get<double>()));
    }
    if (doc.contains("provenance")) {
        if (!doc["provenance"].is_string()) throw ParseError(ParseFailure::BadDocument, "'provenance' must be a string");
        program.provenance = doc["provenance"].get<std::string>();
    }
    return program;
}

RetouchProgram parse_program_any(std::string_view text) {
    const auto body = trim(text);
    if (!body.empty() && body.front() == '{') return parse_program_json(body);
    return parse_program(text);
}

const std::array<PercentRange, 6>& allowed_ranges() noexcept {
    static constexpr std::array<PercentRange, 6> ranges = {{{0, 5}, {5, 10}, {10, 20}, {20, 40}, {40, 60}, {60, 100}}};
    return ranges;
}

bool is_allowed_range(PercentRange r) noexcept {
    const auto& ranges = allowed_ranges();
    return std::find(ranges.begin(), ranges.end(), r) != ranges.end();
}

std::string range_list_text() {
    std::string out;
    for (const auto& r : allowed_ranges()) {
        if (!out.empty()) out += ", ";
        out += "(" + std::to_string(r.lo) + "-" + std::to_string(r.hi) + ")";
    }
    return out;
}

bool DifferenceDescription::all_na() const noexcept {
    return std::all_of(judgments.begin(), judgments.end(),
                       [](const AspectJudgment& j) { return j.direction == Direction::NA; });
}

std::string_view direction_name(Direction d) noexcept {
    switch (d) {
        case Direction::Increase: return "increase";
        case Direction::Decrease: return "decrease";
        case Direction::NA: return "n/a";
    }
    return "";
}

namespace {

std::optional<PercentRange> snap_range(double lo, double hi) {
    const auto& ranges = allowed_ranges();
    for (const auto& r : ranges) {
        if (r.lo == lo && r.hi == hi) return r;
    }
    if (!(lo < hi) || lo < 0.0 || hi > 100.0) return std::nullopt;
    const double mid = 0.5 * (lo + hi);
    for (const auto& r : ranges) {
        if (mid >= r.lo && mid < r.hi) return r;
    }
    return std::nullopt;
}

bool starts_with_na(std::string_view content) {
    const std::string s = lower(trim(content));
    auto body = std::string_view(s);
    while (!body.empty() && (body.front() == '[' || body.front() == '*' || body.front() == '"')) body.remove_prefix(1);
    return body.starts_with("n/a") || body.starts_with("na.") || body == "na" || body.starts_with("none");
}

// nullopt: the line could not be read as either N/A or a ranged judgment.
std::optional<AspectJudgment> parse_aspect(std::string_view content) {
    if (starts_with_na(content)) return AspectJudgment{};
    static const std::regex range(R"((\d+(?:\.\d+)?)\s*%?\s*(?:-|\xE2\x80\x93|\xE2\x80\x94|to)\s*(\d+(?:\.\d+)?)\s*%)",
                                  std::regex::icase);
    static const std::regex direction(R"(\b(higher|increase\w*|lower|decrease\w*)\b)", std::regex::icase);
    const std::string s(content);
    std::smatch rm;
    std::smatch dm;
    if (std::regex_search(s, rm, range) && std::regex_search(s, dm, direction)) {
        const auto snapped = snap_range(std::stod(rm[1].str()), std::stod(rm[2].str()));
        if (snapped) {
            const std::string word = lower(dm[1].str());
            const Direction d =
                (word == "higher" || word.starts_with("increase")) ? Direction::Increase : Direction::Decrease;
            return AspectJudgment{d, *snapped};
        }
    }
    if (lower(s).find("n/a") != std::string::npos) return AspectJudgment{};
    return std::nullopt;
}

}  // namespace

DifferenceDescription parse_description(std::string_view text) {
    static const std::regex line_re(R"(^\s*(?:[-*]\s*)?\**\s*([A-Za-z]+)\s*\**\s*:(.*)$)");
    DifferenceDescription desc;
    desc.raw_text = std::string(text);
    int parsed_aspects = 0;
    std::optional<Overall> overall;

    std::istringstream lines{std::string(text)};
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) continue;
        const std::string key = lower(m[1].str());
        const std::string content = m[2].str();
        if (key == "overall") {
            static const std::regex stop_word(R"(\bstop\b)", std::regex::icase);
            static const std::regex go_word(R"(\bgo\b)", std::regex::icase);
            const bool has_go = std::regex_search(content, go_word);
            const bool has_stop = std::regex_search(content, stop_word);
            if (has_go) {
                overall = Overall::Go;
            } else if (has_stop) {
                overall = Overall::Stop;
            }
            continue;
        }
        const auto kind = filter_from_name(key);
        if (!kind) continue;
        if (const auto judgment = parse_aspect(content)) {
            desc.judgment(*kind) = *judgment;
            ++parsed_aspects;
        }
    }
    if (parsed_aspects == 0) throw DescriptionParseError("no aspect line could be parsed");
    desc.overall = overall.value_or(Overall::Go);
    if (desc.overall == Overall::Stop && !desc.all_na()) desc.overall = Overall::Go;
    return desc;
}

std::string render_description(const DifferenceDescription& desc) {
    std::string out;
    for (auto kind : kAllFilters) {
        const auto& j = desc.judgment(kind);
        out += "- ";
        out += aspect_label(kind);
        out += ": ";
        if (j.direction == Direction::NA) {
            out += "N/A";
        } else {
            const std::string noun = kind == FilterKind::Exposure ? "brightness" : lower(aspect_label(kind));
            out += "the " + noun + " of the target image is " + std::to_string(j.range.lo) + "-" +
                   std::to_string(j.range.hi) + "% " + (j.direction == Direction::Increase ? "higher" : "lower") +
                   " than the one of the source image.";
        }
        out += '\n';
    }
    out += desc.overall == Overall::Stop ? "- Overall: Stop\n" : "- Overall: Go\n";
    return out;
}

}  // namespace retouch
