#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retouch/image.hpp"

namespace retouch {

enum class FilterKind { Exposure, Contrast, Highlight, Shadow, Saturation, Temperature, Texture };

inline constexpr std::array<FilterKind, 7> kAllFilters = {
    FilterKind::Exposure,   FilterKind::Contrast,    FilterKind::Highlight, FilterKind::Shadow,
    FilterKind::Saturation, FilterKind::Temperature, FilterKind::Texture,
};

// Canonical lowercase name ("exposure", ...).
std::string_view filter_name(FilterKind kind) noexcept;

// Capitalized aspect label used in critic output ("Exposure", ...).
std::string_view aspect_label(FilterKind kind) noexcept;

std::optional<FilterKind> filter_from_name(std::string_view name) noexcept;

/// One filter application; param is the unitless adjustment in [-1,1].
struct RetouchStep {
    FilterKind filter;
    double param;

    bool operator==(const RetouchStep&) const = default;
};

/// Ordered filter steps, applied left to right.
struct RetouchProgram {
    std::vector<RetouchStep> steps;
    std::string provenance;

    bool operator==(const RetouchProgram&) const = default;
};

// Throws ParamOutOfRange when |step.param| > 1. A zero parameter returns
// an exact copy of the input.
ImageBuffer apply_filter(const ImageBuffer& img, const RetouchStep& step);

ImageBuffer execute_program(const ImageBuffer& img, const RetouchProgram& program);

// Gaussian sigma used by the texture filter for an image of this size.
double texture_sigma(int width, int height) noexcept;

// Separable Gaussian blur per channel with reflect padding, radius ceil(3*sigma).
std::vector<double> gaussian_blur(const ImageBuffer& img, double sigma);

}  // namespace retouch
