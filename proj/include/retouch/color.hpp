#pragma once

#include <vector>

#include "retouch/image.hpp"

namespace retouch {

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Rec.601 luma of an sRGB-encoded pixel.
inline float luma(float r, float g, float b) noexcept {
    return static_cast<float>(kLumaR * r + kLumaG * g + kLumaB * b);
}

// Per-pixel luma, row-major, values in [0,1].
std::vector<float> luminance(const ImageBuffer& img);

struct Lab {
    double L;
    double a;
    double b;
};

// sRGB -> linear -> XYZ (D65) -> CIELAB.
Lab srgb_to_lab(double r, double g, double b) noexcept;

std::vector<Lab> rgb_to_lab(const ImageBuffer& img);

// HSV saturation of a single pixel.
inline float hsv_saturation(float r, float g, float b) noexcept {
    const float hi = r > g ? (r > b ? r : b) : (g > b ? g : b);
    const float lo = r < g ? (r < b ? r : b) : (g < b ? g : b);
    return hi <= 0.0f ? 0.0f : (hi - lo) / hi;
}

}  // namespace retouch
