#include "retouch/color.hpp"

#include <cmath>

namespace retouch {

namespace {

// sRGB primaries, D65 white.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.00000;
constexpr double kWhiteZ = 1.08883;

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

}  // namespace

std::vector<float> luminance(const ImageBuffer& img) {
    const auto data = img.data();
    std::vector<float> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = luma(data[3 * i], data[3 * i + 1], data[3 * i + 2]);
    }
    return out;
}

Lab srgb_to_lab(double r, double g, double b) noexcept {
    const double lr = srgb_to_linear(r);
    const double lg = srgb_to_linear(g);
    const double lb = srgb_to_linear(b);
    const double x = kRgbToXyz[0][0] * lr + kRgbToXyz[0][1] * lg + kRgbToXyz[0][2] * lb;
    const double y = kRgbToXyz[1][0] * lr + kRgbToXyz[1][1] * lg + kRgbToXyz[1][2] * lb;
    const double z = kRgbToXyz[2][0] * lr + kRgbToXyz[2][1] * lg + kRgbToXyz[2][2] * lb;
    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::vector<Lab> rgb_to_lab(const ImageBuffer& img) {
    const auto data = img.data();
    std::vector<Lab> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = srgb_to_lab(data[3 * i], data[3 * i + 1], data[3 * i + 2]);
    }
    return out;
}

}  // namespace retouch
