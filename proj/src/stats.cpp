#include "retouch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "retouch/color.hpp"

namespace retouch {

namespace {

// Mirror without repeating the edge sample (dcba|abcd|dcba -> cb|abcd|cb).
int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

struct Moments {
    double mean;
    double std;
};

Moments moments(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

double laplacian_variance(const ImageBuffer& img) {
    const auto luma_plane = luminance(img);
    const int w = img.width();
    const int h = img.height();
    auto at = [&](int x, int y) -> double {
        return luma_plane[static_cast<std::size_t>(reflect(y, h)) * w + reflect(x, w)];
    };
    std::vector<double> response(luma_plane.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            response[static_cast<std::size_t>(y) * w + x] =
                at(x, y - 1) + at(x - 1, y) - 4.0 * at(x, y) + at(x + 1, y) + at(x, y + 1);
        }
    }
    const double sd = moments(response).std;
    return sd * sd;
}

}  // namespace

ImageStats compute_stats(const ImageBuffer& img) {
    ImageStats s;
    const auto data = img.data();
    const std::size_t n = data.size();
    const std::size_t pixels = img.pixel_count();

    std::vector<double> values(data.begin(), data.end());
    const auto m = moments(values);
    s.pixel_mean = m.mean;
    s.pixel_std = m.std;

    std::sort(values.begin(), values.end());
    s.pixel_median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    const std::size_t tenth = std::max<std::size_t>(1, n / 10);
    double low = 0.0;
    double high = 0.0;
    for (std::size_t i = 0; i < tenth; ++i) {
        low += values[i];
        high += values[n - 1 - i];
    }
    s.p10_low = low / static_cast<double>(tenth);
    s.p10_high = high / static_cast<double>(tenth);

    double sum_r = 0.0;
    double sum_g = 0.0;
    double sum_b = 0.0;
    std::vector<double> sat(pixels);
    double lab_l = 0.0;
    double lab_b = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) {
        const float r = data[3 * i];
        const float g = data[3 * i + 1];
        const float b = data[3 * i + 2];
        sum_r += r;
        sum_g += g;
        sum_b += b;
        sat[i] = hsv_saturation(r, g, b);
        const Lab lab = srgb_to_lab(r, g, b);
        lab_l += lab.L;
        lab_b += lab.b;
    }
    const auto count = static_cast<double>(pixels);
    s.mean_r = sum_r / count;
    s.mean_g = sum_g / count;
    s.mean_b = sum_b / count;
    s.lab_l_mean = lab_l / count;
    s.lab_b_mean = lab_b / count;

    const auto sm = moments(sat);
    s.sat_mean = sm.mean;
    s.sat_std = sm.std;
    const auto [lo, hi] = std::minmax_element(sat.begin(), sat.end());
    s.sat_min = *lo;
    s.sat_max = *hi;
    // Summation rounding can nudge the mean of a constant field past its bounds.
    s.sat_mean = std::clamp(s.sat_mean, s.sat_min, s.sat_max);

    s.laplacian_variance = laplacian_variance(img);
    return s;
}

ImageStats mean_stats(std::span<const ImageStats> stats) {
    if (stats.empty()) throw std::invalid_argument("mean_stats of an empty list");
    ImageStats out;
    constexpr double ImageStats::*fields[] = {
        &ImageStats::pixel_mean, &ImageStats::pixel_median, &ImageStats::pixel_std,
        &ImageStats::p10_low,    &ImageStats::p10_high,     &ImageStats::mean_r,
        &ImageStats::mean_g,     &ImageStats::mean_b,       &ImageStats::laplacian_variance,
        &ImageStats::sat_mean,   &ImageStats::sat_std,      &ImageStats::sat_min,
        &ImageStats::sat_max,    &ImageStats::lab_l_mean,   &ImageStats::lab_b_mean,
    };
    for (auto field : fields) {
        double sum = 0.0;
        for (const auto& s : stats) sum += s.*field;
        out.*field = sum / static_cast<double>(stats.size());
    }
    return out;
}

std::string format_stats(const ImageStats& s) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "pixel mean %.4f, median %.4f, std %.4f; bottom 10%% mean %.4f, top 10%% mean %.4f; "
                  "RGB means (%.4f, %.4f, %.4f); Laplacian variance %.6f; "
                  "saturation mean %.4f, std %.4f, min %.4f, max %.4f; Lab L mean %.2f, Lab b mean %.2f",
                  s.pixel_mean, s.pixel_median, s.pixel_std, s.p10_low, s.p10_high, s.mean_r, s.mean_g, s.mean_b,
                  s.laplacian_variance, s.sat_mean, s.sat_std, s.sat_min, s.sat_max, s.lab_l_mean, s.lab_b_mean);
    return buf;
}

}  // namespace retouch
