#pragma once

#include <span>
#include <string>

#include "retouch/image.hpp"

namespace retouch {

/// Image-level statistics handed to the critic alongside the pixels.
///
/// Intensity statistics run over every channel value of the image (3 per
/// pixel). p10_low / p10_high are the means of the bottom / top tenth of
/// those values. Saturation is the HSV S channel; laplacian_variance is the
/// variance of the 4-neighbour Laplacian of the luma plane.
struct ImageStats {
    double pixel_mean = 0.0;
    double pixel_median = 0.0;
    double pixel_std = 0.0;
    double p10_low = 0.0;
    double p10_high = 0.0;
    double mean_r = 0.0;
    double mean_g = 0.0;
    double mean_b = 0.0;
    double laplacian_variance = 0.0;
    double sat_mean = 0.0;
    double sat_std = 0.0;
    double sat_min = 0.0;
    double sat_max = 0.0;
    double lab_l_mean = 0.0;
    double lab_b_mean = 0.0;

    bool operator==(const ImageStats&) const = default;
};

ImageStats compute_stats(const ImageBuffer& img);

// Field-wise arithmetic mean; the input must be non-empty.
ImageStats mean_stats(std::span<const ImageStats> stats);

// Single-line rendering used inside agent prompts.
std::string format_stats(const ImageStats& s);

}  // namespace retouch
