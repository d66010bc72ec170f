#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "retouch/image.hpp"
#include "retouch/scoring.hpp"

namespace retouch {

inline constexpr double kPsnrCap = 100.0;

struct MetricReport {
    double psnr;
    double ssim;
    double delta_e;
};

// 10*log10(1/MSE) over all channel values; identical inputs report kPsnrCap.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Single-scale SSIM of the luma planes: 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, unit dynamic range, averaged over valid windows.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

// Mean per-pixel CIE76 distance.
double delta_e(const ImageBuffer& a, const ImageBuffer& b);

MetricReport evaluate(const ImageBuffer& pred, const ImageBuffer& gt);

/// For each dataset image, the indices of its M most style-similar others
/// under symmetric KL between prompt distributions (self excluded, ties by index).
std::vector<std::vector<std::size_t>> build_reference_pairs(std::span<const ImageBuffer> dataset,
                                                           const DistributionProvider& provider,
                                                           const PromptSet& prompts, std::size_t m);

// The symmetric divergence matrix the pairing ranks by.
std::vector<std::vector<double>> pairwise_divergence(std::span<const PromptDistribution> dists);

}  // namespace retouch
