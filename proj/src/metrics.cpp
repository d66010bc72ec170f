#include "retouch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retouch/color.hpp"
#include "retouch/errors.hpp"

namespace retouch {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("images have different dimensions");
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[i] = std::exp(-(d * d) / (2.0 * kWindowSigma * kWindowSigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// Valid-mode separable filtering of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h) {
    static const auto win = gaussian_window();
    const int ow = w - kWindow + 1;
    const int oh = h - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += win[k] * plane[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += win[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    const auto da = a.data();
    const auto db = b.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(da.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    const int w = a.width();
    const int h = a.height();
    if (std::min(w, h) < kWindow) throw TooSmall("SSIM needs both sides >= 11 pixels");
    const auto la = luminance(a);
    const auto lb = luminance(b);
    const std::size_t n = la.size();
    std::vector<double> x(la.begin(), la.end());
    std::vector<double> y(lb.begin(), lb.end());
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h);
    const auto my = filter_valid(y, w, h);
    const auto exx = filter_valid(xx, w, h);
    const auto eyy = filter_valid(yy, w, h);
    const auto exy = filter_valid(xy, w, h);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cxy = exy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    return total / static_cast<double>(mx.size());
}

double delta_e(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    const auto la = rgb_to_lab(a);
    const auto lb = rgb_to_lab(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        const double dl = la[i].L - lb[i].L;
        const double da = la[i].a - lb[i].a;
        const double db = la[i].b - lb[i].b;
        sum += std::sqrt(dl * dl + da * da + db * db);
    }
    return sum / static_cast<double>(la.size());
}

MetricReport evaluate(const ImageBuffer& pred, const ImageBuffer& gt) {
    return {psnr(pred, gt), ssim(pred, gt), delta_e(pred, gt)};
}

std::vector<std::vector<double>> pairwise_divergence(std::span<const PromptDistribution> dists) {
    const std::size_t n = dists.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = kl_selection_score(dists[i], dists[j]) + kl_selection_score(dists[j], dists[i]);
            d[i][j] = s;
            d[j][i] = s;
        }
    return d;
}

std::vector<std::vector<std::size_t>> build_reference_pairs(std::span<const ImageBuffer> dataset,
                                                           const DistributionProvider& provider,
                                                           const PromptSet& prompts, std::size_t m) {
    if (dataset.size() <= m) {
        throw InsufficientDataset("dataset of " + std::to_string(dataset.size()) + " images cannot supply " +
                                  std::to_string(m) + " references per image");
    }
    std::vector<PromptDistribution> dists;
    dists.reserve(dataset.size());
    for (const auto& img : dataset) dists.push_back(prompt_distribution(provider, img, prompts));
    const auto div = pairwise_divergence(dists);

    std::vector<std::vector<std::size_t>> pairs(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < dataset.size(); ++j)
            if (j != i) others.push_back(j);
        std::stable_sort(others.begin(), others.end(),
                         [&](std::size_t x, std::size_t y) { return div[i][x] < div[i][y]; });
        others.resize(m);
        pairs[i] = std::move(others);
    }
    return pairs;
}

}  // namespace retouch
