#include "retouch/filters.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "retouch/color.hpp"
#include "retouch/errors.hpp"

namespace retouch {

std::string_view filter_name(FilterKind kind) noexcept {
    switch (kind) {
        case FilterKind::Exposure: return "exposure";
        case FilterKind::Contrast: return "contrast";
        case FilterKind::Highlight: return "highlight";
        case FilterKind::Shadow: return "shadow";
        case FilterKind::Saturation: return "saturation";
        case FilterKind::Temperature: return "temperature";
        case FilterKind::Texture: return "texture";
    }
    return "";
}

std::string_view aspect_label(FilterKind kind) noexcept {
    switch (kind) {
        case FilterKind::Exposure: return "Exposure";
        case FilterKind::Contrast: return "Contrast";
        case FilterKind::Highlight: return "Highlight";
        case FilterKind::Shadow: return "Shadow";
        case FilterKind::Saturation: return "Saturation";
        case FilterKind::Temperature: return "Temperature";
        case FilterKind::Texture: return "Texture";
    }
    return "";
}

std::optional<FilterKind> filter_from_name(std::string_view name) noexcept {
    for (auto kind : kAllFilters) {
        if (filter_name(kind) == name) return kind;
    }
    return std::nullopt;
}

double texture_sigma(int width, int height) noexcept {
    return std::max(1.0, 0.002 * std::max(width, height));
}

namespace {

int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

float clamp01(double v) {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

// Per-pixel kernels evaluate in double and store float32.
template <typename PixelFn>
ImageBuffer map_pixels(const ImageBuffer& img, PixelFn fn) {
    const auto in = img.data();
    std::vector<float> out(in.size());
    for (std::size_t i = 0; i < in.size(); i += 3) {
        fn(in[i], in[i + 1], in[i + 2], &out[i]);
    }
    return ImageBuffer(img.width(), img.height(), std::move(out), img.source_depth());
}

ImageBuffer exposure(const ImageBuffer& img, double f) {
    const double gain = std::exp2(f);
    return map_pixels(img, [gain](float r, float g, float b, float* o) {
        o[0] = clamp01(r * gain);
        o[1] = clamp01(g * gain);
        o[2] = clamp01(b * gain);
    });
}

ImageBuffer contrast(const ImageBuffer& img, double f) {
    double sum = 0.0;
    for (float v : img.data()) sum += v;
    const double mu = sum / static_cast<double>(img.data().size());
    const double k = 1.0 + f;
    return map_pixels(img, [mu, k](float r, float g, float b, float* o) {
        o[0] = clamp01(mu + (r - mu) * k);
        o[1] = clamp01(mu + (g - mu) * k);
        o[2] = clamp01(mu + (b - mu) * k);
    });
}

ImageBuffer highlight(const ImageBuffer& img, double f) {
    return map_pixels(img, [f](float r, float g, float b, float* o) {
        const double mask = std::clamp(2.0 * luma(r, g, b) - 1.0, 0.0, 1.0);
        const double lift = 0.5 * f * mask;
        o[0] = clamp01(r + lift);
        o[1] = clamp01(g + lift);
        o[2] = clamp01(b + lift);
    });
}

ImageBuffer shadow(const ImageBuffer& img, double f) {
    return map_pixels(img, [f](float r, float g, float b, float* o) {
        const double mask = std::clamp(1.0 - 2.0 * luma(r, g, b), 0.0, 1.0);
        const double lift = 0.5 * f * mask;
        o[0] = clamp01(r + lift);
        o[1] = clamp01(g + lift);
        o[2] = clamp01(b + lift);
    });
}

ImageBuffer saturation(const ImageBuffer& img, double f) {
    const double k = 1.0 + f;
    return map_pixels(img, [k](float r, float g, float b, float* o) {
        const double l = luma(r, g, b);
        o[0] = clamp01(l + (r - l) * k);
        o[1] = clamp01(l + (g - l) * k);
        o[2] = clamp01(l + (b - l) * k);
    });
}

ImageBuffer temperature(const ImageBuffer& img, double f) {
    const double red_gain = 1.0 + 0.25 * f;
    const double blue_gain = 1.0 - 0.25 * f;
    return map_pixels(img, [=](float r, float g, float b, float* o) {
        o[0] = clamp01(r * red_gain);
        o[1] = g;
        o[2] = clamp01(b * blue_gain);
    });
}

ImageBuffer texture(const ImageBuffer& img, double f) {
    const auto blurred = gaussian_blur(img, texture_sigma(img.width(), img.height()));
    const auto in = img.data();
    std::vector<float> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = clamp01(in[i] + f * (in[i] - blurred[i]));
    }
    return ImageBuffer(img.width(), img.height(), std::move(out), img.source_depth());
}

}  // namespace

std::vector<double> gaussian_blur(const ImageBuffer& img, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) k /= total;

    const int w = img.width();
    const int h = img.height();
    const auto in = img.data();
    std::vector<double> horizontal(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] * in[(static_cast<std::size_t>(y) * w + reflect(x + i, w)) * 3 + c];
                }
                horizontal[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    std::vector<double> out(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] *
                           horizontal[(static_cast<std::size_t>(reflect(y + i, h)) * w + x) * 3 + c];
                }
                out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    return out;
}

ImageBuffer apply_filter(const ImageBuffer& img, const RetouchStep& step) {
    const double f = step.param;
    if (!(std::abs(f) <= 1.0)) {
        throw ParamOutOfRange(std::string(filter_name(step.filter)) + " parameter " + std::to_string(f) +
                              " outside [-1, 1]");
    }
    if (f == 0.0) return img;
    switch (step.filter) {
        case FilterKind::Exposure: return exposure(img, f);
        case FilterKind::Contrast: return contrast(img, f);
        case FilterKind::Highlight: return highlight(img, f);
        case FilterKind::Shadow: return shadow(img, f);
        case FilterKind::Saturation: return saturation(img, f);
        case FilterKind::Temperature: return temperature(img, f);
        case FilterKind::Texture: return texture(img, f);
    }
    return img;
}

ImageBuffer execute_program(const ImageBuffer& img, const RetouchProgram& program) {
    ImageBuffer current = img;
    for (const auto& step : program.steps) {
        current = apply_filter(current, step);
    }
    return current;
}

}  // namespace retouch
