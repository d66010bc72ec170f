#include <doctest.h>

#include <cmath>
#include <random>

#include "retouch/color.hpp"
#include "retouch/errors.hpp"
#include "retouch/filters.hpp"
#include "test_support.hpp"

using namespace retouch;
using testing::gray_row;

namespace {

ImageBuffer apply(const ImageBuffer& img, FilterKind k, double f) {
    return apply_filter(img, {k, f});
}

// 2x box downsample, used by the resolution-independence check.
ImageBuffer half(const ImageBuffer& img) {
    const int w = img.width() / 2, h = img.height() / 2;
    std::vector<float> d(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                d[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) + img.at(2 * x, 2 * y + 1, c) +
                     img.at(2 * x + 1, 2 * y + 1, c)) /
                    4.0f;
    return ImageBuffer(w, h, std::move(d));
}

}  // namespace

TEST_CASE("filter names are canonical") {
    CHECK(kAllFilters.size() == 7);
    for (auto k : kAllFilters) CHECK(filter_from_name(filter_name(k)) == k);
    CHECK(filter_name(FilterKind::Temperature) == "temperature");
    CHECK(aspect_label(FilterKind::Highlight) == "Highlight");
    CHECK_FALSE(filter_from_name("vignette").has_value());
}

TEST_CASE("zero parameter is a bitwise identity") {
    std::mt19937_64 rng(3);
    const auto img = testing::random_image(rng, 9, 6);
    for (auto k : kAllFilters) CHECK(apply(img, k, 0.0) == img);
    CHECK(execute_program(img, {}) == img);
}

TEST_CASE("kernel examples") {
    const auto quarter = ImageBuffer::filled(3, 3, 0.25f, 0.25f, 0.25f);
    const auto doubled = apply(quarter, FilterKind::Exposure, 1.0);
    for (float v : doubled.data()) CHECK(v == 0.5f);

    const auto red = apply(ImageBuffer(1, 1, {1, 0, 0}), FilterKind::Saturation, -1.0);
    for (int c = 0; c < 3; ++c) CHECK(red.at(0, 0, c) == doctest::Approx(0.299));

    const auto gray = ImageBuffer::filled(5, 4, 0.3f, 0.3f, 0.3f);
    CHECK(apply(gray, FilterKind::Contrast, 0.7) == gray);
    const auto flat = ImageBuffer::filled(5, 4, 0.3f, 0.6f, 0.2f);
    CHECK(apply(flat, FilterKind::Texture, 0.9) == flat);

    const auto warm = apply(ImageBuffer(1, 1, {0.4f, 0.4f, 0.4f}), FilterKind::Temperature, 1.0);
    CHECK(warm.at(0, 0, 0) == doctest::Approx(0.5));
    CHECK(warm.at(0, 0, 1) == 0.4f);
    CHECK(warm.at(0, 0, 2) == doctest::Approx(0.3));

    // m = clamp(1 - 2*0.1) = 0.8 so the dark pixel becomes 0.1 + 0.5*0.5*0.8.
    const auto shadow = apply(gray_row({0.1f, 0.9f}), FilterKind::Shadow, 0.5);
    CHECK(shadow.at(0, 0, 0) == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(shadow.at(1, 0, 0) == 0.9f);

    const auto highlight = apply(gray_row({0.1f, 0.9f}), FilterKind::Highlight, -0.5);
    CHECK(highlight.at(0, 0, 0) == 0.1f);
    CHECK(highlight.at(1, 0, 0) == doctest::Approx(0.9 - 0.25 * 0.8).epsilon(1e-6));
}

TEST_CASE("contrast scales around the global mean") {
    const auto img = apply(gray_row({0.2f, 0.8f}), FilterKind::Contrast, 0.5);
    CHECK(img.at(0, 0, 0) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(img.at(1, 0, 0) == doctest::Approx(0.95).epsilon(1e-6));
}

TEST_CASE("program order matters") {
    const auto img = gray_row({0.2f, 0.8f});
    const RetouchProgram a{{{FilterKind::Contrast, 0.5}, {FilterKind::Exposure, 0.5}}, ""};
    const RetouchProgram b{{{FilterKind::Exposure, 0.5}, {FilterKind::Contrast, 0.5}}, ""};
    const auto ra = execute_program(img, a);
    const auto rb = execute_program(img, b);
    // Oracle values from a scalar evaluation of the kernels in double precision.
    CHECK(ra.at(0, 0, 0) == doctest::Approx(0.07071067811865482).epsilon(1e-6));
    CHECK(ra.at(1, 0, 0) == 1.0f);
    CHECK(rb.at(0, 0, 0) == doctest::Approx(0.10355339059327384).epsilon(1e-6));
    CHECK(rb.at(1, 0, 0) == 1.0f);
    CHECK_FALSE(ra == rb);
}

TEST_CASE("exposure up then down restores the image") {
    const auto img = ImageBuffer::filled(4, 4, 0.3f, 0.3f, 0.3f);
    const RetouchProgram p{{{FilterKind::Exposure, 1.0}, {FilterKind::Exposure, -1.0}}, ""};
    const auto out = execute_program(img, p);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.3f));
}

TEST_CASE("parameters outside [-1,1] are rejected") {
    const auto img = ImageBuffer::filled(2, 2, 0.5f, 0.5f, 0.5f);
    CHECK_THROWS_AS(apply(img, FilterKind::Exposure, 1.0001), ParamOutOfRange);
    CHECK_THROWS_AS(apply(img, FilterKind::Texture, -2), ParamOutOfRange);
    CHECK_THROWS_AS(apply(img, FilterKind::Contrast, NAN), ParamOutOfRange);
    CHECK_THROWS_AS(execute_program(img, {{{FilterKind::Exposure, 0.1}, {FilterKind::Shadow, 3}}, ""}), ParamOutOfRange);
}

TEST_CASE("outputs stay in range and keep their shape") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 300; ++i) {
        const auto img = testing::random_image(rng, 1 + static_cast<int>(rng() % 12), 1 + static_cast<int>(rng() % 12));
        const auto k = kAllFilters[rng() % 7];
        const auto out = apply(img, k, u(rng));
        CHECK(out.same_shape(img));
        for (float v : out.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
}

TEST_CASE("exposure is monotone in its parameter") {
    std::mt19937_64 rng(23);
    const auto img = testing::random_image(rng, 8, 8);
    const auto lo = apply(img, FilterKind::Exposure, -0.3);
    const auto hi = apply(img, FilterKind::Exposure, 0.4);
    for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(lo.data()[i] <= hi.data()[i]);
}

TEST_CASE("saturation -1 collapses every pixel to gray") {
    std::mt19937_64 rng(29);
    const auto out = apply(testing::random_image(rng, 10, 10), FilterKind::Saturation, -1.0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            CHECK(out.at(x, y, 0) == out.at(x, y, 1));
            CHECK(out.at(x, y, 1) == out.at(x, y, 2));
        }
}

TEST_CASE("highlight and shadow only touch their half of the tonal range") {
    std::mt19937_64 rng(31);
    const auto img = testing::random_image(rng, 16, 16);
    const auto hi = apply(img, FilterKind::Highlight, 0.8);
    const auto sh = apply(img, FilterKind::Shadow, -0.8);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const float l = luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            for (int c = 0; c < 3; ++c) {
                if (l <= 0.5f) CHECK(hi.at(x, y, c) == img.at(x, y, c));
                if (l >= 0.5f) CHECK(sh.at(x, y, c) == img.at(x, y, c));
            }
        }
}

TEST_CASE("texture blur radius follows the image size") {
    CHECK(texture_sigma(64, 64) == 1.0);
    CHECK(texture_sigma(4000, 3000) == doctest::Approx(8.0));
    std::mt19937_64 rng(37);
    const auto img = testing::random_image(rng, 12, 12);
    const auto sharp = apply(img, FilterKind::Texture, 1.0);
    const auto soft = apply(img, FilterKind::Texture, -1.0);
    auto spread = [](const ImageBuffer& a) {
        double s = 0;
        for (int y = 0; y < a.height(); ++y)
            for (int x = 1; x < a.width(); ++x) s += std::abs(a.at(x, y, 0) - a.at(x - 1, y, 0));
        return s;
    };
    CHECK(spread(sharp) > spread(img));
    CHECK(spread(soft) < spread(img));
}

TEST_CASE("point-wise filters commute with downsampling") {
    std::mt19937_64 rng(41);
    // Low-amplitude content keeps every filter away from clamping.
    std::uniform_real_distribution<float> u(0.35f, 0.55f);
    std::vector<float> d(64 * 64 * 3);
    for (auto& v : d) v = u(rng);
    const ImageBuffer img(64, 64, d);
    for (auto k : kAllFilters) {
        if (k == FilterKind::Texture) continue;
        const auto a = half(apply(img, k, 0.3));
        const auto b = apply(half(img), k, 0.3);
        double err = 0;
        for (std::size_t i = 0; i < a.data().size(); ++i) err += std::abs(a.data()[i] - b.data()[i]);
        CHECK(err / a.data().size() <= 1e-3);
    }
}
