#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "retouch/errors.hpp"
#include "retouch/filters.hpp"
#include "retouch/scoring.hpp"
#include "test_support.hpp"

using namespace retouch;

namespace {

class FixedLogits final : public DistributionProvider {
public:
    explicit FixedLogits(std::vector<double> l) : l_(std::move(l)) {}
    std::vector<double> logits(const ImageBuffer&, const PromptSet&) const override { return l_; }

private:
    std::vector<double> l_;
};

// Logits read from the first pixel, so each test image picks its own distribution.
class PixelLogits final : public DistributionProvider {
public:
    std::vector<double> logits(const ImageBuffer& img, const PromptSet& prompts) const override {
        std::vector<double> out(prompts.size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = 4.0 * img.at(0, 0, static_cast<int>(k % 3)) * (k + 1);
        return out;
    }
};

double naive_kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

}  // namespace

TEST_CASE("prompt sets are verbatim") {
    const auto& g = PromptSet::global_only();
    REQUIRE(g.size() == 8);
    CHECK(g.prompts[0] == "a dark light photo");
    CHECK(g.prompts[3] == "a high-contrast photo");
    CHECK(g.prompts[4] == "a desaturated colours photo");
    CHECK(g.prompts[7] == "a warm-toned photo");
    const auto& a = PromptSet::all_filters();
    REQUIRE(a.size() == 14);
    for (int i = 0; i < 8; ++i) CHECK(a.prompts[i] == g.prompts[i]);
    CHECK(a.prompts[8] == "a photo with dim highlights");
    CHECK(a.prompts[11] == "a photo with bright shadows");
    CHECK(a.prompts[13] == "a sharp photo");
}

TEST_CASE("softmax") {
    const std::vector<double> equal(8, 1.7);
    for (double p : softmax(equal).probs) CHECK(p == doctest::Approx(0.125));
    const std::vector<double> two = {std::log(1.0), std::log(3.0)};
    const auto d = softmax(two);
    CHECK(d.probs[0] == doctest::Approx(0.25));
    CHECK(d.probs[1] == doctest::Approx(0.75));
    const std::vector<double> shifted = {std::log(1.0) + 500, std::log(3.0) + 500};
    CHECK(softmax(shifted).probs[1] == doctest::Approx(0.75));
    validate_distribution(softmax(shifted));
}

TEST_CASE("distribution validation") {
    CHECK_THROWS_AS(validate_distribution({{0.5, 0.6}}), InvalidDistribution);
    CHECK_THROWS_AS(validate_distribution({{1.0, 0.0}}), InvalidDistribution);
    CHECK_THROWS_AS(validate_distribution({{1.5, -0.5}}), InvalidDistribution);
    CHECK_THROWS_AS(kl_selection_score({{0.5, 0.5}}, {{0.9, 0.2}}), InvalidDistribution);
    validate_distribution({{0.25, 0.75}});
}

TEST_CASE("KL selection score") {
    CHECK(kl_selection_score({{0.3, 0.7}}, {{0.3, 0.7}}) == 0.0);
    // 0.5 ln 2 + 0.5 ln(2/3), summed directly.
    CHECK(kl_selection_score({{0.5, 0.5}}, {{0.25, 0.75}}) == doctest::Approx(0.14384103622589042).epsilon(1e-12));
    const double e = 1e-6;
    CHECK(kl_selection_score({{1 - e, e}}, {{e, 1 - e}}) == doctest::Approx(13.815481926944658).epsilon(1e-9));
}

TEST_CASE("reference distribution is the mean of per-reference distributions") {
    PixelLogits provider;
    const auto& prompts = PromptSet::global_only();
    const auto a = ImageBuffer::filled(2, 2, 0.9f, 0.1f, 0.2f);
    const auto b = ImageBuffer::filled(2, 2, 0.1f, 0.8f, 0.5f);
    const std::vector<ImageBuffer> one = {a};
    const std::vector<ImageBuffer> pair = {a, b};
    const std::vector<ImageBuffer> five(5, a);
    const auto pa = prompt_distribution(provider, a, prompts);
    const auto pb = prompt_distribution(provider, b, prompts);
    CHECK(reference_distribution(provider, one, prompts).probs == pa.probs);
    const auto mean = reference_distribution(provider, pair, prompts);
    for (std::size_t k = 0; k < 8; ++k) CHECK(mean.probs[k] == doctest::Approx(0.5 * (pa.probs[k] + pb.probs[k])));
    const auto same = reference_distribution(provider, five, prompts);
    for (std::size_t k = 0; k < 8; ++k) CHECK(same.probs[k] == doctest::Approx(pa.probs[k]).epsilon(1e-12));
    CHECK_THROWS_AS(reference_distribution(provider, std::span<const ImageBuffer>{}, prompts), EmptyReferenceSet);
}

TEST_CASE("select_best picks the exhaustive argmin with lowest-index ties") {
    StatsProvider provider;
    const auto& prompts = PromptSet::global_only();
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<ImageBuffer> cands, refs;
        for (int i = 0; i < 4; ++i) cands.push_back(testing::random_image(rng, 6, 6));
        for (int i = 0; i < 3; ++i) refs.push_back(testing::random_image(rng, 5, 7));
        const auto refbar = reference_distribution(provider, refs, prompts);
        std::size_t best = 0;
        double best_score = 1e300;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto p = prompt_distribution(provider, cands[i], prompts);
            const double s = naive_kl(p.probs, refbar.probs);
            if (s < best_score) best_score = s, best = i;
        }
        CHECK(select_best(provider, cands, refs, prompts) == best);
    }
    const auto img = ImageBuffer::filled(3, 3, 0.2f, 0.5f, 0.7f);
    const std::vector<ImageBuffer> same(4, img);
    const std::vector<ImageBuffer> far = {ImageBuffer::filled(3, 3, 0.9f, 0.9f, 0.1f)};
    CHECK(select_best(provider, same, far, prompts) == 0);
    const std::vector<ImageBuffer> with_ref = {testing::random_image(rng, 4, 4), far[0], img};
    CHECK(select_best(provider, with_ref, far, prompts) == 1);
}

TEST_CASE("selection is invariant to a constant logit shift") {
    const std::vector<double> base = {0.3, -1.2, 2.0, 0.7, 0.1, 0.0, -0.4, 1.1};
    std::vector<double> shifted = base;
    for (double& l : shifted) l += 37.5;
    const auto a = softmax(base);
    const auto b = softmax(shifted);
    for (std::size_t k = 0; k < a.probs.size(); ++k) CHECK(a.probs[k] == doctest::Approx(b.probs[k]).epsilon(1e-12));
    FixedLogits fixed(base);
    CHECK(prompt_distribution(fixed, ImageBuffer::filled(1, 1, 0, 0, 0), PromptSet::global_only()).probs.size() == 8);
}

TEST_CASE("stats provider is monotone in the named quantities") {
    StatsProvider provider;
    const auto& prompts = PromptSet::all_filters();
    const auto dark = provider.logits(ImageBuffer::filled(2, 2, 0.1f, 0.1f, 0.1f), prompts);
    const auto bright = provider.logits(ImageBuffer::filled(2, 2, 0.9f, 0.9f, 0.9f), prompts);
    REQUIRE(dark.size() == 14);
    CHECK(dark[0] > dark[1]);
    CHECK(bright[1] > bright[0]);
    const auto warm = provider.logits(ImageBuffer::filled(2, 2, 0.8f, 0.5f, 0.2f), prompts);
    CHECK(warm[7] > warm[6]);
    CHECK(warm[5] > warm[4]);
}

TEST_CASE("histogram distance") {
    const auto black = ImageBuffer::filled(4, 4, 0, 0, 0);
    const auto white = ImageBuffer::filled(3, 5, 1, 1, 1);
    CHECK(hist_distance(black, black, HistSpace::RGB) == 0.0);
    CHECK(hist_distance(black, white, HistSpace::RGB) == doctest::Approx(6.0));

    std::mt19937_64 rng(3);
    const auto a = testing::random_image(rng, 9, 8);
    const auto b = testing::random_image(rng, 5, 11);
    // Independent binning of the RGB channels.
    double expected = 0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> ha(64), hb(64);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 9; ++x) ha[std::min(63, int(a.at(x, y, c) * 64.0))] += 1.0 / 72;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 5; ++x) hb[std::min(63, int(b.at(x, y, c) * 64.0))] += 1.0 / 55;
        for (int k = 0; k < 64; ++k) expected += std::abs(ha[k] - hb[k]);
    }
    CHECK(hist_distance(a, b, HistSpace::RGB) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(hist_distance(a, b, HistSpace::YUV) == doctest::Approx(hist_distance(b, a, HistSpace::YUV)));
    const auto c = testing::random_image(rng, 6, 6);
    for (auto space : {HistSpace::RGB, HistSpace::YUV}) {
        CHECK(hist_distance(a, c, space) <= hist_distance(a, b, space) + hist_distance(b, c, space) + 1e-12);
    }
    const std::vector<ImageBuffer> refs = {b, c};
    CHECK(hist_distance_to_set(a, refs, HistSpace::RGB) ==
          doctest::Approx(0.5 * (hist_distance(a, b, HistSpace::RGB) + hist_distance(a, c, HistSpace::RGB))));
}

TEST_CASE("gram distance") {
    const std::vector<FeatureMap> u = {{1, 1, {2.0}}};
    const std::vector<FeatureMap> v = {{1, 1, {3.0}}};
    CHECK(gram_distance(u, u) == 0.0);
    CHECK(gram_distance(u, v) == doctest::Approx(25.0));  // (4 - 9)^2

    const std::vector<FeatureMap> a = {{2, 3, {1, 2, 3, 4, 5, 6}}};
    const std::vector<FeatureMap> permuted = {{2, 3, {3, 1, 2, 6, 4, 5}}};
    CHECK(gram_distance(a, permuted) == doctest::Approx(0.0));
    const std::vector<FeatureMap> wrong = {{3, 2, {1, 2, 3, 4, 5, 6}}};
    CHECK_THROWS_AS(gram_distance(a, wrong), ShapeMismatch);
}

TEST_CASE("score kinds") {
    CHECK(score_kind_from_name("clip-kl-global") == ScoreKind::ClipKlGlobal);
    CHECK(score_kind_from_name("yuv-hist") == ScoreKind::YuvHist);
    CHECK(score_kind_name(ScoreKind::ClipKlAll) == "clip-kl-all");
    CHECK_THROWS_AS(score_kind_from_name("lpips"), ConfigError);
    auto provider = std::make_shared<StatsProvider>();
    const std::vector<ImageBuffer> refs = {ImageBuffer::filled(4, 4, 0.2f, 0.4f, 0.6f)};
    for (auto kind : {ScoreKind::ClipKlGlobal, ScoreKind::ClipKlAll, ScoreKind::RgbHist, ScoreKind::YuvHist}) {
        SelectionScorer scorer(kind, provider, refs);
        CHECK(scorer.score(refs[0]) == doctest::Approx(0.0));
        CHECK(scorer.score(ImageBuffer::filled(4, 4, 0.9f, 0.1f, 0.1f)) > 0.0);
    }
}

TEST_CASE("embedding frames") {
    const std::vector<float> v = {1.5f, -2.25f, 0.0f};
    const auto frame = encode_embedding_frame(v);
    CHECK(frame.size() == 16);
    CHECK(static_cast<unsigned char>(frame[0]) == 3);
    CHECK(decode_embedding_frame(frame) == v);
    CHECK_THROWS_AS(decode_embedding_frame("ab"), BackendError);
    CHECK_THROWS_AS(decode_embedding_frame(frame.substr(0, 10)), BackendError);
}

TEST_CASE("HTTP embedding provider") {
    testing::LocalServer fake;
    std::atomic<int> text_calls{0};
    fake.server.Post("/clip/text", [&](const httplib::Request& req, httplib::Response& res) {
        ++text_calls;
        const float x = static_cast<float>(req.body.size() % 7);
        const std::vector<float> v = {x, 1.0f};
        res.set_content(encode_embedding_frame(v), "application/octet-stream");
    });
    fake.server.Post("/clip/image", [&](const httplib::Request& req, httplib::Response& res) {
        const auto img = decode_image({reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()});
        const std::vector<float> v = {img.at(0, 0, 0), 2.0f};
        res.set_content(encode_embedding_frame(v), "application/octet-stream");
    });
    fake.start();

    auto backend = std::make_shared<HttpEmbeddingBackend>(fake.url("/clip"));
    EmbeddingProvider provider(backend);
    const auto img = ImageBuffer::filled(3, 3, 0.6f, 0.2f, 0.2f);
    const auto logits = provider.logits(img, PromptSet::global_only());
    REQUIRE(logits.size() == 8);
    const auto& prompts = PromptSet::global_only().prompts;
    for (std::size_t k = 0; k < 8; ++k) {
        const double expected = std::round(0.6 * 255) / 255 * (prompts[k].size() % 7) + 2.0;
        CHECK(logits[k] == doctest::Approx(expected).epsilon(1e-6));
    }
    provider.logits(img, PromptSet::global_only());
    CHECK(text_calls == 8);

    // Concurrent queries agree with sequential ones.
    std::vector<std::thread> threads;
    std::vector<std::vector<double>> results(4);
    for (int i = 0; i < 4; ++i) threads.emplace_back([&, i] { results[i] = provider.logits(img, PromptSet::global_only()); });
    for (auto& t : threads) t.join();
    for (const auto& r : results) CHECK(r == logits);
}

TEST_CASE("embedding backend failures surface") {
    HttpEmbeddingBackend dead("http://127.0.0.1:1/x", std::chrono::seconds(2));
    CHECK_THROWS_AS(dead.embed_text("a"), BackendError);
    CHECK_THROWS_AS(HttpEmbeddingBackend("not a url"), ConfigError);

    testing::LocalServer fake;
    fake.server.Post("/e/text", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    fake.start();
    HttpEmbeddingBackend broken(fake.url("/e"));
    CHECK_THROWS_AS(broken.embed_text("a"), BackendError);
}
