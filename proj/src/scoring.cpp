#include "retouch/scoring.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "http_endpoint.hpp"
#include "retouch/color.hpp"
#include "retouch/errors.hpp"
#include "retouch/stats.hpp"

namespace retouch {

const PromptSet& PromptSet::global_only() {
    static const PromptSet set{PromptSetKind::GlobalOnly,
                               {
                                   "a dark light photo",
                                   "a bright light photo",
                                   "a low-contrast photo",
                                   "a high-contrast photo",
                                   "a desaturated colours photo",
                                   "a vivid colours photo",
                                   "a cool-toned photo",
                                   "a warm-toned photo",
                               }};
    return set;
}

const PromptSet& PromptSet::all_filters() {
    static const PromptSet set = [] {
        PromptSet s{PromptSetKind::AllFilters, global_only().prompts};
        for (const char* p : {"a photo with dim highlights", "a photo with bright highlights",
                              "a photo with dark shadows", "a photo with bright shadows", "a smooth photo",
                              "a sharp photo"}) {
            s.prompts.emplace_back(p);
        }
        return s;
    }();
    return set;
}

const PromptSet& PromptSet::of(PromptSetKind kind) {
    return kind == PromptSetKind::GlobalOnly ? global_only() : all_filters();
}

void validate_distribution(const PromptDistribution& d) {
    if (d.probs.empty()) throw InvalidDistribution("empty distribution");
    double sum = 0.0;
    for (double p : d.probs) {
        if (!std::isfinite(p) || p <= 0.0) throw InvalidDistribution("distribution entries must be finite and > 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidDistribution("distribution does not sum to 1");
}

PromptDistribution softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidDistribution("softmax of zero logits");
    const double peak = *std::max_element(logits.begin(), logits.end());
    PromptDistribution out;
    out.probs.reserve(logits.size());
    double total = 0.0;
    for (double l : logits) {
        out.probs.push_back(std::exp(l - peak));
        total += out.probs.back();
    }
    for (double& p : out.probs) p /= total;
    return out;
}

std::vector<double> StatsProvider::logits(const ImageBuffer& img, const PromptSet& prompts) const {
    const ImageStats s = compute_stats(img);
    std::vector<double> stats = {
        s.pixel_mean,
        std::min(1.0, 2.0 * s.pixel_std),
        s.sat_mean,
        std::clamp(0.5 + (s.mean_r - s.mean_b), 0.0, 1.0),
    };
    if (prompts.kind == PromptSetKind::AllFilters) {
        stats.push_back(s.p10_high);
        stats.push_back(s.p10_low);
        stats.push_back(std::min(1.0, 4.0 * std::sqrt(s.laplacian_variance)));
    }
    std::vector<double> out;
    out.reserve(prompts.size());
    for (double stat : stats) {
        const double strength = 6.0 * (stat - 0.5);
        out.push_back(-strength);
        out.push_back(strength);
    }
    out.resize(prompts.size(), 0.0);
    return out;
}

std::vector<float> decode_embedding_frame(std::string_view body) {
    if (body.size() < 4) throw BackendError("embedding response shorter than its length prefix");
    std::uint32_t dim = 0;
    for (int i = 3; i >= 0; --i) dim = (dim << 8) | static_cast<unsigned char>(body[i]);
    if (dim == 0) throw BackendError("embedding dimension is zero");
    if (body.size() != 4 + static_cast<std::size_t>(dim) * 4) {
        throw BackendError("embedding response length does not match its prefix");
    }
    std::vector<float> out(dim);
    for (std::uint32_t k = 0; k < dim; ++k) {
        std::uint32_t bits = 0;
        for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(body[4 + 4 * k + i]);
        std::memcpy(&out[k], &bits, 4);
        if (!std::isfinite(out[k])) throw BackendError("non-finite embedding value");
    }
    return out;
}

std::string encode_embedding_frame(std::span<const float> values) {
    std::string out(4 + values.size() * 4, '\0');
    const auto dim = static_cast<std::uint32_t>(values.size());
    for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((dim >> (8 * i)) & 0xFF);
    for (std::size_t k = 0; k < values.size(); ++k) {
        std::uint32_t bits;
        std::memcpy(&bits, &values[k], 4);
        for (int i = 0; i < 4; ++i) out[4 + 4 * k + i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    return out;
}

HttpEmbeddingBackend::HttpEmbeddingBackend(std::string url, std::chrono::seconds timeout, int max_side)
    : url_(std::move(url)), timeout_(timeout), max_side_(max_side) {
    detail::split_endpoint(url_);
}

std::vector<float> HttpEmbeddingBackend::post(const std::string& suffix, const std::string& body,
                                              const std::string& content_type) {
    const auto endpoint = detail::split_endpoint(url_);
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const auto res = client.Post(endpoint.path + suffix, body, content_type);
    if (!res) throw BackendError("embedding backend unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendError("embedding backend returned HTTP " + std::to_string(res->status));
    return decode_embedding_frame(res->body);
}

std::vector<float> HttpEmbeddingBackend::embed_image(const ImageBuffer& img) {
    const auto png = encode_png(thumbnail(img, max_side_));
    return post("/image", std::string(png.begin(), png.end()), "image/png");
}

std::vector<float> HttpEmbeddingBackend::embed_text(std::string_view text) {
    return post("/text", std::string(text), "text/plain; charset=utf-8");
}

EmbeddingProvider::EmbeddingProvider(std::shared_ptr<EmbeddingBackend> backend) : backend_(std::move(backend)) {}

std::vector<double> EmbeddingProvider::logits(const ImageBuffer& img, const PromptSet& prompts) const {
    std::vector<std::vector<float>> texts;
    {
        std::lock_guard lock(mutex_);
        for (const auto& p : prompts.prompts) {
            auto it = text_cache_.find(p);
            if (it == text_cache_.end()) it = text_cache_.emplace(p, backend_->embed_text(p)).first;
            texts.push_back(it->second);
        }
    }
    const auto image = backend_->embed_image(img);
    std::vector<double> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.size() != image.size()) throw BackendError("image and text embedding dimensions differ");
        double dot = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) dot += static_cast<double>(image[i]) * t[i];
        out.push_back(dot);
    }
    return out;
}

PromptDistribution prompt_distribution(const DistributionProvider& provider, const ImageBuffer& img,
                                       const PromptSet& prompts) {
    const auto l = provider.logits(img, prompts);
    return softmax(l);
}

PromptDistribution reference_distribution(const DistributionProvider& provider, std::span<const ImageBuffer> refs,
                                          const PromptSet& prompts) {
    if (refs.empty()) throw EmptyReferenceSet("reference set is empty");
    PromptDistribution mean{std::vector<double>(prompts.size(), 0.0)};
    for (const auto& ref : refs) {
        const auto q = prompt_distribution(provider, ref, prompts);
        for (std::size_t k = 0; k < q.probs.size(); ++k) mean.probs[k] += q.probs[k];
    }
    for (double& p : mean.probs) p /= static_cast<double>(refs.size());
    return mean;
}

double kl_selection_score(const PromptDistribution& cand, const PromptDistribution& refbar) {
    validate_distribution(cand);
    validate_distribution(refbar);
    if (cand.probs.size() != refbar.probs.size()) throw InvalidDistribution("distribution sizes differ");
    double kl = 0.0;
    for (std::size_t k = 0; k < cand.probs.size(); ++k) {
        kl += cand.probs[k] * (std::log(cand.probs[k]) - std::log(refbar.probs[k]));
    }
    // Rounding can leave a tiny negative residue for identical inputs.
    return std::max(kl, 0.0);
}

std::size_t argmin_first(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] < values[best]) best = i;
    }
    return best;
}

std::size_t select_best(const DistributionProvider& provider, std::span<const ImageBuffer> candidates,
                        std::span<const ImageBuffer> refs, const PromptSet& prompts) {
    if (candidates.empty()) throw PreconditionError("candidate list is empty");
    const auto refbar = reference_distribution(provider, refs, prompts);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& c : candidates) scores.push_back(kl_selection_score(prompt_distribution(provider, c, prompts), refbar));
    return argmin_first(scores);
}

namespace {

using Histogram = std::array<double, kHistogramBins>;

int bin_of(double v) {
    return std::clamp(static_cast<int>(std::floor(v * kHistogramBins)), 0, kHistogramBins - 1);
}

constexpr double kUMax = 0.436;
constexpr double kVMax = 0.615;

std::array<Histogram, 3> histograms(const ImageBuffer& img, HistSpace space) {
    std::array<Histogram, 3> h{};
    const auto data = img.data();
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = data[3 * i];
        const double g = data[3 * i + 1];
        const double b = data[3 * i + 2];
        if (space == HistSpace::RGB) {
            h[0][bin_of(r)] += 1.0;
            h[1][bin_of(g)] += 1.0;
            h[2][bin_of(b)] += 1.0;
        } else {
            const double y = kLumaR * r + kLumaG * g + kLumaB * b;
            const double u = -0.14713 * r - 0.28886 * g + 0.436 * b;
            const double v = 0.615 * r - 0.51499 * g - 0.10001 * b;
            h[0][bin_of(y)] += 1.0;
            h[1][bin_of((u + kUMax) / (2.0 * kUMax))] += 1.0;
            h[2][bin_of((v + kVMax) / (2.0 * kVMax))] += 1.0;
        }
    }
    for (auto& channel : h)
        for (double& c : channel) c /= static_cast<double>(n);
    return h;
}

}  // namespace

double hist_distance(const ImageBuffer& a, const ImageBuffer& b, HistSpace space) {
    const auto ha = histograms(a, space);
    const auto hb = histograms(b, space);
    double total = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < kHistogramBins; ++k) total += std::abs(ha[c][k] - hb[c][k]);
    return total;
}

double hist_distance_to_set(const ImageBuffer& candidate, std::span<const ImageBuffer> refs, HistSpace space) {
    if (refs.empty()) throw EmptyReferenceSet("reference set is empty");
    double sum = 0.0;
    for (const auto& ref : refs) sum += hist_distance(candidate, ref, space);
    return sum / static_cast<double>(refs.size());
}

namespace {

std::vector<double> gram(const FeatureMap& f) {
    if (f.channels < 1 || f.positions < 1 ||
        f.values.size() != static_cast<std::size_t>(f.channels) * f.positions) {
        throw ShapeMismatch("feature map size does not match channels x positions");
    }
    const double norm = static_cast<double>(f.channels) * f.positions;
    std::vector<double> g(static_cast<std::size_t>(f.channels) * f.channels);
    for (int i = 0; i < f.channels; ++i) {
        for (int j = i; j < f.channels; ++j) {
            double dot = 0.0;
            for (int p = 0; p < f.positions; ++p) {
                dot += f.values[static_cast<std::size_t>(i) * f.positions + p] *
                       f.values[static_cast<std::size_t>(j) * f.positions + p];
            }
            g[static_cast<std::size_t>(i) * f.channels + j] = dot / norm;
            g[static_cast<std::size_t>(j) * f.channels + i] = dot / norm;
        }
    }
    return g;
}

}  // namespace

double gram_distance(std::span<const FeatureMap> a, std::span<const FeatureMap> b) {
    if (a.size() != b.size()) throw ShapeMismatch("feature lists have different layer counts");
    double total = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (a[l].channels != b[l].channels) throw ShapeMismatch("layer channel counts differ");
        const auto ga = gram(a[l]);
        const auto gb = gram(b[l]);
        for (std::size_t k = 0; k < ga.size(); ++k) total += (ga[k] - gb[k]) * (ga[k] - gb[k]);
    }
    return total;
}

std::string_view score_kind_name(ScoreKind kind) noexcept {
    switch (kind) {
        case ScoreKind::ClipKlGlobal: return "clip-kl-global";
        case ScoreKind::ClipKlAll: return "clip-kl-all";
        case ScoreKind::RgbHist: return "rgb-hist";
        case ScoreKind::YuvHist: return "yuv-hist";
    }
    return "";
}

ScoreKind score_kind_from_name(std::string_view name) {
    for (auto kind : {ScoreKind::ClipKlGlobal, ScoreKind::ClipKlAll, ScoreKind::RgbHist, ScoreKind::YuvHist}) {
        if (score_kind_name(kind) == name) return kind;
    }
    throw ConfigError("unknown score kind: " + std::string(name));
}

SelectionScorer::SelectionScorer(ScoreKind kind, std::shared_ptr<const DistributionProvider> provider,
                                 std::vector<ImageBuffer> refs)
    : kind_(kind), provider_(std::move(provider)), refs_(std::move(refs)) {
    if (refs_.empty()) throw EmptyReferenceSet("reference set is empty");
    if (kind_ == ScoreKind::ClipKlGlobal || kind_ == ScoreKind::ClipKlAll) {
        if (!provider_) throw ConfigError("KL selection score needs a distribution provider");
        const auto& prompts =
            PromptSet::of(kind_ == ScoreKind::ClipKlGlobal ? PromptSetKind::GlobalOnly : PromptSetKind::AllFilters);
        refbar_ = reference_distribution(*provider_, refs_, prompts);
    }
}

double SelectionScorer::score(const ImageBuffer& candidate) const {
    switch (kind_) {
        case ScoreKind::ClipKlGlobal:
            return kl_selection_score(prompt_distribution(*provider_, candidate, PromptSet::global_only()), refbar_);
        case ScoreKind::ClipKlAll:
            return kl_selection_score(prompt_distribution(*provider_, candidate, PromptSet::all_filters()), refbar_);
        case ScoreKind::RgbHist: return hist_distance_to_set(candidate, refs_, HistSpace::RGB);
        case ScoreKind::YuvHist: return hist_distance_to_set(candidate, refs_, HistSpace::YUV);
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace retouch
