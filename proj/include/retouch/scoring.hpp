#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retouch/image.hpp"

namespace retouch {

enum class PromptSetKind { GlobalOnly, AllFilters };

/// Contrasting style prompts; pairs are (low, high) for one filter each.
struct PromptSet {
    PromptSetKind kind;
    std::vector<std::string> prompts;

    static const PromptSet& global_only();
    static const PromptSet& all_filters();
    static const PromptSet& of(PromptSetKind kind);

    std::size_t size() const noexcept { return prompts.size(); }
};

struct PromptDistribution {
    std::vector<double> probs;
};

// Throws InvalidDistribution unless probs are finite, strictly positive and sum to 1 within 1e-9.
void validate_distribution(const PromptDistribution& d);

// Max-subtracted softmax.
PromptDistribution softmax(std::span<const double> logits);

/// Source of per-prompt logits for an image. Implementations must return
/// identical values for identical inputs and tolerate concurrent calls.
class DistributionProvider {
public:
    virtual ~DistributionProvider() = default;
    virtual std::vector<double> logits(const ImageBuffer& img, const PromptSet& prompts) const = 0;
};

/// Deterministic provider driven by image statistics.
///
/// Each prompt pair gets logits (-s, +s) with s = 6 * (stat - 0.5), where stat
/// is the quantity the pair names: pixel mean, min(1, 2*std), mean HSV
/// saturation, clamp(0.5 + mean_r - mean_b). The local-filter pairs use the top
/// and bottom tenth means and min(1, 4*sqrt(laplacian variance)).
class StatsProvider final : public DistributionProvider {
public:
    std::vector<double> logits(const ImageBuffer& img, const PromptSet& prompts) const override;
};

/// Joint image/text embedding model.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<float> embed_image(const ImageBuffer& img) = 0;
    virtual std::vector<float> embed_text(std::string_view text) = 0;
};

/// Embedding service reached over HTTP.
///
/// POST <url>/image with a PNG body and POST <url>/text with a UTF-8 body.
/// Each response is a little-endian uint32 dimension D followed by D
/// little-endian float32 values. Any transport or framing problem raises
/// BackendError.
class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(std::string url, std::chrono::seconds timeout = std::chrono::seconds(60),
                                  int max_side = 512);
    std::vector<float> embed_image(const ImageBuffer& img) override;
    std::vector<float> embed_text(std::string_view text) override;

private:
    std::vector<float> post(const std::string& suffix, const std::string& body, const std::string& content_type);

    std::string url_;
    std::chrono::seconds timeout_;
    int max_side_;
};

// Decodes the length-prefixed float32 frame; throws BackendError on malformed input.
std::vector<float> decode_embedding_frame(std::string_view body);
std::string encode_embedding_frame(std::span<const float> values);

/// Logits are inner products between the image embedding and each prompt's
/// text embedding. Text embeddings are cached per prompt string.
class EmbeddingProvider final : public DistributionProvider {
public:
    explicit EmbeddingProvider(std::shared_ptr<EmbeddingBackend> backend);
    std::vector<double> logits(const ImageBuffer& img, const PromptSet& prompts) const override;

private:
    std::shared_ptr<EmbeddingBackend> backend_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::vector<float>, std::less<>> text_cache_;
};

PromptDistribution prompt_distribution(const DistributionProvider& provider, const ImageBuffer& img,
                                       const PromptSet& prompts);

// Mean of the per-reference distributions. Throws EmptyReferenceSet.
PromptDistribution reference_distribution(const DistributionProvider& provider, std::span<const ImageBuffer> refs,
                                          const PromptSet& prompts);

// KL(cand || refbar), natural log.
double kl_selection_score(const PromptDistribution& cand, const PromptDistribution& refbar);

// Index of the smallest value; ties go to the lowest index.
std::size_t argmin_first(std::span<const double> values);

// Candidate 0 is the current source.
std::size_t select_best(const DistributionProvider& provider, std::span<const ImageBuffer> candidates,
                        std::span<const ImageBuffer> refs, const PromptSet& prompts);

enum class HistSpace { RGB, YUV };

inline constexpr int kHistogramBins = 64;

// Sum over channels of the L1 distance between normalized 64-bin histograms.
double hist_distance(const ImageBuffer& a, const ImageBuffer& b, HistSpace space);

// Mean hist_distance from a candidate to each reference.
double hist_distance_to_set(const ImageBuffer& candidate, std::span<const ImageBuffer> refs, HistSpace space);

/// One layer's activations, row-major channels x positions.
struct FeatureMap {
    int channels = 0;
    int positions = 0;
    std::vector<double> values;
};

// Sum over layers of the squared Frobenius distance between normalized Gram matrices.
double gram_distance(std::span<const FeatureMap> a, std::span<const FeatureMap> b);

enum class ScoreKind { ClipKlGlobal, ClipKlAll, RgbHist, YuvHist };

std::string_view score_kind_name(ScoreKind kind) noexcept;
ScoreKind score_kind_from_name(std::string_view name);

/// Selection score against a fixed reference set; lower is closer in style.
class SelectionScorer {
public:
    SelectionScorer(ScoreKind kind, std::shared_ptr<const DistributionProvider> provider,
                    std::vector<ImageBuffer> refs);

    double score(const ImageBuffer& candidate) const;
    ScoreKind kind() const noexcept { return kind_; }

private:
    ScoreKind kind_;
    std::shared_ptr<const DistributionProvider> provider_;
    std::vector<ImageBuffer> refs_;
    PromptDistribution refbar_;
};

}  // namespace retouch
