#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace retouch {

enum class BitDepth : std::uint8_t { Eight = 8, Sixteen = 16 };

/// Interleaved RGB raster with every intensity in [0,1], sRGB encoded.
///
/// Buffers are immutable once constructed; filters always produce a new
/// buffer. The bit depth of the file an image was decoded from is kept so
/// exports can reuse it.
class ImageBuffer {
public:
    static constexpr int kChannels = 3;

    /// Throws std::invalid_argument when dimensions or values break the invariants.
    ImageBuffer(int width, int height, std::vector<float> data, BitDepth depth = BitDepth::Eight);

    static ImageBuffer filled(int width, int height, float r, float g, float b);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    BitDepth source_depth() const noexcept { return depth_; }

    std::span<const float> data() const noexcept { return data_; }

    float at(int x, int y, int c) const noexcept {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }

    bool same_shape(const ImageBuffer& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    // Bitwise comparison of dimensions and samples.
    bool operator==(const ImageBuffer& other) const noexcept;

private:
    int width_;
    int height_;
    BitDepth depth_;
    std::vector<float> data_;
};

ImageBuffer load_image(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

// Decodes PNG (8/16-bit) or JPEG bytes already held in memory.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes, std::vector<std::string>* warnings = nullptr);

void save_image(const ImageBuffer& img, const std::filesystem::path& path, BitDepth depth = BitDepth::Eight);

std::vector<std::uint8_t> encode_png(const ImageBuffer& img, BitDepth depth = BitDepth::Eight);

// Area-averaged copy whose longer side is at most max_side. Only used for
// images handed to external models; retouched outputs are never resized.
ImageBuffer thumbnail(const ImageBuffer& img, int max_side);

// Box-filtered resample to exactly width x height.
ImageBuffer resize_area(const ImageBuffer& img, int width, int height);

}  // namespace retouch
