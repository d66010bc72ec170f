#include "retouch/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "retouch/errors.hpp"

namespace retouch {

ImageBuffer::ImageBuffer(int width, int height, std::vector<float> data, BitDepth depth)
    : width_(width), height_(height), depth_(depth), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("image dimensions must be at least 1x1");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
        throw std::invalid_argument("image data length does not match width*height*3");
    }
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument("image intensity outside [0,1]");
        }
    }
}

ImageBuffer ImageBuffer::filled(int width, int height, float r, float g, float b) {
    std::vector<float> data(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * kChannels);
    for (std::size_t i = 0; i < data.size(); i += kChannels) {
        data[i] = r;
        data[i + 1] = g;
        data[i + 2] = b;
    }
    return ImageBuffer(width, height, std::move(data));
}

bool ImageBuffer::operator==(const ImageBuffer& other) const noexcept {
    if (!same_shape(other)) return false;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

struct PngReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

[[noreturn]] void png_throw_error(png_structp, png_const_charp message) {
    throw DecodeError(std::string("PNG: ") + message);
}

void png_ignore_warning(png_structp, png_const_charp) {}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes, std::vector<std::string>* warnings) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw_error, png_ignore_warning);
    if (!png) throw DecodeError("PNG: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DecodeError("PNG: cannot allocate info");
    }
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_read_struct(png, info, nullptr); }
    } guard{&png, &info};

    PngReadCursor cursor{bytes, 0};
    png_set_read_fn(png, &cursor, png_read_from_memory);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    bool had_alpha = (color_type & PNG_COLOR_MASK_ALPHA) != 0;

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        had_alpha = true;
        png_set_tRNS_to_alpha(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (had_alpha) png_set_strip_alpha(png);
    const bool sixteen = bit_depth == 16;
    if (sixteen) png_set_swap(png);
    png_read_update_info(png, info);

    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raw(row_bytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    if (had_alpha && warnings) warnings->emplace_back("alpha channel dropped");

    std::vector<float> data(static_cast<std::size_t>(width) * height * 3);
    if (sixteen) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::uint16_t code;
            std::memcpy(&code, raw.data() + i * 2, 2);
            data[i] = static_cast<float>(code / 65535.0);
        }
    } else {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(raw[i] / 255.0);
    }
    return ImageBuffer(width, height, std::move(data), sixteen ? BitDepth::Sixteen : BitDepth::Eight);
}

[[noreturn]] void jpeg_throw_error(j_common_ptr cinfo) {
    char message[JMSG_LENGTH_MAX];
    (*cinfo->err->format_message)(cinfo, message);
    throw DecodeError(std::string("JPEG: ") + message);
}

ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    jpeg_error_mgr err{};
    cinfo.err = jpeg_std_error(&err);
    err.error_exit = jpeg_throw_error;
    jpeg_create_decompress(&cinfo);
    struct Guard {
        jpeg_decompress_struct* cinfo;
        ~Guard() { jpeg_destroy_decompress(cinfo); }
    } guard{&cinfo};
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const auto width = static_cast<int>(cinfo.output_width);
    const auto height = static_cast<int>(cinfo.output_height);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);

    std::vector<float> data(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) data[i] = static_cast<float>(raw[i] / 255.0);
    return ImageBuffer(width, height, std::move(data), BitDepth::Eight);
}

void png_write_to_vector(png_structp png, png_bytep in, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), in, in + length);
}

void png_flush_noop(png_structp) {}

std::uint16_t quantize(float v, double max_code) {
    // round half up
    return static_cast<std::uint16_t>(std::floor(static_cast<double>(v) * max_code + 0.5));
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes, std::vector<std::string>* warnings) {
    if (is_png(bytes)) return decode_png(bytes, warnings);
    if (is_jpeg(bytes)) return decode_jpeg(bytes);
    throw DecodeError("unsupported image format (expected PNG or JPEG)");
}

ImageBuffer load_image(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("cannot read image file: " + path.string());
    return decode_image(bytes, warnings);
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img, BitDepth depth) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw_error, png_ignore_warning);
    if (!png) throw IoError("PNG: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};
    if (!info) throw IoError("PNG: cannot allocate info");

    std::vector<std::uint8_t> out;
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    const bool sixteen = depth == BitDepth::Sixteen;
    png_set_IHDR(png, info, img.width(), img.height(), sixteen ? 16 : 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const auto samples = img.data();
    const std::size_t row_samples = static_cast<std::size_t>(img.width()) * 3;
    if (sixteen) {
        std::vector<std::uint8_t> row(row_samples * 2);
        for (int y = 0; y < img.height(); ++y) {
            for (std::size_t i = 0; i < row_samples; ++i) {
                const std::uint16_t code = quantize(samples[y * row_samples + i], 65535.0);
                row[2 * i] = static_cast<std::uint8_t>(code >> 8);  // PNG is big-endian
                row[2 * i + 1] = static_cast<std::uint8_t>(code & 0xFF);
            }
            png_write_row(png, row.data());
        }
    } else {
        std::vector<std::uint8_t> row(row_samples);
        for (int y = 0; y < img.height(); ++y) {
            for (std::size_t i = 0; i < row_samples; ++i) {
                row[i] = static_cast<std::uint8_t>(quantize(samples[y * row_samples + i], 255.0));
            }
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    return out;
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path, BitDepth depth) {
    const auto bytes = encode_png(img, depth);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

ImageBuffer thumbnail(const ImageBuffer& img, int max_side) {
    const int longest = std::max(img.width(), img.height());
    if (max_side <= 0 || longest <= max_side) return img;
    const double scale = static_cast<double>(max_side) / longest;
    const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
    return resize_area(img, w, h);
}

ImageBuffer resize_area(const ImageBuffer& img, int width, int height) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("resize target must be positive");
    const int w = width;
    const int h = height;
    std::vector<float> data(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        const int y0 = static_cast<int>(static_cast<long long>(y) * img.height() / h);
        const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long long>(y + 1) * img.height() / h));
        for (int x = 0; x < w; ++x) {
            const int x0 = static_cast<int>(static_cast<long long>(x) * img.width() / w);
            const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long long>(x + 1) * img.width() / w));
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (int sy = y0; sy < y1; ++sy)
                    for (int sx = x0; sx < x1; ++sx) sum += img.at(sx, sy, c);
                const double v = sum / ((y1 - y0) * (x1 - x0));
                data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
            }
        }
    }
    return ImageBuffer(w, h, std::move(data), img.source_depth());
}

}  // namespace retouch
