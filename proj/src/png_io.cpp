#include "coseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace coseg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

// Reads any grayscale PNG into 16-bit rows; palette/color inputs are rejected.
void read_gray16(const std::string& path, int& w, int& h, std::vector<std::uint16_t>& pixels,
                 int& bit_depth) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open PNG", path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail("libpng init failed", path);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("PNG decode error", path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    bit_depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("expected grayscale PNG", path);
    }
    if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (bit_depth == 16) png_set_swap(png);  // little-endian in memory
    png_read_update_info(png, info);

    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    pixels.assign(static_cast<std::size_t>(w) * h, 0);

    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        if (bit_depth == 16) {
            const auto* r16 = reinterpret_cast<const std::uint16_t*>(row.data());
            for (int x = 0; x < w; ++x) pixels[static_cast<std::size_t>(y) * w + x] = r16[x];
        } else {
            for (int x = 0; x < w; ++x) pixels[static_cast<std::size_t>(y) * w + x] = row[x];
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

void write_png(const std::string& path, int w, int h, int bit_depth, int color_type,
               const std::vector<std::uint8_t>& bytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot write PNG", path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail("libpng init failed", path);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("PNG encode error", path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<std::uint8_t*>(bytes.data() + rowbytes * y));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageGrid read_image_png(const std::string& path) {
    int w, h, depth;
    std::vector<std::uint16_t> px;
    read_gray16(path, w, h, px, depth);
    const double scale = 1.0 / (depth == 16 ? 65535.0 : 255.0);
    ImageGrid img(w, h);
    for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = px[i] * scale;
    return img;
}

void write_image_png(const std::string& path, const ImageGrid& img) {
    std::vector<std::uint8_t> bytes(img.size() * 2);
    auto* p16 = reinterpret_cast<std::uint16_t*>(bytes.data());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        p16[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    write_png(path, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, bytes);
}

BinaryMask read_mask_png(const std::string& path) {
    int w, h, depth;
    std::vector<std::uint16_t> px;
    read_gray16(path, w, h, px, depth);
    const std::uint16_t half = depth == 16 ? 32768 : 128;
    BinaryMask mask(w, h);
    for (std::size_t i = 0; i < px.size(); ++i) mask.labels[i] = px[i] >= half ? 1 : 0;
    return mask;
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask.labels[i] ? 255 : 0;
    write_png(path, mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY, bytes);
}

void write_rgb_png(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw std::invalid_argument("write_rgb_png: buffer size mismatch");
    write_png(path, width, height, 8, PNG_COLOR_TYPE_RGB, rgb);
}

}  // namespace coseg
