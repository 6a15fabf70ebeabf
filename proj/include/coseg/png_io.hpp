#pragma once

#include <string>

#include "coseg/grid.hpp"

namespace coseg {

// Grayscale PNG I/O. Images are written 16-bit (intensities scaled from
// [0,1] to [0,65535]); masks are written 8-bit with values {0,255}.
// Readers accept both 8- and 16-bit grayscale files.

ImageGrid read_image_png(const std::string& path);
void write_image_png(const std::string& path, const ImageGrid& img);

BinaryMask read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const BinaryMask& mask);

// RGB overlay writer used by the overlay command (8-bit per channel,
// interleaved row-major, size 3*width*height).
void write_rgb_png(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace coseg
