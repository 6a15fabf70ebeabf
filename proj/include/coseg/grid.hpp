#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace coseg {

// Grayscale raster, row-major doubles.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("ImageGrid: dimensions must be >= 1");
    }

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
};

// Per-pixel {0,1} lesion mask.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("BinaryMask: dimensions must be >= 1");
    }

    std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return labels.size(); }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : labels) n += v;
        return n;
    }

    bool operator==(const BinaryMask& o) const {
        return width == o.width && height == o.height && labels == o.labels;
    }
};

enum class TrimapLabel : std::uint8_t {
    DefiniteBG = 0,
    ProbableBG = 1,
    ProbableFG = 2,
    DefiniteFG = 3,
};

// Four-level seed map initializing GrabCut.
struct Trimap {
    int width = 0;
    int height = 0;
    std::vector<TrimapLabel> labels;

    Trimap() = default;
    Trimap(int w, int h, TrimapLabel fill = TrimapLabel::ProbableBG)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

    TrimapLabel& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    TrimapLabel at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    // GrabCut is ill-posed without at least one seed on each side.
    void validate() const;
};

// --- preprocessing transforms ---

// Center the image in an SxS canvas, S = max(width, height); new pixels = fill.
ImageGrid pad_to_square(const ImageGrid& img, double fill);

// Bilinear resampling with corner-aligned sampling (output corner pixels hit
// input corner pixels exactly), so results are reproducible bit-for-bit.
ImageGrid resize_bilinear(const ImageGrid& img, int out_w, int out_h);

// Nearest-neighbor resampling; keeps the mask binary.
BinaryMask resize_mask_nearest(const BinaryMask& mask, int out_w, int out_h);

// Per-image min-max scaling to [0,1]; a constant image maps to all zeros.
ImageGrid normalize(const ImageGrid& img);

// Morphological dilation with a Euclidean disc structuring element.
BinaryMask dilate(const BinaryMask& mask, int radius);

}  // namespace coseg
