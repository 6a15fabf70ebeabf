#include "coseg/grid.hpp"

#include <algorithm>
#include <cmath>

namespace coseg {

void Trimap::validate() const {
    bool has_fg = false, has_bg = false;
    for (auto l : labels) {
        has_fg |= (l == TrimapLabel::DefiniteFG);
        has_bg |= (l == TrimapLabel::DefiniteBG);
    }
    if (!has_fg || !has_bg)
        throw std::runtime_error(
            "Trimap invariant violated: needs at least one DefiniteFG and one DefiniteBG pixel");
}

ImageGrid pad_to_square(const ImageGrid& img, double fill) {
    const int s = std::max(img.width, img.height);
    ImageGrid out(s, s, fill);
    const int x0 = (s - img.width) / 2;
    const int y0 = (s - img.height) / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x0 + x, y0 + y) = img.at(x, y);
    return out;
}

namespace {

// Corner-aligned source coordinate for output index i of n samples over m
// source samples. n == 1 collapses to the first source sample.
inline double align_corners_coord(int i, int n, int m) {
    if (n == 1) return 0.0;
    return static_cast<double>(i) * (m - 1) / (n - 1);
}

}  // namespace

ImageGrid resize_bilinear(const ImageGrid& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("resize_bilinear: output dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    ImageGrid out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = align_corners_coord(oy, out_h, img.height);
        const int y0 = std::min(static_cast<int>(sy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            const double sx = align_corners_coord(ox, out_w, img.width);
            const int x0 = std::min(static_cast<int>(sx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;
            const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
            const double bot = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
            out.at(ox, oy) = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("resize_mask_nearest: output dimensions must be >= 1");
    if (out_w == mask.width && out_h == mask.height) return mask;
    BinaryMask out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        const int sy = std::min(
            static_cast<int>(std::lround(align_corners_coord(oy, out_h, mask.height))),
            mask.height - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const int sx = std::min(
                static_cast<int>(std::lround(align_corners_coord(ox, out_w, mask.width))),
                mask.width - 1);
            out.at(ox, oy) = mask.at(sx, sy);
        }
    }
    return out;
}

ImageGrid normalize(const ImageGrid& img) {
    const auto [mn_it, mx_it] = std::minmax_element(img.data.begin(), img.data.end());
    const double mn = *mn_it, mx = *mx_it;
    ImageGrid out(img.width, img.height);
    if (mx == mn) return out;  // constant image -> zeros
    const double inv = 1.0 / (mx - mn);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = (img.data[i] - mn) * inv;
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("dilate: radius must be >= 0");
    if (radius == 0) return mask;
    // Disc offsets with squared Euclidean distance <= radius^2.
    std::vector<std::pair<int, int>> disc;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) disc.emplace_back(dx, dy);
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            for (auto [dx, dy] : disc) {
                const int nx = x + dx, ny = y + dy;
                if (nx >= 0 && nx < mask.width && ny >= 0 && ny < mask.height) out.at(nx, ny) = 1;
            }
        }
    return out;
}

}  // namespace coseg
