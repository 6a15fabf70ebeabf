#pragma once

#include "coseg/grid.hpp"

namespace coseg {

struct CrfParams {
    double w_app = 5.0;       // appearance kernel weight
    double w_smooth = 3.0;    // smoothness kernel weight
    double theta_alpha = 20.0;  // appearance spatial bandwidth, pixels
    double theta_beta = 0.1;    // appearance intensity bandwidth, normalized units
    double theta_gamma = 3.0;   // smoothness spatial bandwidth, pixels
    int iterations = 5;

    void validate() const;
};

// Exact dense mean-field refuses images with more pixels than this
// (64x64); larger inputs go through the downsampled variant.
inline constexpr int kMaxExactPixels = 64 * 64;

// Per-pixel, per-label negative log probabilities for 2 labels (bg, fg),
// clamped so they stay finite.
struct UnaryField {
    int width = 0;
    int height = 0;
    std::vector<double> bg;  // -log clamp(1-p)
    std::vector<double> fg;  // -log clamp(p)
};

inline constexpr double kUnaryClampEps = 1e-8;

UnaryField unary_from_prob(const ImageGrid& prob);

// Per-pixel label marginals after mean-field inference; rows sum to 1.
struct LabelDistribution {
    int width = 0;
    int height = 0;
    std::vector<double> fg;  // Q(fg); Q(bg) = 1 - fg
};

struct CrfResult {
    LabelDistribution q;
    BinaryMask mask;  // argmax of Q
};

// Exact O(N^2) dense mean field with Gaussian appearance and smoothness
// kernels and Potts compatibility; synchronous (Jacobi) updates reading
// the previous iterate, so results are schedule-independent.
CrfResult meanfield_refine(const ImageGrid& img, const UnaryField& unary, const CrfParams& params);

// Bilinear-downsample image and unary by `factor`, run the exact solver,
// bilinear-upsample Q back and take the argmax.
CrfResult meanfield_refine_downsampled(const ImageGrid& img, const UnaryField& unary,
                                       const CrfParams& params, int factor);

// Serial reference of one mean-field iteration, kept for testing the
// OpenMP-parallel update.
namespace serial {
LabelDistribution meanfield_iteration(const ImageGrid& img, const UnaryField& unary,
                                      const CrfParams& params, const LabelDistribution& q);
}

}  // namespace coseg
