#include "coseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coseg {

void CrfParams::validate() const {
    if (w_app < 0.0 || w_smooth < 0.0)
        throw std::invalid_argument("CrfParams: kernel weights must be >= 0");
    if (theta_alpha <= 0.0 || theta_beta <= 0.0 || theta_gamma <= 0.0)
        throw std::invalid_argument("CrfParams: bandwidths must be > 0");
    if (iterations < 1) throw std::invalid_argument("CrfParams: iterations must be >= 1");
}

UnaryField unary_from_prob(const ImageGrid& prob) {
    UnaryField u;
    u.width = prob.width;
    u.height = prob.height;
    u.bg.resize(prob.size());
    u.fg.resize(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = std::clamp(prob.data[i], kUnaryClampEps, 1.0 - kUnaryClampEps);
        u.fg[i] = -std::log(p);
        u.bg[i] = -std::log(1.0 - p);
    }
    return u;
}

namespace {

LabelDistribution q_from_unary(const UnaryField& unary) {
    LabelDistribution q;
    q.width = unary.width;
    q.height = unary.height;
    q.fg.resize(unary.fg.size());
    for (std::size_t i = 0; i < q.fg.size(); ++i) {
        // softmax of (-u_bg, -u_fg)
        const double efg = std::exp(-unary.fg[i]);
        const double ebg = std::exp(-unary.bg[i]);
        q.fg[i] = efg / (efg + ebg);
    }
    return q;
}

// Pairwise kernel sum k(i,j) for pixel indices i != j.
inline double kernel(const ImageGrid& img, const CrfParams& p, int xi, int yi, int xj, int yj) {
    const double dx = xi - xj, dy = yi - yj;
    const double d2 = dx * dx + dy * dy;
    const double di = img.at(xi, yi) - img.at(xj, yj);
    const double k_app = std::exp(-d2 / (2.0 * p.theta_alpha * p.theta_alpha) -
                                  di * di / (2.0 * p.theta_beta * p.theta_beta));
    const double k_smooth = std::exp(-d2 / (2.0 * p.theta_gamma * p.theta_gamma));
    return p.w_app * k_app + p.w_smooth * k_smooth;
}

template <bool Parallel>
LabelDistribution iteration_impl(const ImageGrid& img, const UnaryField& unary,
                                 const CrfParams& params, const LabelDistribution& q) {
    const int w = img.width, h = img.height;
    LabelDistribution next;
    next.width = w;
    next.height = h;
    next.fg.resize(q.fg.size());

    // Potts compatibility: the message into label l sums kernel-weighted
    // Q_j of the other label. All reads are from the previous iterate.
#pragma omp parallel for schedule(static) if (Parallel)
    for (int yi = 0; yi < h; ++yi) {
        for (int xi = 0; xi < w; ++xi) {
            const std::size_t i = static_cast<std::size_t>(yi) * w + xi;
            double msg_fg = 0.0, msg_bg = 0.0;  // penalties on fg / bg
            for (int yj = 0; yj < h; ++yj)
                for (int xj = 0; xj < w; ++xj) {
                    if (xj == xi && yj == yi) continue;
                    const std::size_t j = static_cast<std::size_t>(yj) * w + xj;
                    const double k = kernel(img, params, xi, yi, xj, yj);
                    msg_fg += k * (1.0 - q.fg[j]);
                    msg_bg += k * q.fg[j];
                }
            // Shifted softmax: message sums can reach the hundreds, so the
            // raw exponentials would underflow to 0/0.
            const double afg = unary.fg[i] + msg_fg;
            const double abg = unary.bg[i] + msg_bg;
            const double m = std::min(afg, abg);
            const double efg = std::exp(m - afg);
            const double ebg = std::exp(m - abg);
            next.fg[i] = efg / (efg + ebg);
        }
    }
    return next;
}

BinaryMask argmax_mask(const LabelDistribution& q) {
    BinaryMask mask(q.width, q.height);
    for (std::size_t i = 0; i < q.fg.size(); ++i) mask.labels[i] = q.fg[i] > 0.5 ? 1 : 0;
    return mask;
}

}  // namespace

namespace serial {
LabelDistribution meanfield_iteration(const ImageGrid& img, const UnaryField& unary,
                                      const CrfParams& params, const LabelDistribution& q) {
    return iteration_impl<false>(img, unary, params, q);
}
}  // namespace serial

CrfResult meanfield_refine(const ImageGrid& img, const UnaryField& unary,
                           const CrfParams& params) {
    params.validate();
    if (img.width != unary.width || img.height != unary.height)
        throw std::invalid_argument("meanfield_refine: image/unary dimension mismatch");
    if (static_cast<int>(img.size()) > kMaxExactPixels)
        throw std::invalid_argument(
            "meanfield_refine: image exceeds 64x64 pixels; use "
            "meanfield_refine_downsampled for larger inputs");

    CrfResult result;
    result.q = q_from_unary(unary);
    for (int it = 0; it < params.iterations; ++it)
        result.q = iteration_impl<true>(img, unary, params, result.q);
    result.mask = argmax_mask(result.q);
    return result;
}

CrfResult meanfield_refine_downsampled(const ImageGrid& img, const UnaryField& unary,
                                       const CrfParams& params, int factor) {
    params.validate();
    if (factor < 1) throw std::invalid_argument("meanfield_refine_downsampled: factor must be >= 1");
    if (factor == 1 && static_cast<int>(img.size()) <= kMaxExactPixels)
        return meanfield_refine(img, unary, params);

    const int dw = std::max(1, img.width / factor);
    const int dh = std::max(1, img.height / factor);
    const ImageGrid small = resize_bilinear(img, dw, dh);

    // Downsample the unary by resampling the probabilities it encodes.
    ImageGrid prob(img.width, img.height);
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double efg = std::exp(-unary.fg[i]);
        const double ebg = std::exp(-unary.bg[i]);
        prob.data[i] = efg / (efg + ebg);
    }
    const UnaryField small_unary = unary_from_prob(resize_bilinear(prob, dw, dh));

    CrfResult coarse;
    coarse.q = q_from_unary(small_unary);
    for (int it = 0; it < params.iterations; ++it)
        coarse.q = iteration_impl<true>(small, small_unary, params, coarse.q);

    ImageGrid qimg(dw, dh);
    qimg.data = coarse.q.fg;
    const ImageGrid upq = resize_bilinear(qimg, img.width, img.height);

    CrfResult result;
    result.q.width = img.width;
    result.q.height = img.height;
    result.q.fg = upq.data;
    for (double& v : result.q.fg) v = std::clamp(v, 0.0, 1.0);
    result.mask = argmax_mask(result.q);
    return result;
}

}  // namespace coseg
