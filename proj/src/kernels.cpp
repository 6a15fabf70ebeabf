#include "coseg/kernels.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coseg {

int conv_out_extent(int in, int kernel, const ConvGeom& g) {
    const int eff = g.dilation * (kernel - 1) + 1;
    const int out = (in + 2 * g.padding - eff) / g.stride + 1;
    if (out < 1)
        throw std::invalid_argument("conv2d: kernel does not fit input (extent " +
                                    std::to_string(in) + ", effective kernel " +
                                    std::to_string(eff) + ")");
    return out;
}

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d: input must be NCHW");
    if (weights.rank() != 4) throw std::invalid_argument("conv2d: weights must be [Cout,Cin,kh,kw]");
    if (input.dim(1) != weights.dim(1))
        throw std::invalid_argument("conv2d: channel mismatch, input C=" +
                                    std::to_string(input.dim(1)) + " vs weight Cin=" +
                                    std::to_string(weights.dim(1)));
    if (bias.rank() != 1 || bias.dim(0) != weights.dim(0))
        throw std::invalid_argument("conv2d: bias extent must equal Cout");
}

}  // namespace

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeom& g) {
    check_conv_shapes(input, weights, bias);
    const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Cout = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = conv_out_extent(H, kh, g), Wo = conv_out_extent(W, kw, g);
    Tensor out({N, Cout, Ho, Wo});

#pragma omp parallel for collapse(3) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oy = 0; oy < Ho; ++oy) {
                const double b = bias.data[co];
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b;
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * g.stride - g.padding + ky * g.dilation;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (ix < 0 || ix >= W) continue;
                                acc += input.at4(n, ci, iy, ix) * weights.at4(co, ci, ky, kx);
                            }
                        }
                    out.at4(n, co, oy, ox) = acc;
                }
            }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights,
                             const std::vector<int>& input_shape, const ConvGeom& g) {
    const int N = input_shape[0], Cin = input_shape[1], H = input_shape[2], W = input_shape[3];
    const int Cout = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    Tensor grad_in(input_shape);

    // Scatter within a private (n, ci) plane; planes are disjoint, so the
    // accumulation order per element is fixed regardless of thread count.
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = weights.at4(co, ci, ky, kx);
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * g.stride - g.padding + ky * g.dilation;
                            if (iy < 0 || iy >= H) continue;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (ix < 0 || ix >= W) continue;
                                grad_in.at4(n, ci, iy, ix) += wv * grad_out.at4(n, co, oy, ox);
                            }
                        }
                    }
    return grad_in;
}

Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& weight_shape, const ConvGeom& g) {
    const int N = input.dim(0), H = input.dim(2), W = input.dim(3);
    const int Cout = weight_shape[0], Cin = weight_shape[1], kh = weight_shape[2],
              kw = weight_shape[3];
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    Tensor grad_w(weight_shape);

#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < Cout; ++co)
        for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n)
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * g.stride - g.padding + ky * g.dilation;
                            if (iy < 0 || iy >= H) continue;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (ix < 0 || ix >= W) continue;
                                acc += input.at4(n, ci, iy, ix) * grad_out.at4(n, co, oy, ox);
                            }
                        }
                    grad_w.at4(co, ci, ky, kx) = acc;
                }
    return grad_w;
}

Tensor conv2d_backward_bias(const Tensor& grad_out) {
    const int N = grad_out.dim(0), Cout = grad_out.dim(1), Ho = grad_out.dim(2),
              Wo = grad_out.dim(3);
    Tensor grad_b({Cout});
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Cout; ++co) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) acc += grad_out.at4(n, co, oy, ox);
        grad_b.data[co] = acc;
    }
    return grad_b;
}

Tensor maxpool2x2_forward(const Tensor& input, std::vector<int>& argmax) {
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("maxpool2x2: spatial extents must be even");
    const int Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    argmax.assign(out.size(), 0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int iy = oy * 2 + dy, ix = ox * 2 + dx;
                            const double v = input.at4(n, c, iy, ix);
                            if (v > best) {
                                best = v;
                                best_idx =
                                    ((n * C + c) * H + iy) * W + ix;
                            }
                        }
                    out.at4(n, c, oy, ox) = best;
                    argmax[((static_cast<std::size_t>(n) * C + c) * Ho + oy) * Wo + ox] = best_idx;
                }
    return out;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                           const std::vector<int>& input_shape) {
    Tensor grad_in(input_shape);
    // Pool windows are disjoint, so scattering is race-free.
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        grad_in.data[argmax[i]] += grad_out.data[i];
    return grad_in;
}

namespace {

inline double align_coord(int i, int n, int m) {
    if (n == 1) return 0.0;
    return static_cast<double>(i) * (m - 1) / (n - 1);
}

}  // namespace

Tensor upsample_bilinear_forward(const Tensor& input, int out_h, int out_w) {
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    Tensor out({N, C, out_h, out_w});
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < out_h; ++oy) {
                const double sy = align_coord(oy, out_h, H);
                const int y0 = std::min(static_cast<int>(sy), H - 1);
                const int y1 = std::min(y0 + 1, H - 1);
                const double fy = sy - y0;
                for (int ox = 0; ox < out_w; ++ox) {
                    const double sx = align_coord(ox, out_w, W);
                    const int x0 = std::min(static_cast<int>(sx), W - 1);
                    const int x1 = std::min(x0 + 1, W - 1);
                    const double fx = sx - x0;
                    out.at4(n, c, oy, ox) =
                        (input.at4(n, c, y0, x0) * (1 - fx) + input.at4(n, c, y0, x1) * fx) *
                            (1 - fy) +
                        (input.at4(n, c, y1, x0) * (1 - fx) + input.at4(n, c, y1, x1) * fx) * fy;
                }
            }
    return out;
}

Tensor upsample_bilinear_backward(const Tensor& grad_out, const std::vector<int>& input_shape) {
    const int N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    Tensor grad_in(input_shape);
    // Serial scatter per (n,c) plane keeps accumulation order fixed.
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy) {
                const double sy = align_coord(oy, Ho, H);
                const int y0 = std::min(static_cast<int>(sy), H - 1);
                const int y1 = std::min(y0 + 1, H - 1);
                const double fy = sy - y0;
                for (int ox = 0; ox < Wo; ++ox) {
                    const double sx = align_coord(ox, Wo, W);
                    const int x0 = std::min(static_cast<int>(sx), W - 1);
                    const int x1 = std::min(x0 + 1, W - 1);
                    const double fx = sx - x0;
                    const double go = grad_out.at4(n, c, oy, ox);
                    grad_in.at4(n, c, y0, x0) += go * (1 - fx) * (1 - fy);
                    grad_in.at4(n, c, y0, x1) += go * fx * (1 - fy);
                    grad_in.at4(n, c, y1, x0) += go * (1 - fx) * fy;
                    grad_in.at4(n, c, y1, x1) += go * fx * fy;
                }
            }
    return grad_in;
}

}  // namespace kernels

namespace serial {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeom& g) {
    check_conv_shapes(input, weights, bias);
    const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Cout = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = conv_out_extent(H, kh, g), Wo = conv_out_extent(W, kw, g);
    Tensor out({N, Cout, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = bias.data[co];
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * g.stride - g.padding + ky * g.dilation;
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input.at4(n, ci, iy, ix) * weights.at4(co, ci, ky, kx);
                            }
                    out.at4(n, co, oy, ox) = acc;
                }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights,
                             const std::vector<int>& input_shape, const ConvGeom& g) {
    const int N = input_shape[0], Cin = input_shape[1], H = input_shape[2], W = input_shape[3];
    const int Cout = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    Tensor grad_in(input_shape);
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int oy = 0; oy < Ho; ++oy)
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int iy = oy * g.stride - g.padding + ky * g.dilation;
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                grad_in.at4(n, ci, iy, ix) +=
                                    weights.at4(co, ci, ky, kx) * grad_out.at4(n, co, oy, ox);
                            }
    return grad_in;
}

Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& weight_shape, const ConvGeom& g) {
    const int N = input.dim(0), H = input.dim(2), W = input.dim(3);
    const int Cout = weight_shape[0], Cin = weight_shape[1], kh = weight_shape[2],
              kw = weight_shape[3];
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    Tensor grad_w(weight_shape);
    for (int co = 0; co < Cout; ++co)
        for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n)
                        for (int oy = 0; oy < Ho; ++oy)
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int iy = oy * g.stride - g.padding + ky * g.dilation;
                                const int ix = ox * g.stride - g.padding + kx * g.dilation;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input.at4(n, ci, iy, ix) * grad_out.at4(n, co, oy, ox);
                            }
                    grad_w.at4(co, ci, ky, kx) = acc;
                }
    return grad_w;
}

}  // namespace serial

}  // namespace coseg
