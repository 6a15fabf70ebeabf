#pragma once

#include "coseg/tensor.hpp"

namespace coseg {

// Geometry of a 2-D cross-correlation.
struct ConvGeom {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

int conv_out_extent(int in, int kernel, const ConvGeom& g);

// OpenMP-parallel kernels. Every output element is produced by one thread
// with a fixed inner summation order, so results are bit-identical to the
// serial reference at any thread count.
namespace kernels {

// input [N,Cin,H,W], weights [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,Ho,Wo]
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeom& g);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights,
                             const std::vector<int>& input_shape, const ConvGeom& g);
Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& weight_shape, const ConvGeom& g);
Tensor conv2d_backward_bias(const Tensor& grad_out);

// 2x2/stride-2 max pooling; argmax indices recorded for the backward pass.
Tensor maxpool2x2_forward(const Tensor& input, std::vector<int>& argmax);
Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                           const std::vector<int>& input_shape);

// Corner-aligned bilinear upsampling, matching resize_bilinear.
Tensor upsample_bilinear_forward(const Tensor& input, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& grad_out, const std::vector<int>& input_shape);

}  // namespace kernels

// Naive serial reference implementations, kept for testing and as the
// baseline in the kernel benchmark.
namespace serial {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeom& g);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights,
                             const std::vector<int>& input_shape, const ConvGeom& g);
Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& weight_shape, const ConvGeom& g);

}  // namespace serial

}  // namespace coseg
