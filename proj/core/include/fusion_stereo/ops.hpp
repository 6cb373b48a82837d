#pragma once

#include <vector>

#include "fusion_stereo/tensor.hpp"

namespace fstereo {

/// Differentiable primitives. Each forward op has an explicit reverse-mode
/// companion; there is no autodiff graph — callers chain backwards by hand in
/// reverse order of the forward calls.
///
/// Conventions, fixed for reproducibility:
///  - Convolutions are cross-correlations (no kernel flip).
///  - Per output element the accumulator starts at the bias (0 if absent)
///    and taps are added in (c_in, kh, kw[, kd]) order.
///  - Reductions scan the input row-major sequentially.

/// input [C_in,H,W], weights [C_out,C_in,kH,kW], bias [C_out] (may be empty).
/// Output extent: floor((H + 2*pad - kH) / stride) + 1, same for W.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad);

struct Conv2dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;  // empty when the forward had no bias
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, bool has_bias, int stride,
                            int pad, const Tensor& grad_out);

/// input [C_in,H,W,D], weights [C_out,C_in,k,k,k], 3-D analog of conv2d.
Tensor conv3d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad);

struct Conv3dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};
Conv3dGrads conv3d_backward(const Tensor& input, const Tensor& weights, bool has_bias, int stride,
                            int pad, const Tensor& grad_out);

/// Population mean/variance (divide by N) over `reduce_axes`. Reduced axes
/// are kept with extent 1 in the outputs.
struct BatchStats {
    Tensor mean;
    Tensor var;
};
BatchStats batch_stats(const Tensor& x, const std::vector<int>& reduce_axes);

/// Stable softmax of the negated costs: w_d = exp(-c_d - m) / sum_j, with
/// m = max(-c). Sums to 1.
std::vector<double> softmax_neg(const std::vector<double>& cost);

/// In-place span variant used by soft_argmin's inner loop.
void softmax_neg_span(const double* cost, double* weights, int n);

double relu_scalar(double v);
Tensor relu(const Tensor& x);
/// grad_in = grad_out where x > 0, else 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

/// Masked mean absolute error: sum(mask * |pred - target|) / sum(mask).
/// mask entries are 0 or 1; throws ConfigError when no pixel is valid.
double l1_loss(const Tensor& pred, const Tensor& target, const Tensor& mask);
/// d(loss)/d(pred) = mask * sign(pred - target) / sum(mask).
Tensor l1_loss_backward(const Tensor& pred, const Tensor& target, const Tensor& mask);

/// Trilinear resize of a single-channel volume [1,h,w,d] -> [1,H,W,D] with
/// align-corners index mapping (src = i * (in-1) / (out-1)).
Tensor upsample_trilinear(const Tensor& vol, int out_h, int out_w, int out_d);
Tensor upsample_trilinear_backward(const Tensor& vol_in, int out_h, int out_w, int out_d,
                                   const Tensor& grad_out);

/// Channel concatenation of two channel-major tensors with equal trailing
/// extents: [Ca,...] + [Cb,...] -> [Ca+Cb,...].
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels_backward(const Tensor& grad_out, int ca, Tensor& grad_a, Tensor& grad_b);

}  // namespace fstereo
