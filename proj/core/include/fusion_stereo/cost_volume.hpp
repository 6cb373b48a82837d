#pragma once

#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// Concatenation cost volume from siamese features [C,H,W] -> [2C,H,W,D].
// Slice d holds the left features and the right features shifted d columns
// right; columns with w - d < 0 are zero filled.
Tensor build_cost_volume(const Tensor& feat_left, const Tensor& feat_right, int n_disp);
void cost_volume_backward(const Tensor& grad_vol, Tensor& grad_left, Tensor& grad_right);

// Differentiable winner take all over the disparity axis of a regularized
// volume [1,H,W,D]: y(h,w) = d_scale * sum_d d * softmax(-cost)_d.
Tensor soft_argmin(const Tensor& cost, double d_scale);
Tensor soft_argmin_backward(const Tensor& cost, double d_scale, const Tensor& grad_out);

}  // namespace fstereo
