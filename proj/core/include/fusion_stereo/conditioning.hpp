#pragma once

#include "fusion_stereo/geometry.hpp"
#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// ---------------------------------------------------------------------------
// Normalization.  Inputs are channel-first ([C,H,W] or [C,H,W,D]); statistics
// reduce every axis except the channel axis, population variance throughout.
// Conditioning fields are position-major [H,W,D,C] so one pixel's (d,c) block
// is contiguous.
// ---------------------------------------------------------------------------

struct NormCache {
    Tensor xhat;      // normalized input, shape of x
    Tensor inv_std;   // per channel, shape [C]
    int64_t count = 0;  // reduced elements per channel
    bool training = false;
};

struct BatchNormGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

// Plain batch norm with per-channel affine parameters gamma/beta [C].
// Training mode uses batch statistics and folds them into the running buffers
// (running <- (1-momentum)*running + momentum*batch); eval mode reads the
// running buffers and leaves them untouched.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps,
                  NormCache* cache);
BatchNormGrads batch_norm_backward(const NormCache& cache, const Tensor& gamma,
                                   const Tensor& grad_out);

struct ConditionedNormGrads {
    Tensor input;
    Tensor gamma_field;
    Tensor beta_field;
};

// Norm whose affine parameters vary per position: x [C,H,W,D], fields
// [H,W,D,C].  Statistics are the same per-channel reduction as batch_norm.
Tensor conditioned_norm(const Tensor& x, const Tensor& gamma_field, const Tensor& beta_field,
                        Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                        double eps, NormCache* cache);
ConditionedNormGrads conditioned_norm_backward(const NormCache& cache, const Tensor& gamma_field,
                                               const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Field producers.  Each turns the sparse disparity map (already resampled to
// volume resolution, values in volume disparity units) into gamma/beta fields
// [H,W,D,C] for one conditioned layer.
// ---------------------------------------------------------------------------

struct FieldPair {
    Tensor gamma;
    Tensor beta;
};

// Categorical lookup: the measurement selects a bin k and the pixel copies
// row k of the tables [n_bins, D, C]; pixels without a measurement use the
// dedicated invalid parameters [D, C].
FieldPair categorical_fields(const SparseDisparityMap& lidar, double d_max,
                             const Tensor& gamma_table, const Tensor& beta_table,
                             const Tensor& gamma_invalid, const Tensor& beta_invalid);

struct CategoricalGrads {
    Tensor gamma_table, beta_table, gamma_invalid, beta_invalid;
};
CategoricalGrads categorical_fields_backward(const SparseDisparityMap& lidar, double d_max,
                                             int n_bins, const Tensor& grad_gamma_field,
                                             const Tensor& grad_beta_field);

// Hierarchical factorization: the bin selects per-channel codes g,h [n_bins,C]
// which a disparity-indexed affine map expands to the full field,
// gamma[h,w,d,c] = phi_g[d,c]*g[k,c] + psi_g[d,c] (and likewise for beta).
FieldPair hier_fields(const SparseDisparityMap& lidar, double d_max, const Tensor& g_table,
                      const Tensor& h_table, const Tensor& phi_g, const Tensor& psi_g,
                      const Tensor& phi_h, const Tensor& psi_h, const Tensor& gamma_invalid,
                      const Tensor& beta_invalid);

struct HierGrads {
    Tensor g_table, h_table, phi_g, psi_g, phi_h, psi_h, gamma_invalid, beta_invalid;
};
HierGrads hier_fields_backward(const SparseDisparityMap& lidar, double d_max,
                               const Tensor& g_table, const Tensor& h_table, const Tensor& phi_g,
                               const Tensor& psi_g, const Tensor& phi_h, const Tensor& psi_h,
                               const Tensor& grad_gamma_field, const Tensor& grad_beta_field);

// Conditional batch norm baseline: a per-layer MLP maps the scalar
// measurement (normalized by d_max) to per-channel gamma/beta that are
// constant along the disparity axis.  w1,b1 [nh]; w2 [2C,nh]; b2 [2C];
// unconditional parameters [C] cover pixels without a measurement.
FieldPair cbn_fields(const SparseDisparityMap& lidar, double d_max, int n_disp, const Tensor& w1,
                     const Tensor& b1, const Tensor& w2, const Tensor& b2,
                     const Tensor& uncond_gamma, const Tensor& uncond_beta);

struct CbnGrads {
    Tensor w1, b1, w2, b2, uncond_gamma, uncond_beta;
};
CbnGrads cbn_fields_backward(const SparseDisparityMap& lidar, double d_max, const Tensor& w1,
                             const Tensor& b1, const Tensor& w2, const Tensor& b2,
                             const Tensor& grad_gamma_field, const Tensor& grad_beta_field);

// Continuous producer: a shared 2-D trunk embeds the (value, validity) map
// once per forward; each conditioned layer owns a 1x1 head that maps the
// embedding to its gamma/beta field.  Heads emit [2*D*C, H, W]; the first
// D*C channels are gamma (channel d*C+c), the rest beta.
struct ContinuousTrunkCache {
    Tensor input;     // [2,H,W]
    Tensor pre1;      // conv1 output
    Tensor act1;      // relu(pre1)
    Tensor pre2;      // conv2 output + skip
    Tensor out;       // relu(pre2)
};

Tensor continuous_trunk_forward(const Tensor& input, const Tensor& conv1_w, const Tensor& conv1_b,
                                const Tensor& conv2_w, const Tensor& conv2_b,
                                ContinuousTrunkCache* cache);

struct ContinuousTrunkGrads {
    Tensor conv1_w, conv1_b, conv2_w, conv2_b;
};
ContinuousTrunkGrads continuous_trunk_backward(const ContinuousTrunkCache& cache,
                                               const Tensor& conv1_w, const Tensor& conv2_w,
                                               const Tensor& grad_out);

FieldPair continuous_head_forward(const Tensor& trunk_out, const Tensor& head_w,
                                  const Tensor& head_b, int n_disp, int channels);

struct ContinuousHeadGrads {
    Tensor head_w, head_b;
    Tensor trunk_out;  // contribution to the shared embedding gradient
};
ContinuousHeadGrads continuous_head_backward(const Tensor& trunk_out, const Tensor& head_w,
                                             const Tensor& grad_gamma_field,
                                             const Tensor& grad_beta_field);

// Builds the [2,H,W] trunk input from the volume-resolution sparse map:
// channel 0 value/d_max with invalid pixels at the fill constant, channel 1
// the validity mask.
Tensor sparse_to_dense_input(const SparseDisparityMap& lidar, double d_max);

// ---------------------------------------------------------------------------
// Parameter accounting per conditioned layer.
// ---------------------------------------------------------------------------
int64_t categorical_params_per_layer(int n_bins, int n_disp, int channels);
int64_t hier_params_per_layer(int n_bins, int n_disp, int channels);

}  // namespace fstereo
