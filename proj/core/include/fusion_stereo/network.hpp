#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fusion_stereo/conditioning.hpp"
#include "fusion_stereo/sample.hpp"
#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// Pipeline variants.  The if_ prefix adds input fusion (the sparse map enters
// as a fourth image channel); the remainder names how the cost regularizer is
// conditioned.  Bare conditioning variants run without input fusion so the
// two mechanisms can be measured separately.
enum class Variant {
    kNone,
    kInputFusionOnly,
    kFeatureConcat,
    kNaiveCbn,
    kCcvnormCat,
    kCcvnormCont,
    kHierCcvnorm,
    kIfNaiveCbn,
    kIfCcvnormCat,
    kIfCcvnormCont,
    kIfHierCcvnorm,
};

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);
const std::vector<std::string>& variant_names();

enum class CondMode { kNone, kCategorical, kContinuous, kHier, kNaiveCbn };

struct VariantTraits {
    bool input_fusion = false;
    bool feature_concat = false;
    CondMode cond = CondMode::kNone;
};
VariantTraits variant_traits(Variant v);

struct NetworkConfig {
    int channels = 16;       // siamese feature channels
    int reg_channels = 16;   // 3-D regularizer channels
    int d_max = 16;          // full-resolution disparity range
    int downsample = 2;      // spatial and disparity subsampling of the volume
    int n_bins = 0;          // discretization bins; 0 means d_max
    std::vector<int> cond_layers = {2, 4, 6};  // 1-based regularizer blocks
    int embed = 8;           // continuous trunk width
    int cbn_hidden = 8;      // conditional batch norm hidden units
    int concat_channels = 8; // feature-concat encoder output channels
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    int n_disp_vol() const { return d_max / downsample; }
    int bins() const { return n_bins > 0 ? n_bins : d_max; }
    void validate() const;
};

// Nearest-wins pooling of a sparse map onto the volume grid: an s x s cell is
// valid when any source pixel is, carries the largest source disparity, and
// the value is rescaled into volume disparity units.
SparseDisparityMap resample_to_volume(const SparseDisparityMap& full, int s);

struct ParamRef {
    std::string name;
    Tensor* tensor;
    bool trainable;
};

class Model {
public:
    Model(const NetworkConfig& cfg, Variant variant, uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const NetworkConfig& config() const { return cfg_; }
    Variant variant() const { return variant_; }

    std::vector<ParamRef> named_parameters();

    // Predicted left disparity [H,W].  Training mode uses batch statistics
    // and updates the running buffers; it also retains the activations that
    // backward() consumes.
    Tensor forward(const StereoSample& sample, bool training);
    void backward(const Tensor& grad_disparity);
    void zero_grad();

    void save(const std::string& path);
    void load(const std::string& path);

    int64_t param_count(bool trainable_only = true);
    int64_t conditioning_param_count();

private:
    struct ConvBn2d {
        Tensor w;
        Tensor gamma, beta, running_mean, running_var;
    };
    struct RegBlock {
        Tensor w;
        bool conditioned = false;
        Tensor gamma, beta;  // plain norm only
        Tensor running_mean, running_var;
        // categorical
        Tensor gamma_table, beta_table;
        // hierarchical
        Tensor g_table, h_table, phi_g, psi_g, phi_h, psi_h;
        // shared by categorical and hierarchical
        Tensor gamma_invalid, beta_invalid;
        // continuous head
        Tensor head_w, head_b;
        // conditional batch norm
        Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2, uncond_gamma, uncond_beta;
    };
    struct BlockCache2d {
        Tensor input, pre_norm, norm_out;
        NormCache norm;
    };
    struct FeatureCache {
        BlockCache2d b0, b1, b2;
        Tensor b3_input;
    };
    struct RegCache {
        Tensor conv_in, norm_out;
        NormCache norm;
        FieldPair fields;
    };
    struct ForwardCache {
        bool valid = false;
        bool training = false;
        Tensor in_left, in_right;
        FeatureCache feat_left, feat_right;
        Tensor volume;  // regularizer input, encoder channels included
        Tensor enc_input, enc_pre1, enc_act1;
        std::array<RegCache, 6> reg;
        Tensor reg_out;
        Tensor ups;
        SparseDisparityMap lidar_vol;
        Tensor trunk_in;
        ContinuousTrunkCache trunk;
        Tensor trunk_out;
    };

    Tensor fuse_input(const Tensor& image, const SparseDisparityMap& lidar) const;
    Tensor run_features(const Tensor& input, FeatureCache& cache, bool training);
    void features_backward(const FeatureCache& cache, const Tensor& grad_out);
    FieldPair produce_fields(const RegBlock& blk, const SparseDisparityMap& lidar_vol,
                             ForwardCache& cache, int out_channels);
    void fields_backward(RegBlock& blk, const SparseDisparityMap& lidar_vol,
                         const Tensor& grad_gamma, const Tensor& grad_beta, Tensor& dtrunk_acc);
    int reg_in_channels() const;
    int reg_out_channels(int block_idx) const;  // 0-based
    bool is_conditioned(int block_idx) const;

    NetworkConfig cfg_;
    Variant variant_;
    VariantTraits traits_;

    std::array<ConvBn2d, 3> feat_;
    Tensor feat3_w_, feat3_b_;
    Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_;  // feature-concat encoder
    Tensor trunk_conv1_w_, trunk_conv1_b_, trunk_conv2_w_, trunk_conv2_b_;
    std::array<RegBlock, 6> reg_;

    ForwardCache cache_;
};

}  // namespace fstereo
