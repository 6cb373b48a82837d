#include "fusion_stereo/network.hpp"

#include <algorithm>
#include <cmath>

#include "fusion_stereo/checkpoint.hpp"
#include "fusion_stereo/cost_volume.hpp"
#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/ops.hpp"
#include "fusion_stereo/rng.hpp"

namespace fstereo {

namespace {

const std::vector<std::pair<Variant, const char*>>& variant_table() {
    static const std::vector<std::pair<Variant, const char*>> table = {
        {Variant::kNone, "none"},
        {Variant::kInputFusionOnly, "input_fusion_only"},
        {Variant::kFeatureConcat, "feature_concat"},
        {Variant::kNaiveCbn, "naive_cbn"},
        {Variant::kCcvnormCat, "ccvnorm_cat"},
        {Variant::kCcvnormCont, "ccvnorm_cont"},
        {Variant::kHierCcvnorm, "hier_ccvnorm"},
        {Variant::kIfNaiveCbn, "if_naive_cbn"},
        {Variant::kIfCcvnormCat, "if_ccvnorm_cat"},
        {Variant::kIfCcvnormCont, "if_ccvnorm_cont"},
        {Variant::kIfHierCcvnorm, "if_hier_ccvnorm"},
    };
    return table;
}

void accumulate(Tensor& param, const Tensor& g) {
    param.ensure_grad();
    for (size_t i = 0; i < param.grad.size(); ++i) param.grad[i] += g.values[i];
}

}  // namespace

Variant parse_variant(const std::string& name) {
    for (const auto& [v, n] : variant_table())
        if (name == n) return v;
    std::string valid;
    for (const auto& [v, n] : variant_table()) {
        if (!valid.empty()) valid += ", ";
        valid += n;
    }
    throw ConfigError("unknown variant '" + name + "'; valid variants: " + valid);
}

const char* variant_name(Variant v) {
    for (const auto& [vv, n] : variant_table())
        if (vv == v) return n;
    return "?";
}

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [v, n] : variant_table()) out.emplace_back(n);
        return out;
    }();
    return names;
}

VariantTraits variant_traits(Variant v) {
    VariantTraits t;
    switch (v) {
        case Variant::kNone: break;
        case Variant::kInputFusionOnly: t.input_fusion = true; break;
        case Variant::kFeatureConcat: t.feature_concat = true; break;
        case Variant::kNaiveCbn: t.cond = CondMode::kNaiveCbn; break;
        case Variant::kCcvnormCat: t.cond = CondMode::kCategorical; break;
        case Variant::kCcvnormCont: t.cond = CondMode::kContinuous; break;
        case Variant::kHierCcvnorm: t.cond = CondMode::kHier; break;
        case Variant::kIfNaiveCbn:
            t.input_fusion = true;
            t.cond = CondMode::kNaiveCbn;
            break;
        case Variant::kIfCcvnormCat:
            t.input_fusion = true;
            t.cond = CondMode::kCategorical;
            break;
        case Variant::kIfCcvnormCont:
            t.input_fusion = true;
            t.cond = CondMode::kContinuous;
            break;
        case Variant::kIfHierCcvnorm:
            t.input_fusion = true;
            t.cond = CondMode::kHier;
            break;
    }
    return t;
}

void NetworkConfig::validate() const {
    if (channels < 1 || reg_channels < 1)
        throw ConfigError("network: channel counts must be positive");
    if (d_max < 1) throw ConfigError("network: d_max must be positive");
    if (downsample < 1) throw ConfigError("network: downsample must be >= 1");
    if (d_max % downsample != 0)
        throw ConfigError("network: d_max " + std::to_string(d_max) +
                          " must be divisible by downsample " + std::to_string(downsample));
    if (n_bins < 0) throw ConfigError("network: n_bins must be >= 0");
    if (embed < 1 || cbn_hidden < 1 || concat_channels < 1)
        throw ConfigError("network: producer widths must be positive");
    std::vector<int> seen;
    for (int l : cond_layers) {
        if (l < 1 || l > 6)
            throw ConfigError("network: conditioned layer id " + std::to_string(l) +
                              " outside 1..6");
        if (std::find(seen.begin(), seen.end(), l) != seen.end())
            throw ConfigError("network: conditioned layer id " + std::to_string(l) + " repeated");
        seen.push_back(l);
    }
}

SparseDisparityMap resample_to_volume(const SparseDisparityMap& full, int s) {
    if (s < 1) throw ConfigError("resample_to_volume: downsample must be >= 1");
    if (s == 1) return full;
    const int hv = full.height / s, wv = full.width / s;
    SparseDisparityMap out(hv, wv);
    for (int y = 0; y < hv; ++y) {
        for (int x = 0; x < wv; ++x) {
            double best = -1.0;
            for (int dy = 0; dy < s; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    const int fy = y * s + dy, fx = x * s + dx;
                    if (!full.is_valid(fy, fx)) continue;
                    best = std::max(best, full.at(fy, fx));
                }
            }
            if (best >= 0.0) out.set(y, x, best / static_cast<double>(s));
        }
    }
    return out;
}

Model::Model(const NetworkConfig& cfg, Variant variant, uint64_t seed)
    : cfg_(cfg), variant_(variant), traits_(variant_traits(variant)) {
    cfg_.validate();
    const int c = cfg_.channels;
    const int r = cfg_.reg_channels;
    const int in_ch = traits_.input_fusion ? 4 : 3;
    const int dv = cfg_.n_disp_vol();
    const int bins = cfg_.bins();

    Rng rng(mix_seed(seed, 0x6675736full));  // model init stream

    auto he_conv = [&](Tensor& w, const std::vector<int>& shape) {
        w = Tensor(shape);
        int64_t fan_in = 1;
        for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        fill_he(w, rng, static_cast<int>(fan_in));
    };

    he_conv(feat_[0].w, {c, in_ch, 3, 3});
    feat_[0].gamma = Tensor({c}, 1.0);
    feat_[0].beta = Tensor({c});
    feat_[0].running_mean = Tensor({c});
    feat_[0].running_var = Tensor({c}, 1.0);
    for (int i = 1; i < 3; ++i) {
        he_conv(feat_[static_cast<size_t>(i)].w, {c, c, 3, 3});
        feat_[static_cast<size_t>(i)].gamma = Tensor({c}, 1.0);
        feat_[static_cast<size_t>(i)].beta = Tensor({c});
        feat_[static_cast<size_t>(i)].running_mean = Tensor({c});
        feat_[static_cast<size_t>(i)].running_var = Tensor({c}, 1.0);
    }
    he_conv(feat3_w_, {c, c, 3, 3});
    feat3_b_ = Tensor({c});

    if (traits_.feature_concat) {
        const int cl = cfg_.concat_channels;
        he_conv(enc1_w_, {cl, 2, 3, 3});
        enc1_b_ = Tensor({cl});
        he_conv(enc2_w_, {cl, cl, 3, 3});
        enc2_b_ = Tensor({cl});
    }
    if (traits_.cond == CondMode::kContinuous) {
        const int e = cfg_.embed;
        he_conv(trunk_conv1_w_, {e, 2, 3, 3});
        trunk_conv1_b_ = Tensor({e});
        he_conv(trunk_conv2_w_, {e, e, 3, 3});
        trunk_conv2_b_ = Tensor({e});
    }

    for (int i = 0; i < 6; ++i) {
        RegBlock& blk = reg_[static_cast<size_t>(i)];
        const int in3d = i == 0 ? reg_in_channels() : r;
        const int out3d = reg_out_channels(i);
        he_conv(blk.w, {out3d, in3d, 3, 3, 3});
        blk.running_mean = Tensor({out3d});
        blk.running_var = Tensor({out3d}, 1.0);
        blk.conditioned = is_conditioned(i);
        if (!blk.conditioned) {
            blk.gamma = Tensor({out3d}, 1.0);
            blk.beta = Tensor({out3d});
            continue;
        }
        switch (traits_.cond) {
            case CondMode::kCategorical:
                blk.gamma_table = Tensor({bins, dv, out3d});
                fill_gaussian(blk.gamma_table, rng, 1.0, 0.02);
                blk.beta_table = Tensor({bins, dv, out3d});
                fill_gaussian(blk.beta_table, rng, 0.0, 0.02);
                blk.gamma_invalid = Tensor({dv, out3d}, 1.0);
                blk.beta_invalid = Tensor({dv, out3d});
                break;
            case CondMode::kHier:
                blk.g_table = Tensor({bins, out3d});
                fill_gaussian(blk.g_table, rng, 1.0, 0.02);
                blk.h_table = Tensor({bins, out3d});
                fill_gaussian(blk.h_table, rng, 0.0, 0.02);
                blk.phi_g = Tensor({dv, out3d}, 1.0);
                blk.psi_g = Tensor({dv, out3d});
                blk.phi_h = Tensor({dv, out3d}, 1.0);
                blk.psi_h = Tensor({dv, out3d});
                blk.gamma_invalid = Tensor({dv, out3d}, 1.0);
                blk.beta_invalid = Tensor({dv, out3d});
                break;
            case CondMode::kContinuous: {
                const int e = cfg_.embed;
                blk.head_w = Tensor({2 * dv * out3d, e, 1, 1});
                fill_gaussian(blk.head_w, rng, 0.0, 0.02);
                blk.head_b = Tensor({2 * dv * out3d});
                for (int j = 0; j < dv * out3d; ++j) blk.head_b.values[static_cast<size_t>(j)] = 1.0;
                break;
            }
            case CondMode::kNaiveCbn: {
                const int nh = cfg_.cbn_hidden;
                blk.mlp_w1 = Tensor({nh});
                fill_gaussian(blk.mlp_w1, rng, 0.0, 0.5);
                blk.mlp_b1 = Tensor({nh});
                blk.mlp_w2 = Tensor({2 * out3d, nh});
                fill_gaussian(blk.mlp_w2, rng, 0.0, std::sqrt(1.0 / nh));
                blk.mlp_b2 = Tensor({2 * out3d});
                for (int j = 0; j < out3d; ++j) blk.mlp_b2.values[static_cast<size_t>(j)] = 1.0;
                blk.uncond_gamma = Tensor({out3d}, 1.0);
                blk.uncond_beta = Tensor({out3d});
                break;
            }
            case CondMode::kNone: break;
        }
    }

    for (ParamRef& p : named_parameters()) {
        if (p.trainable) apply_precision(*p.tensor);
    }
}

int Model::reg_in_channels() const {
    int in3d = 2 * cfg_.channels;
    if (traits_.feature_concat) in3d += cfg_.concat_channels;
    return in3d;
}

int Model::reg_out_channels(int block_idx) const { return block_idx == 5 ? 1 : cfg_.reg_channels; }

bool Model::is_conditioned(int block_idx) const {
    if (traits_.cond == CondMode::kNone) return false;
    return std::find(cfg_.cond_layers.begin(), cfg_.cond_layers.end(), block_idx + 1) !=
           cfg_.cond_layers.end();
}

std::vector<ParamRef> Model::named_parameters() {
    std::vector<ParamRef> out;
    auto add = [&](const std::string& name, Tensor& t, bool trainable) {
        out.push_back({name, &t, trainable});
    };
    for (int i = 0; i < 3; ++i) {
        ConvBn2d& b = feat_[static_cast<size_t>(i)];
        const std::string p = "features.block" + std::to_string(i);
        add(p + ".weight", b.w, true);
        add(p + ".bn.gamma", b.gamma, true);
        add(p + ".bn.beta", b.beta, true);
        add(p + ".bn.running_mean", b.running_mean, false);
        add(p + ".bn.running_var", b.running_var, false);
    }
    add("features.block3.weight", feat3_w_, true);
    add("features.block3.bias", feat3_b_, true);
    if (traits_.feature_concat) {
        add("feature_concat.trunk.conv1.weight", enc1_w_, true);
        add("feature_concat.trunk.conv1.bias", enc1_b_, true);
        add("feature_concat.trunk.conv2.weight", enc2_w_, true);
        add("feature_concat.trunk.conv2.bias", enc2_b_, true);
    }
    if (traits_.cond == CondMode::kContinuous) {
        add("ccvnorm.trunk.conv1.weight", trunk_conv1_w_, true);
        add("ccvnorm.trunk.conv1.bias", trunk_conv1_b_, true);
        add("ccvnorm.trunk.conv2.weight", trunk_conv2_w_, true);
        add("ccvnorm.trunk.conv2.bias", trunk_conv2_b_, true);
    }
    for (int i = 0; i < 6; ++i) {
        RegBlock& blk = reg_[static_cast<size_t>(i)];
        const std::string rp = "reg.block" + std::to_string(i + 1);
        add(rp + ".weight", blk.w, true);
        if (!blk.conditioned) {
            add(rp + ".bn.gamma", blk.gamma, true);
            add(rp + ".bn.beta", blk.beta, true);
            add(rp + ".bn.running_mean", blk.running_mean, false);
            add(rp + ".bn.running_var", blk.running_var, false);
            continue;
        }
        const std::string cp = "ccvnorm.layer" + std::to_string(i + 1);
        switch (traits_.cond) {
            case CondMode::kCategorical:
                add(cp + ".gamma_table", blk.gamma_table, true);
                add(cp + ".beta_table", blk.beta_table, true);
                add(cp + ".gamma_invalid", blk.gamma_invalid, true);
                add(cp + ".beta_invalid", blk.beta_invalid, true);
                break;
            case CondMode::kHier:
                add(cp + ".g_table", blk.g_table, true);
                add(cp + ".h_table", blk.h_table, true);
                add(cp + ".phi_g", blk.phi_g, true);
                add(cp + ".psi_g", blk.psi_g, true);
                add(cp + ".phi_h", blk.phi_h, true);
                add(cp + ".psi_h", blk.psi_h, true);
                add(cp + ".gamma_invalid", blk.gamma_invalid, true);
                add(cp + ".beta_invalid", blk.beta_invalid, true);
                break;
            case CondMode::kContinuous:
                add(cp + ".head_weight", blk.head_w, true);
                add(cp + ".head_bias", blk.head_b, true);
                break;
            case CondMode::kNaiveCbn:
                add(cp + ".mlp_w1", blk.mlp_w1, true);
                add(cp + ".mlp_b1", blk.mlp_b1, true);
                add(cp + ".mlp_w2", blk.mlp_w2, true);
                add(cp + ".mlp_b2", blk.mlp_b2, true);
                add(cp + ".uncond_gamma", blk.uncond_gamma, true);
                add(cp + ".uncond_beta", blk.uncond_beta, true);
                break;
            case CondMode::kNone: break;
        }
        add(cp + ".running_mean", blk.running_mean, false);
        add(cp + ".running_var", blk.running_var, false);
    }
    return out;
}

Tensor Model::fuse_input(const Tensor& image, const SparseDisparityMap& lidar) const {
    if (!traits_.input_fusion) return image;
    const int h = image.dim(1), w = image.dim(2);
    Tensor out({4, h, w});
    std::copy(image.values.begin(), image.values.end(), out.values.begin());
    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    for (size_t i = 0; i < plane; ++i) {
        out.values[3 * plane + i] =
            lidar.valid[i] ? lidar.disparity[i] / static_cast<double>(cfg_.d_max) : kInvalidFill;
    }
    return out;
}

Tensor Model::run_features(const Tensor& input, FeatureCache& cache, bool training) {
    auto block = [&](const Tensor& x, ConvBn2d& b, BlockCache2d& bc, int stride) {
        bc.input = x;
        Tensor pre = conv2d(x, b.w, Tensor(), stride, 1);
        bc.norm_out = batch_norm(pre, b.gamma, b.beta, b.running_mean, b.running_var, training,
                                 cfg_.bn_momentum, cfg_.bn_eps, &bc.norm);
        return relu(bc.norm_out);
    };
    Tensor x = block(input, feat_[0], cache.b0, cfg_.downsample);
    x = block(x, feat_[1], cache.b1, 1);
    x = block(x, feat_[2], cache.b2, 1);
    cache.b3_input = x;
    return conv2d(x, feat3_w_, feat3_b_, 1, 1);
}

void Model::features_backward(const FeatureCache& cache, const Tensor& grad_out) {
    Conv2dGrads g3 = conv2d_backward(cache.b3_input, feat3_w_, true, 1, 1, grad_out);
    accumulate(feat3_w_, g3.weights);
    accumulate(feat3_b_, g3.bias);
    Tensor d = g3.input;
    const BlockCache2d* caches[3] = {&cache.b2, &cache.b1, &cache.b0};
    for (int step = 0; step < 3; ++step) {
        const int i = 2 - step;
        ConvBn2d& b = feat_[static_cast<size_t>(i)];
        const BlockCache2d& bc = *caches[step];
        d = relu_backward(bc.norm_out, d);
        BatchNormGrads bn = batch_norm_backward(bc.norm, b.gamma, d);
        accumulate(b.gamma, bn.gamma);
        accumulate(b.beta, bn.beta);
        const int stride = i == 0 ? cfg_.downsample : 1;
        Conv2dGrads cg = conv2d_backward(bc.input, b.w, false, stride, 1, bn.input);
        accumulate(b.w, cg.weights);
        d = cg.input;
    }
}

FieldPair Model::produce_fields(const RegBlock& blk, const SparseDisparityMap& lidar_vol,
                                ForwardCache& cache, int out_channels) {
    const double dmax_vol = static_cast<double>(cfg_.n_disp_vol());
    switch (traits_.cond) {
        case CondMode::kCategorical:
            return categorical_fields(lidar_vol, dmax_vol, blk.gamma_table, blk.beta_table,
                                      blk.gamma_invalid, blk.beta_invalid);
        case CondMode::kHier:
            return hier_fields(lidar_vol, dmax_vol, blk.g_table, blk.h_table, blk.phi_g, blk.psi_g,
                               blk.phi_h, blk.psi_h, blk.gamma_invalid, blk.beta_invalid);
        case CondMode::kContinuous:
            return continuous_head_forward(cache.trunk_out, blk.head_w, blk.head_b,
                                           cfg_.n_disp_vol(), out_channels);
        case CondMode::kNaiveCbn:
            return cbn_fields(lidar_vol, dmax_vol, cfg_.n_disp_vol(), blk.mlp_w1, blk.mlp_b1,
                              blk.mlp_w2, blk.mlp_b2, blk.uncond_gamma, blk.uncond_beta);
        case CondMode::kNone: break;
    }
    throw ConfigError("produce_fields called without a conditioning mode");
}

void Model::fields_backward(RegBlock& blk, const SparseDisparityMap& lidar_vol,
                            const Tensor& grad_gamma, const Tensor& grad_beta,
                            Tensor& dtrunk_acc) {
    const double dmax_vol = static_cast<double>(cfg_.n_disp_vol());
    switch (traits_.cond) {
        case CondMode::kCategorical: {
            CategoricalGrads g = categorical_fields_backward(lidar_vol, dmax_vol, cfg_.bins(),
                                                             grad_gamma, grad_beta);
            accumulate(blk.gamma_table, g.gamma_table);
            accumulate(blk.beta_table, g.beta_table);
            accumulate(blk.gamma_invalid, g.gamma_invalid);
            accumulate(blk.beta_invalid, g.beta_invalid);
            return;
        }
        case CondMode::kHier: {
            HierGrads g = hier_fields_backward(lidar_vol, dmax_vol, blk.g_table, blk.h_table,
                                               blk.phi_g, blk.psi_g, blk.phi_h, blk.psi_h,
                                               grad_gamma, grad_beta);
            accumulate(blk.g_table, g.g_table);
            accumulate(blk.h_table, g.h_table);
            accumulate(blk.phi_g, g.phi_g);
            accumulate(blk.psi_g, g.psi_g);
            accumulate(blk.phi_h, g.phi_h);
            accumulate(blk.psi_h, g.psi_h);
            accumulate(blk.gamma_invalid, g.gamma_invalid);
            accumulate(blk.beta_invalid, g.beta_invalid);
            return;
        }
        case CondMode::kContinuous: {
            ContinuousHeadGrads g =
                continuous_head_backward(cache_.trunk_out, blk.head_w, grad_gamma, grad_beta);
            accumulate(blk.head_w, g.head_w);
            accumulate(blk.head_b, g.head_b);
            for (size_t i = 0; i < dtrunk_acc.values.size(); ++i)
                dtrunk_acc.values[i] += g.trunk_out.values[i];
            return;
        }
        case CondMode::kNaiveCbn: {
            CbnGrads g = cbn_fields_backward(lidar_vol, dmax_vol, blk.mlp_w1, blk.mlp_b1,
                                             blk.mlp_w2, blk.mlp_b2, grad_gamma, grad_beta);
            accumulate(blk.mlp_w1, g.w1);
            accumulate(blk.mlp_b1, g.b1);
            accumulate(blk.mlp_w2, g.w2);
            accumulate(blk.mlp_b2, g.b2);
            accumulate(blk.uncond_gamma, g.uncond_gamma);
            accumulate(blk.uncond_beta, g.uncond_beta);
            return;
        }
        case CondMode::kNone: break;
    }
}

Tensor Model::forward(const StereoSample& sample, bool training) {
    if (sample.left.ndim() != 3 || sample.left.dim(0) != 3)
        throw ShapeError("forward: left image must be [3,H,W], got " + sample.left.shape_str());
    check_same_shape(sample.left, sample.right, "forward left/right images");
    const int h = sample.left.dim(1), w = sample.left.dim(2);
    if (h % cfg_.downsample != 0 || w % cfg_.downsample != 0)
        throw ShapeError("forward: image size " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by downsample " + std::to_string(cfg_.downsample));
    if (sample.lidar_left.height != h || sample.lidar_left.width != w)
        throw ShapeError("forward: left sparse map size does not match the image");
    if (sample.lidar_right.height != h || sample.lidar_right.width != w)
        throw ShapeError("forward: right sparse map size does not match the image");

    cache_ = ForwardCache{};
    cache_.training = training;
    cache_.in_left = fuse_input(sample.left, sample.lidar_left);
    cache_.in_right = fuse_input(sample.right, sample.lidar_right);

    Tensor fl = run_features(cache_.in_left, cache_.feat_left, training);
    Tensor fr = run_features(cache_.in_right, cache_.feat_right, training);

    Tensor vol = build_cost_volume(fl, fr, cfg_.n_disp_vol());

    if (traits_.feature_concat) {
        cache_.enc_input = sparse_to_dense_input(sample.lidar_left,
                                                 static_cast<double>(cfg_.d_max));
        cache_.enc_pre1 = conv2d(cache_.enc_input, enc1_w_, enc1_b_, cfg_.downsample, 1);
        cache_.enc_act1 = relu(cache_.enc_pre1);
        Tensor enc = conv2d(cache_.enc_act1, enc2_w_, enc2_b_, 1, 1);
        const int cl = enc.dim(0), hv = enc.dim(1), wv = enc.dim(2);
        const int dv = cfg_.n_disp_vol();
        Tensor enc3d({cl, hv, wv, dv});
        for (int cc = 0; cc < cl; ++cc) {
            for (int y = 0; y < hv; ++y) {
                for (int x = 0; x < wv; ++x) {
                    const double v = enc.values[static_cast<size_t>((cc * hv + y) * wv + x)];
                    double* cell =
                        &enc3d.values[static_cast<size_t>(((cc * hv + y) * wv + x)) * dv];
                    for (int dd = 0; dd < dv; ++dd) cell[dd] = v;
                }
            }
        }
        vol = concat_channels(vol, enc3d);
    }
    cache_.volume = vol;

    cache_.lidar_vol = resample_to_volume(sample.lidar_left, cfg_.downsample);
    if (traits_.cond == CondMode::kContinuous) {
        cache_.trunk_in =
            sparse_to_dense_input(cache_.lidar_vol, static_cast<double>(cfg_.n_disp_vol()));
        cache_.trunk_out = continuous_trunk_forward(cache_.trunk_in, trunk_conv1_w_,
                                                    trunk_conv1_b_, trunk_conv2_w_, trunk_conv2_b_,
                                                    &cache_.trunk);
    }

    Tensor x = vol;
    for (int i = 0; i < 6; ++i) {
        RegBlock& blk = reg_[static_cast<size_t>(i)];
        RegCache& rc = cache_.reg[static_cast<size_t>(i)];
        rc.conv_in = x;
        Tensor pre = conv3d(x, blk.w, Tensor(), 1, 1);
        if (blk.conditioned) {
            rc.fields = produce_fields(blk, cache_.lidar_vol, cache_, reg_out_channels(i));
            rc.norm_out = conditioned_norm(pre, rc.fields.gamma, rc.fields.beta, blk.running_mean,
                                           blk.running_var, training, cfg_.bn_momentum,
                                           cfg_.bn_eps, &rc.norm);
        } else {
            rc.norm_out = batch_norm(pre, blk.gamma, blk.beta, blk.running_mean, blk.running_var,
                                     training, cfg_.bn_momentum, cfg_.bn_eps, &rc.norm);
        }
        x = i < 5 ? relu(rc.norm_out) : rc.norm_out;
    }
    cache_.reg_out = x;
    cache_.ups = upsample_trilinear(x, h, w, cfg_.d_max);
    Tensor disp = soft_argmin(cache_.ups, 1.0);
    cache_.valid = true;
    return disp;
}

void Model::backward(const Tensor& grad_disparity) {
    if (!cache_.valid) throw ConfigError("backward called before forward");
    const int h = cache_.in_left.dim(1), w = cache_.in_left.dim(2);

    Tensor dups = soft_argmin_backward(cache_.ups, 1.0, grad_disparity);
    Tensor d = upsample_trilinear_backward(cache_.reg_out, h, w, cfg_.d_max, dups);

    Tensor dtrunk_acc;
    if (traits_.cond == CondMode::kContinuous) dtrunk_acc = Tensor::zeros_like(cache_.trunk_out);

    for (int i = 5; i >= 0; --i) {
        RegBlock& blk = reg_[static_cast<size_t>(i)];
        RegCache& rc = cache_.reg[static_cast<size_t>(i)];
        if (i < 5) d = relu_backward(rc.norm_out, d);
        if (blk.conditioned) {
            ConditionedNormGrads ng = conditioned_norm_backward(rc.norm, rc.fields.gamma, d);
            fields_backward(blk, cache_.lidar_vol, ng.gamma_field, ng.beta_field, dtrunk_acc);
            d = ng.input;
        } else {
            BatchNormGrads ng = batch_norm_backward(rc.norm, blk.gamma, d);
            accumulate(blk.gamma, ng.gamma);
            accumulate(blk.beta, ng.beta);
            d = ng.input;
        }
        Conv3dGrads cg = conv3d_backward(rc.conv_in, blk.w, false, 1, 1, d);
        accumulate(blk.w, cg.weights);
        d = cg.input;
    }

    Tensor dvol = d;
    if (traits_.feature_concat) {
        Tensor denc3d;
        split_channels_backward(d, 2 * cfg_.channels, dvol, denc3d);
        const int cl = denc3d.dim(0), hv = denc3d.dim(1), wv = denc3d.dim(2), dv = denc3d.dim(3);
        Tensor denc({cl, hv, wv});
        for (int cc = 0; cc < cl; ++cc) {
            for (int y = 0; y < hv; ++y) {
                for (int x = 0; x < wv; ++x) {
                    const double* cell =
                        &denc3d.values[static_cast<size_t>(((cc * hv + y) * wv + x)) * dv];
                    double acc = 0.0;
                    for (int dd = 0; dd < dv; ++dd) acc += cell[dd];
                    denc.values[static_cast<size_t>((cc * hv + y) * wv + x)] = acc;
                }
            }
        }
        Conv2dGrads g2 = conv2d_backward(cache_.enc_act1, enc2_w_, true, 1, 1, denc);
        accumulate(enc2_w_, g2.weights);
        accumulate(enc2_b_, g2.bias);
        Tensor dpre1 = relu_backward(cache_.enc_pre1, g2.input);
        Conv2dGrads g1 = conv2d_backward(cache_.enc_input, enc1_w_, true, cfg_.downsample, 1,
                                         dpre1);
        accumulate(enc1_w_, g1.weights);
        accumulate(enc1_b_, g1.bias);
    }

    Tensor dfl, dfr;
    cost_volume_backward(dvol, dfl, dfr);
    features_backward(cache_.feat_left, dfl);
    features_backward(cache_.feat_right, dfr);

    if (traits_.cond == CondMode::kContinuous) {
        ContinuousTrunkGrads tg =
            continuous_trunk_backward(cache_.trunk, trunk_conv1_w_, trunk_conv2_w_, dtrunk_acc);
        accumulate(trunk_conv1_w_, tg.conv1_w);
        accumulate(trunk_conv1_b_, tg.conv1_b);
        accumulate(trunk_conv2_w_, tg.conv2_w);
        accumulate(trunk_conv2_b_, tg.conv2_b);
    }
}

void Model::zero_grad() {
    for (ParamRef& p : named_parameters()) {
        if (p.trainable) p.tensor->zero_grad();
    }
}

void Model::save(const std::string& path) {
    std::vector<CheckpointEntry> entries;
    for (ParamRef& p : named_parameters()) entries.push_back({p.name, *p.tensor});
    save_checkpoint(path, entries);
}

void Model::load(const std::string& path) {
    const std::vector<CheckpointEntry> entries = load_checkpoint(path);
    std::vector<ParamRef> params = named_parameters();
    if (entries.size() != params.size())
        throw DataError("checkpoint '" + path + "' has " + std::to_string(entries.size()) +
                        " entries but the model expects " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        if (entries[i].name != params[i].name)
            throw DataError("checkpoint '" + path + "' entry " + std::to_string(i) + " is '" +
                            entries[i].name + "' but the model expects '" + params[i].name + "'");
        if (!entries[i].tensor.same_shape(*params[i].tensor))
            throw DataError("checkpoint '" + path + "' entry '" + entries[i].name + "' has shape " +
                            entries[i].tensor.shape_str() + " but the model expects " +
                            params[i].tensor->shape_str());
        params[i].tensor->values = entries[i].tensor.values;
    }
}

int64_t Model::param_count(bool trainable_only) {
    int64_t n = 0;
    for (ParamRef& p : named_parameters()) {
        if (trainable_only && !p.trainable) continue;
        n += p.tensor->numel();
    }
    return n;
}

int64_t Model::conditioning_param_count() {
    int64_t n = 0;
    for (ParamRef& p : named_parameters()) {
        if (!p.trainable) continue;
        if (p.name.rfind("ccvnorm.", 0) == 0) n += p.tensor->numel();
    }
    return n;
}

}  // namespace fstereo
