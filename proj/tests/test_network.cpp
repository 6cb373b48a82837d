#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "fusion_stereo/conditioning.hpp"
#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/grad_check.hpp"
#include "fusion_stereo/network.hpp"
#include "fusion_stereo/scene.hpp"

using namespace fstereo;

namespace {

NetworkConfig tiny_net() {
    NetworkConfig cfg;
    cfg.channels = 4;
    cfg.reg_channels = 4;
    cfg.d_max = 8;
    cfg.downsample = 2;
    cfg.embed = 4;
    cfg.cbn_hidden = 4;
    cfg.concat_channels = 4;
    return cfg;
}

SceneConfig tiny_scene() {
    SceneConfig cfg;
    cfg.width = 16;
    cfg.height = 8;
    cfg.d_max = 8;
    cfg.lidar_coverage = 0.3;
    cfg.lidar_noise = 0.0;
    return cfg;
}

std::string temp_path(const char* stem) {
    return std::string("/tmp/fstereo_test_") + stem + "_" + std::to_string(::getpid()) + ".ckpt";
}

std::vector<double> snapshot(Model& m, const std::string& name) {
    for (ParamRef& p : m.named_parameters())
        if (p.name == name) return p.tensor->values;
    REQUIRE_MESSAGE(false, "no parameter named ", name);
    return {};
}

Tensor* find_param(Model& m, const std::string& name) {
    for (ParamRef& p : m.named_parameters())
        if (p.name == name) return p.tensor;
    return nullptr;
}

const std::vector<std::string> kAllVariants = {
    "none",          "input_fusion_only", "feature_concat", "naive_cbn",
    "ccvnorm_cat",   "ccvnorm_cont",      "hier_ccvnorm",   "if_naive_cbn",
    "if_ccvnorm_cat", "if_ccvnorm_cont",  "if_hier_ccvnorm"};

}  // namespace

TEST_CASE("variant names round trip through the parser") {
    CHECK(variant_names() == kAllVariants);
    for (const std::string& n : kAllVariants) CHECK(variant_name(parse_variant(n)) == n);
    CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
    try {
        parse_variant("bogus");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        for (const std::string& n : kAllVariants)
            CHECK(msg.find(n) != std::string::npos);
    }
}

TEST_CASE("variant traits separate input fusion from conditioning") {
    CHECK_FALSE(variant_traits(Variant::kNone).input_fusion);
    CHECK(variant_traits(Variant::kInputFusionOnly).input_fusion);
    CHECK(variant_traits(Variant::kInputFusionOnly).cond == CondMode::kNone);
    CHECK(variant_traits(Variant::kFeatureConcat).feature_concat);
    CHECK_FALSE(variant_traits(Variant::kFeatureConcat).input_fusion);
    CHECK(variant_traits(Variant::kCcvnormCat).cond == CondMode::kCategorical);
    CHECK_FALSE(variant_traits(Variant::kCcvnormCat).input_fusion);
    CHECK(variant_traits(Variant::kIfCcvnormCat).cond == CondMode::kCategorical);
    CHECK(variant_traits(Variant::kIfCcvnormCat).input_fusion);
    CHECK(variant_traits(Variant::kHierCcvnorm).cond == CondMode::kHier);
    CHECK(variant_traits(Variant::kCcvnormCont).cond == CondMode::kContinuous);
    CHECK(variant_traits(Variant::kNaiveCbn).cond == CondMode::kNaiveCbn);
    CHECK(variant_traits(Variant::kIfHierCcvnorm).input_fusion);
}

TEST_CASE("network config validation rejects inconsistent settings") {
    NetworkConfig ok = tiny_net();
    CHECK_NOTHROW(ok.validate());

    NetworkConfig c = ok;
    c.channels = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.d_max = 9;  // not divisible by downsample 2
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.downsample = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.n_bins = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.cond_layers = {0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.cond_layers = {7};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.cond_layers = {2, 2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ok;
    c.embed = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    CHECK(ok.n_disp_vol() == 4);
    CHECK(ok.bins() == 8);
    ok.n_bins = 32;
    CHECK(ok.bins() == 32);
}

TEST_CASE("resample_to_volume pools validity, keeps the largest value, rescales") {
    SparseDisparityMap full(4, 4);
    full.set(0, 0, 2.0);
    full.set(1, 1, 6.0);  // same 2x2 cell as (0,0); larger wins
    full.set(0, 2, 3.0);  // cell (0,1)
    // cell (1,0) left empty; cell (1,1) gets a single point
    full.set(3, 3, 5.0);

    const SparseDisparityMap vol = resample_to_volume(full, 2);
    REQUIRE(vol.height == 2);
    REQUIRE(vol.width == 2);
    CHECK(vol.is_valid(0, 0));
    CHECK(vol.at(0, 0) == 3.0);  // max(2,6)/2
    CHECK(vol.is_valid(0, 1));
    CHECK(vol.at(0, 1) == 1.5);
    CHECK_FALSE(vol.is_valid(1, 0));
    CHECK(vol.at(1, 1) == 2.5);

    const SparseDisparityMap same = resample_to_volume(full, 1);
    CHECK(same.disparity == full.disparity);
    CHECK(same.valid == full.valid);
    CHECK_THROWS_AS(resample_to_volume(full, 0), ConfigError);
}

TEST_CASE("every variant produces a finite full-resolution disparity map") {
    const StereoSample sample = gen_scene(tiny_scene(), 11);
    for (const std::string& name : kAllVariants) {
        CAPTURE(name);
        Model model(tiny_net(), parse_variant(name), 5);
        const Tensor pred = model.forward(sample, false);
        REQUIRE(pred.shape() == std::vector<int>{8, 16});
        CHECK(pred.all_finite());
        for (double v : pred.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 7.0);  // soft argmin cannot leave the support
        }
    }
}

TEST_CASE("construction is deterministic in the seed") {
    const NetworkConfig cfg = tiny_net();
    Model a(cfg, Variant::kHierCcvnorm, 5);
    Model b(cfg, Variant::kHierCcvnorm, 5);
    Model c(cfg, Variant::kHierCcvnorm, 6);
    auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff_seed = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor->values == pb[i].tensor->values);
        if (pa[i].tensor->values != pc[i].tensor->values) any_diff_seed = true;
    }
    CHECK(any_diff_seed);
}

TEST_CASE("eval forwards are pure; training forwards move the running buffers") {
    const StereoSample sample = gen_scene(tiny_scene(), 12);
    Model model(tiny_net(), Variant::kCcvnormCat, 7);
    const std::string buf = "features.block0.bn.running_mean";

    const std::vector<double> before = snapshot(model, buf);
    const Tensor e1 = model.forward(sample, false);
    const Tensor e2 = model.forward(sample, false);
    CHECK(e1.values == e2.values);
    CHECK(snapshot(model, buf) == before);

    const Tensor t1 = model.forward(sample, true);
    CHECK(snapshot(model, buf) != before);
    CHECK(t1.all_finite());
    // training output differs from eval output because the statistics differ
    CHECK(t1.values != e1.values);
}

TEST_CASE("checkpoint save and load restore every value bitwise") {
    const std::string path = temp_path("roundtrip");
    const StereoSample sample = gen_scene(tiny_scene(), 13);
    Model a(tiny_net(), Variant::kIfHierCcvnorm, 21);
    const Tensor before = a.forward(sample, false);
    a.save(path);

    Model b(tiny_net(), Variant::kIfHierCcvnorm, 99);
    CHECK(b.forward(sample, false).values != before.values);
    b.load(path);
    const Tensor after = b.forward(sample, false);
    CHECK(after.values == before.values);
    auto pa = a.named_parameters(), pb = b.named_parameters();
    for (size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].tensor->values == pb[i].tensor->values);
    std::remove(path.c_str());
}

TEST_CASE("loading a checkpoint from a different architecture fails loudly") {
    const std::string path = temp_path("mismatch");
    Model a(tiny_net(), Variant::kCcvnormCat, 3);
    a.save(path);

    Model other_variant(tiny_net(), Variant::kHierCcvnorm, 3);
    CHECK_THROWS_AS(other_variant.load(path), DataError);

    NetworkConfig wider = tiny_net();
    wider.reg_channels = 6;
    Model other_shape(wider, Variant::kCcvnormCat, 3);
    CHECK_THROWS_AS(other_shape.load(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("param_count agrees with direct enumeration") {
    for (const std::string& name : kAllVariants) {
        CAPTURE(name);
        Model model(tiny_net(), parse_variant(name), 17);
        int64_t trainable = 0, all = 0, cond = 0;
        for (ParamRef& p : model.named_parameters()) {
            all += p.tensor->numel();
            if (p.trainable) trainable += p.tensor->numel();
            if (p.trainable && p.name.rfind("ccvnorm.", 0) == 0) cond += p.tensor->numel();
        }
        CHECK(model.param_count(true) == trainable);
        CHECK(model.param_count(false) == all);
        CHECK(model.conditioning_param_count() == cond);
        const bool has_cond = variant_traits(parse_variant(name)).cond != CondMode::kNone;
        CHECK((model.conditioning_param_count() > 0) == has_cond);
    }
}

TEST_CASE("conditioning parameter totals follow the per-layer formulas") {
    const NetworkConfig cfg = tiny_net();  // cond layers 2,4 at reg_channels, 6 at one channel
    const int nb = cfg.bins(), nd = cfg.n_disp_vol(), c = cfg.reg_channels;

    Model cat(cfg, Variant::kCcvnormCat, 1);
    CHECK(cat.conditioning_param_count() ==
          2 * categorical_params_per_layer(nb, nd, c) + categorical_params_per_layer(nb, nd, 1));

    Model hier(cfg, Variant::kHierCcvnorm, 1);
    CHECK(hier.conditioning_param_count() ==
          2 * hier_params_per_layer(nb, nd, c) + hier_params_per_layer(nb, nd, 1));

    Model cont(cfg, Variant::kCcvnormCont, 1);
    const int64_t trunk = static_cast<int64_t>(cfg.embed) * 2 * 3 * 3 + cfg.embed +
                          static_cast<int64_t>(cfg.embed) * cfg.embed * 3 * 3 + cfg.embed;
    const auto head = [&](int ch) {
        return static_cast<int64_t>(2 * nd * ch) * cfg.embed + 2 * nd * ch;
    };
    CHECK(cont.conditioning_param_count() == trunk + 2 * head(c) + head(1));
}

TEST_CASE("the sparse input only reaches variants that consume it") {
    SceneConfig sc = tiny_scene();
    const StereoSample sample = gen_scene(sc, 31);
    StereoSample blank = sample;
    blank.lidar_left = SparseDisparityMap(sc.height, sc.width);
    blank.lidar_right = SparseDisparityMap(sc.height, sc.width);
    REQUIRE(sample.lidar_left.valid_count() > 0);

    Model none(tiny_net(), Variant::kNone, 4);
    CHECK(none.forward(sample, false).values == none.forward(blank, false).values);

    for (const auto v : {Variant::kInputFusionOnly, Variant::kFeatureConcat, Variant::kNaiveCbn,
                         Variant::kCcvnormCat, Variant::kCcvnormCont, Variant::kHierCcvnorm}) {
        CAPTURE(variant_name(v));
        Model model(tiny_net(), v, 4);
        CHECK(model.forward(sample, false).values != model.forward(blank, false).values);
    }
}

TEST_CASE("an all-invalid map erases the valid-branch tables from the output") {
    SceneConfig sc = tiny_scene();
    StereoSample sample = gen_scene(sc, 32);
    sample.lidar_left = SparseDisparityMap(sc.height, sc.width);
    sample.lidar_right = SparseDisparityMap(sc.height, sc.width);

    const std::vector<std::string> valid_branch = {
        ".gamma_table", ".beta_table", ".g_table", ".h_table",
        ".phi_g",       ".psi_g",      ".phi_h",   ".psi_h"};
    for (const auto v : {Variant::kCcvnormCat, Variant::kHierCcvnorm}) {
        CAPTURE(variant_name(v));
        Model a(tiny_net(), v, 8);
        Model b(tiny_net(), v, 8);
        int scrambled = 0;
        for (ParamRef& p : b.named_parameters()) {
            for (const std::string& suffix : valid_branch) {
                if (p.name.size() > suffix.size() &&
                    p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
                    for (double& x : p.tensor->values) x = x * 3.0 + 11.0;
                    ++scrambled;
                }
            }
        }
        REQUIRE(scrambled >= 6);
        const Tensor ya = a.forward(sample, false);
        const Tensor yb = b.forward(sample, false);
        CHECK(ya.values == yb.values);
        // the same scramble must show once measurements exist
        const StereoSample with_lidar = gen_scene(sc, 32);
        CHECK(a.forward(with_lidar, false).values != b.forward(with_lidar, false).values);
    }
}

TEST_CASE("backward before any forward is rejected") {
    Model model(tiny_net(), Variant::kNone, 2);
    Tensor g({8, 16}, 1.0);
    CHECK_THROWS_AS(model.backward(g), ConfigError);
}

TEST_CASE("end-to-end parameter gradients pass finite differences") {
    const StereoSample sample = gen_scene(tiny_scene(), 33);
    const Tensor r = random_projection({8, 16}, 40);

    const std::vector<std::pair<Variant, std::vector<std::string>>> plan = {
        {Variant::kCcvnormCat,
         {"features.block0.weight", "reg.block1.weight", "ccvnorm.layer2.gamma_table",
          "ccvnorm.layer2.beta_invalid"}},
        {Variant::kIfHierCcvnorm,
         {"features.block3.weight", "ccvnorm.layer4.g_table", "ccvnorm.layer4.phi_g",
          "reg.block6.weight"}},
        {Variant::kCcvnormCont,
         {"ccvnorm.trunk.conv1.weight", "ccvnorm.layer2.head_weight",
          "ccvnorm.layer2.head_bias"}},
        {Variant::kIfNaiveCbn, {"ccvnorm.layer2.mlp_w1", "ccvnorm.layer2.mlp_w2"}},
        {Variant::kFeatureConcat, {"feature_concat.trunk.conv1.weight", "reg.block3.weight"}},
    };

    for (const auto& [variant, names] : plan) {
        CAPTURE(variant_name(variant));
        Model model(tiny_net(), variant, 9);

        model.zero_grad();
        const Tensor y = model.forward(sample, true);
        Tensor g = Tensor::zeros_like(y);
        for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = r.values[i];
        model.backward(g);

        for (const std::string& name : names) {
            CAPTURE(name);
            Tensor* p = find_param(model, name);
            REQUIRE(p != nullptr);
            const Tensor x0 = *p;
            REQUIRE(p->grad.size() == p->values.size());
            Tensor analytic(x0.shape());
            analytic.values = p->grad;

            const auto f = [&](const Tensor& t) {
                p->values = t.values;
                const Tensor out = model.forward(sample, true);
                p->values = x0.values;
                return project(out, r);
            };
            const GradCheckResult res = gradient_check(f, x0, analytic, 1e-5, 1e-4, 8, 77);
            CAPTURE(res.max_rel_err);
            CHECK(res.ok());
        }
    }
}
