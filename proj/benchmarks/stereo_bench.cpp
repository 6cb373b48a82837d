// Microbenchmarks for the hot kernels and for one full forward per variant.
#include <benchmark/benchmark.h>

#include "fusion_stereo/conditioning.hpp"
#include "fusion_stereo/cost_volume.hpp"
#include "fusion_stereo/network.hpp"
#include "fusion_stereo/ops.hpp"
#include "fusion_stereo/rng.hpp"
#include "fusion_stereo/scene.hpp"

using namespace fstereo;

namespace {

Tensor randn(const std::vector<int>& shape, uint64_t seed) {
    Tensor t(shape);
    Rng rng(seed);
    fill_gaussian(t, rng, 0.0, 1.0);
    return t;
}

NetworkConfig bench_net() {
    NetworkConfig cfg;
    cfg.channels = 8;
    cfg.reg_channels = 8;
    cfg.d_max = 16;
    cfg.downsample = 2;
    cfg.embed = 4;
    cfg.cbn_hidden = 4;
    cfg.concat_channels = 4;
    return cfg;
}

SceneConfig bench_scene() {
    SceneConfig cfg;
    cfg.width = 64;
    cfg.height = 32;
    cfg.d_max = 16;
    cfg.lidar_coverage = 0.3;
    cfg.lidar_noise = 0.0;
    return cfg;
}

void bm_conv2d(benchmark::State& state) {
    const Tensor in = randn({8, 32, 64}, 1);
    const Tensor w = randn({8, 8, 3, 3}, 2);
    const Tensor b = randn({8}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, w, b, 1, 1));
}
BENCHMARK(bm_conv2d);

void bm_conv3d(benchmark::State& state) {
    const Tensor in = randn({8, 16, 32, 8}, 4);
    const Tensor w = randn({8, 8, 3, 3, 3}, 5);
    const Tensor none;
    for (auto _ : state) benchmark::DoNotOptimize(conv3d(in, w, none, 1, 1));
}
BENCHMARK(bm_conv3d);

void bm_cost_volume(benchmark::State& state) {
    const Tensor fl = randn({8, 16, 32}, 6);
    const Tensor fr = randn({8, 16, 32}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(build_cost_volume(fl, fr, 8));
}
BENCHMARK(bm_cost_volume);

void bm_soft_argmin(benchmark::State& state) {
    const Tensor cost = randn({1, 32, 64, 16}, 8);
    for (auto _ : state) benchmark::DoNotOptimize(soft_argmin(cost, 1.0));
}
BENCHMARK(bm_soft_argmin);

void bm_upsample(benchmark::State& state) {
    const Tensor vol = randn({1, 16, 32, 8}, 9);
    for (auto _ : state) benchmark::DoNotOptimize(upsample_trilinear(vol, 32, 64, 16));
}
BENCHMARK(bm_upsample);

void bm_hier_fields(benchmark::State& state) {
    SparseDisparityMap lidar(16, 32);
    Rng rng(10);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x)
            if (rng.uniform() < 0.3) lidar.set(y, x, rng.uniform(0.0, 8.0));
    const Tensor g = randn({16, 8}, 11), h = randn({16, 8}, 12);
    const Tensor pg = randn({8, 8}, 13), sg = randn({8, 8}, 14);
    const Tensor ph = randn({8, 8}, 15), sh = randn({8, 8}, 16);
    const Tensor gi = randn({8, 8}, 17), bi = randn({8, 8}, 18);
    for (auto _ : state)
        benchmark::DoNotOptimize(hier_fields(lidar, 8.0, g, h, pg, sg, ph, sh, gi, bi));
}
BENCHMARK(bm_hier_fields);

void bm_forward(benchmark::State& state, const char* variant) {
    const StereoSample sample = gen_scene(bench_scene(), 42);
    Model model(bench_net(), parse_variant(variant), 0);
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(sample, false));
}
BENCHMARK_CAPTURE(bm_forward, none, "none");
BENCHMARK_CAPTURE(bm_forward, input_fusion_only, "input_fusion_only");
BENCHMARK_CAPTURE(bm_forward, feature_concat, "feature_concat");
BENCHMARK_CAPTURE(bm_forward, naive_cbn, "naive_cbn");
BENCHMARK_CAPTURE(bm_forward, ccvnorm_cat, "ccvnorm_cat");
BENCHMARK_CAPTURE(bm_forward, ccvnorm_cont, "ccvnorm_cont");
BENCHMARK_CAPTURE(bm_forward, hier_ccvnorm, "hier_ccvnorm");
BENCHMARK_CAPTURE(bm_forward, if_hier_ccvnorm, "if_hier_ccvnorm");

}  // namespace

BENCHMARK_MAIN();
