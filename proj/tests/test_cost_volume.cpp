#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fusion_stereo/cost_volume.hpp"
#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/grad_check.hpp"
#include "fusion_stereo/ops.hpp"
#include "fusion_stereo/rng.hpp"
#include "oracles.hpp"

using namespace fstereo;

namespace {
Tensor randn(std::vector<int> shape, uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    fill_gaussian(t, rng, 0.0, 1.0);
    return t;
}
}  // namespace

TEST_CASE("cost volume matches the oracle bitwise") {
    for (uint64_t seed = 0; seed < 4; ++seed) {
        const Tensor fl = randn({3, 4, 7}, mix_seed(seed, 1));
        const Tensor fr = randn({3, 4, 7}, mix_seed(seed, 2));
        const Tensor vol = build_cost_volume(fl, fr, 5);
        const Tensor ref = oracle::cost_volume(fl, fr, 5);
        REQUIRE(vol.shape() == ref.shape());
        CHECK(vol.values == ref.values);
    }
}

TEST_CASE("cost volume zero fills columns left of the shift") {
    const Tensor fl = randn({2, 3, 6}, 10);
    const Tensor fr = randn({2, 3, 6}, 11);
    const Tensor vol = build_cost_volume(fl, fr, 4);
    for (int c = 2; c < 4; ++c)  // right-feature half
        for (int y = 0; y < 3; ++y)
            for (int d = 0; d < 4; ++d)
                for (int x = 0; x < d; ++x) CHECK(vol.at({c, y, x, d}) == 0.0);
    // left half replicates the left features at every disparity
    for (int d = 0; d < 4; ++d) CHECK(vol.at({1, 2, 0, d}) == fl.at({1, 2, 0}));
}

TEST_CASE("cost volume rejects a disparity range wider than the image") {
    const Tensor fl = randn({1, 2, 3}, 12);
    CHECK_THROWS_AS(build_cost_volume(fl, fl, 4), ShapeError);
    CHECK_THROWS_AS(build_cost_volume(fl, randn({1, 2, 4}, 13), 2), ShapeError);
}

TEST_CASE("cost volume backward routes gradients to both sides") {
    const Tensor fl = randn({2, 3, 5}, 20);
    const Tensor fr = randn({2, 3, 5}, 21);
    const Tensor r = random_projection({4, 3, 5, 3}, 22);

    Tensor gl, gr;
    cost_volume_backward(r, gl, gr);

    const auto f_l = [&](const Tensor& t) { return project(build_cost_volume(t, fr, 3), r); };
    const auto f_r = [&](const Tensor& t) { return project(build_cost_volume(fl, t, 3), r); };
    CHECK(gradient_check(f_l, fl, gl).ok());
    CHECK(gradient_check(f_r, fr, gr).ok());
}

TEST_CASE("soft_argmin matches the oracle") {
    for (uint64_t seed = 0; seed < 4; ++seed) {
        const Tensor cost = randn({1, 3, 4, 6}, mix_seed(seed, 3));
        const Tensor y = soft_argmin(cost, 2.0);
        const Tensor ref = oracle::soft_argmin(cost, 2.0);
        REQUIRE(y.shape() == std::vector<int>{3, 4});
        for (size_t i = 0; i < y.values.size(); ++i)
            CHECK(y.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("soft_argmin of a flat volume is the midpoint") {
    const Tensor cost({1, 2, 2, 5}, 1.25);
    const Tensor y = soft_argmin(cost, 1.0);
    for (double v : y.values) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("soft_argmin approaches the hard argmin for a peaked volume") {
    Tensor cost({1, 1, 1, 6}, 50.0);
    cost.at({0, 0, 0, 4}) = 0.0;
    const Tensor y = soft_argmin(cost, 1.0);
    CHECK(y.values[0] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("d_scale rescales the regression target") {
    const Tensor cost = randn({1, 2, 3, 4}, 30);
    const Tensor y1 = soft_argmin(cost, 1.0);
    const Tensor y2 = soft_argmin(cost, 2.0);
    for (size_t i = 0; i < y1.values.size(); ++i)
        CHECK(y2.values[i] == doctest::Approx(2.0 * y1.values[i]).epsilon(1e-12));
}

TEST_CASE("soft_argmin backward matches finite differences and the closed form") {
    const Tensor cost = randn({1, 3, 3, 5}, 31);
    const Tensor r = random_projection({3, 3}, 32);
    const Tensor g = soft_argmin_backward(cost, 2.0, r);

    const auto f = [&](const Tensor& t) { return project(soft_argmin(t, 2.0), r); };
    CHECK(gradient_check(f, cost, g).ok());

    // dy/dc_e = d_scale * w_e * (ybar - e) * d(loss)/dy, spot checked by hand
    const int y = 1, x = 2;
    std::vector<double> slice(5);
    for (int d = 0; d < 5; ++d) slice[static_cast<size_t>(d)] = cost.at({0, y, x, d});
    const std::vector<double> w = softmax_neg(slice);
    double ybar = 0.0;
    for (int d = 0; d < 5; ++d) ybar += d * w[static_cast<size_t>(d)];
    const double go = r.at({y, x});
    for (int d = 0; d < 5; ++d) {
        const double expect = go * 2.0 * w[static_cast<size_t>(d)] * (ybar - d);
        CHECK(g.at({0, y, x, d}) == doctest::Approx(expect).epsilon(1e-12));
    }
}
