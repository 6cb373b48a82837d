#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fusion_stereo/dataset.hpp"
#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/metrics.hpp"
#include "fusion_stereo/png_io.hpp"
#include "fusion_stereo/scene.hpp"
#include "oracles.hpp"

using namespace fstereo;
namespace fs = std::filesystem;

namespace {

SceneConfig hand_cfg() {
    SceneConfig cfg;
    cfg.width = 16;
    cfg.height = 8;
    cfg.d_max = 8;
    cfg.d_lo = 1.0;  // d_hi resolves to 6
    cfg.lidar_coverage = 0.5;
    cfg.lidar_noise = 0.0;
    return cfg;
}

ScenePlane gradient_plane(double x0, double x1, double y0, double y1, double disp,
                          const double g0[3], const double gx[3], const double gy[3]) {
    ScenePlane p;
    p.x0 = x0;
    p.x1 = x1;
    p.y0 = y0;
    p.y1 = y1;
    p.xc = (x0 + x1) / 2.0;
    p.yc = (y0 + y1) / 2.0;
    p.a = disp;
    p.texture_kind = 2;
    for (int c = 0; c < 3; ++c) {
        p.g0[c] = g0[c];
        p.gx[c] = gx[c];
        p.gy[c] = gy[c];
    }
    return p;
}

double grad_at(const ScenePlane& p, int c, double x, int y) {
    const double v = p.g0[c] + p.gx[c] * (x - p.xc) + p.gy[c] * (static_cast<double>(y) - p.yc);
    return std::clamp(v, 0.0, 1.0);
}

// background at disparity 2 plus a floating rectangle [8,12)x[2,6) at 5
std::vector<ScenePlane> hand_planes() {
    const double bg0[3] = {0.5, 0.4, 0.6};
    const double bgx[3] = {0.01, -0.008, 0.005};
    const double bgy[3] = {0.004, 0.006, -0.005};
    const double rg0[3] = {0.9, 0.2, 0.3};
    const double rgx[3] = {-0.01, 0.01, 0.0};
    const double rgy[3] = {0.0, -0.01, 0.01};
    return {gradient_plane(0.0, 24.0, 0.0, 8.0, 2.0, bg0, bgx, bgy),
            gradient_plane(8.0, 12.0, 2.0, 6.0, 5.0, rg0, rgx, rgy)};
}

bool in_rect(int x, int y) { return x >= 8 && x < 12 && y >= 2 && y < 6; }
// background pixels whose right-view match column is claimed by the rectangle
bool in_shadow(int x, int y) { return y >= 2 && y < 6 && x >= 5 && x < 8; }

fs::path fresh_dir(const char* stem) {
    fs::path dir = fs::temp_directory_path() /
                   (std::string("fstereo_data_") + stem + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

double img_at(const Tensor& img, int c, int y, int x) { return img.at({c, y, x}); }

}  // namespace

TEST_CASE("scene config validation") {
    CHECK_NOTHROW(hand_cfg().validate());
    SceneConfig c = hand_cfg();
    c.width = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.d_lo = 7.0;  // >= resolved d_hi
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.d_hi = 20.0;  // disparity range beyond the image width
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.texture = "plaid";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.lidar_coverage = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.lidar_noise = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = hand_cfg();
    c.baseline_m = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("hand-built planes render geometrically consistent views") {
    const SceneConfig cfg = hand_cfg();
    const std::vector<ScenePlane> planes = hand_planes();
    Rng lidar_rng(901);
    const StereoSample s = render_scene(planes, cfg, lidar_rng);

    SUBCASE("ground truth takes the nearer plane and masks both occlusion kinds") {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 16; ++x) {
                CAPTURE(x);
                CAPTURE(y);
                if (in_rect(x, y)) {
                    REQUIRE(s.gt.is_valid(y, x));
                    CHECK(s.gt.at(y, x) == 5.0);
                } else if (x < 2) {
                    CHECK_FALSE(s.gt.is_valid(y, x));  // match column left of frame
                } else if (in_shadow(x, y)) {
                    CHECK_FALSE(s.gt.is_valid(y, x));  // rectangle hides it on the right
                } else {
                    REQUIRE(s.gt.is_valid(y, x));
                    CHECK(s.gt.at(y, x) == 2.0);
                }
            }
        }
    }

    SUBCASE("left view paints the front plane's texture") {
        CHECK(img_at(s.left, 0, 1, 4) == grad_at(planes[0], 0, 4.0, 1));
        CHECK(img_at(s.left, 2, 3, 9) == grad_at(planes[1], 2, 9.0, 3));
        CHECK(img_at(s.left, 1, 7, 15) == grad_at(planes[0], 1, 15.0, 7));
    }

    SUBCASE("right view resolves the per-row match equation") {
        for (int y = 0; y < 8; ++y) {
            for (int u = 0; u < 16; ++u) {
                const bool rect_claims = y >= 2 && y < 6 && u >= 3 && u < 7;
                for (int c = 0; c < 3; ++c) {
                    const double expect =
                        rect_claims ? grad_at(planes[1], c, static_cast<double>(u) + 5.0, y)
                                    : grad_at(planes[0], c, static_cast<double>(u) + 2.0, y);
                    CHECK(img_at(s.right, c, y, u) == expect);
                }
            }
        }
    }

    SUBCASE("every ground-truth pixel has an exact photometric match") {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 16; ++x) {
                if (!s.gt.is_valid(y, x)) continue;
                const int u = x - static_cast<int>(s.gt.at(y, x));
                REQUIRE(u >= 0);
                for (int c = 0; c < 3; ++c) CHECK(img_at(s.right, c, y, u) == img_at(s.left, c, y, x));
            }
        }
    }

    SUBCASE("noise-free lidar samples the true surface, occluded pixels included") {
        CHECK(s.lidar_left.valid_count() == 64);  // exactly coverage * pixels
        bool hit_gt_invalid = false;
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 16; ++x) {
                if (!s.lidar_left.is_valid(y, x)) continue;
                const double expect = in_rect(x, y) ? 5.0 : 2.0;
                CHECK(s.lidar_left.at(y, x) == expect);
                if (!s.gt.is_valid(y, x)) hit_gt_invalid = true;
            }
        }
        CHECK(hit_gt_invalid);
    }

    SUBCASE("the right sparse map is the left one shifted by its own values") {
        const SparseDisparityMap shifted = shift_to_right_view(s.lidar_left);
        CHECK(s.lidar_right.valid == shifted.valid);
        CHECK(s.lidar_right.disparity == shifted.disparity);
    }

    SUBCASE("calibration mirrors the scene geometry") {
        CHECK(s.calib.focal_px == cfg.focal_px);
        CHECK(s.calib.baseline_m == cfg.baseline_m);
        CHECK(s.calib.width == 16);
        CHECK(s.calib.height == 8);
        CHECK(s.calib.cx == 8.0);
        CHECK(s.calib.cy == 4.0);
    }
}

TEST_CASE("lidar noise perturbs but never goes negative") {
    SceneConfig cfg = hand_cfg();
    cfg.lidar_coverage = 1.0;
    cfg.lidar_noise = 3.0;
    Rng rng(77);
    const StereoSample s = render_scene(hand_planes(), cfg, rng);
    bool any_moved = false;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) {
            REQUIRE(s.lidar_left.is_valid(y, x));
            const double v = s.lidar_left.at(y, x);
            CHECK(v >= 0.0);
            if (v != (in_rect(x, y) ? 5.0 : 2.0)) any_moved = true;
        }
    CHECK(any_moved);
}

TEST_CASE("generated scenes are deterministic and stay inside the disparity range") {
    const SceneConfig cfg;  // defaults: 64x32, d_max 16
    const StereoSample a = gen_scene(cfg, 5);
    const StereoSample b = gen_scene(cfg, 5);
    CHECK(a.left.values == b.left.values);
    CHECK(a.right.values == b.right.values);
    CHECK(a.gt.disparity == b.gt.disparity);
    CHECK(a.gt.valid == b.gt.valid);
    CHECK(a.lidar_left.valid == b.lidar_left.valid);

    const StereoSample c = gen_scene(cfg, 6);
    CHECK(a.left.values != c.left.values);

    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const StereoSample s = gen_scene(cfg, seed);
        for (double v : s.left.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 64; ++x)
                if (s.gt.is_valid(y, x)) {
                    CHECK(s.gt.at(y, x) >= cfg.d_lo - 1e-9);
                    CHECK(s.gt.at(y, x) <= cfg.disp_hi() + 1e-9);
                }
        CHECK(s.gt.density() > 0.5);  // occlusions cannot erase most of the scene
    }
}

TEST_CASE("16-bit maps round trip on the 1/256 grid and encode invalid as zero") {
    const fs::path dir = fresh_dir("png16");
    SparseDisparityMap m(3, 4);
    m.set(0, 0, 1.0 / 256.0);          // smallest representable measurement
    m.set(0, 2, 3.0 + 5.0 / 256.0);
    m.set(1, 1, 65535.0 / 256.0);      // largest representable
    m.set(2, 3, 17.25);
    const std::string path = (dir / "m.png").string();
    write_depth_png(path, m);
    const SparseDisparityMap r = read_depth_png(path);
    CHECK(r.valid == m.valid);
    CHECK(r.disparity == m.disparity);

    SUBCASE("off-grid and out-of-range values clamp on write") {
        SparseDisparityMap bad(1, 3);
        bad.set(0, 0, 0.0);     // valid zero collides with the invalid code; clamps to 1/256
        bad.set(0, 1, 1000.0);  // beyond the 16-bit range
        bad.set(0, 2, 0.5 + 1.0 / 1024.0);  // off grid, rounds to nearest step
        const std::string p2 = (dir / "clamp.png").string();
        write_depth_png(p2, bad);
        const SparseDisparityMap rb = read_depth_png(p2);
        CHECK(rb.is_valid(0, 0));
        CHECK(rb.at(0, 0) == 1.0 / 256.0);
        CHECK(rb.at(0, 1) == 65535.0 / 256.0);
        CHECK(rb.at(0, 2) == std::lround((0.5 + 1.0 / 1024.0) * 256.0) / 256.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("rgb images round trip on the 1/255 grid") {
    const fs::path dir = fresh_dir("png8");
    Tensor img({3, 2, 3});
    for (size_t i = 0; i < img.values.size(); ++i)
        img.values[i] = static_cast<double>((i * 37) % 256) / 255.0;
    const std::string path = (dir / "img.png").string();
    write_rgb8_png(path, img);
    const Tensor r = read_rgb8_png(path);
    REQUIRE(r.shape() == img.shape());
    CHECK(r.values == img.values);

    Tensor wrong({2, 2, 3});
    CHECK_THROWS_AS(write_rgb8_png((dir / "bad.png").string(), wrong), ShapeError);
    CHECK_THROWS_AS(read_rgb8_png((dir / "missing.png").string()), DataError);
    CHECK_THROWS_AS(read_depth_png(path), DataError);  // 8-bit color is not a depth map

    SUBCASE("out-of-range values clamp") {
        Tensor hot({3, 1, 1});
        hot.values = {-0.5, 0.5, 1.5};
        const std::string p2 = (dir / "hot.png").string();
        write_rgb8_png(p2, hot);
        const Tensor rr = read_rgb8_png(p2);
        CHECK(rr.values[0] == 0.0);
        CHECK(rr.values[1] == doctest::Approx(0.5).epsilon(1.0 / 255.0));
        CHECK(rr.values[2] == 1.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("gray previews map the requested range onto 8 bits") {
    const fs::path dir = fresh_dir("gray");
    Tensor img({2, 2});
    img.values = {0.0, 4.0, 8.0, 12.0};
    const std::string path = (dir / "g.png").string();
    write_gray8_png(path, img, 0.0, 8.0);
    const Tensor r = read_rgb8_png(path);  // grayscale expands to rgb
    CHECK(r.at({0, 0, 0}) == 0.0);
    CHECK(r.at({0, 0, 1}) == 128.0 / 255.0);  // lround(0.5*255)
    CHECK(r.at({0, 1, 0}) == 1.0);
    CHECK(r.at({0, 1, 1}) == 1.0);  // clamped above hi
    CHECK(r.at({1, 1, 0}) == r.at({0, 1, 0}));
    CHECK_THROWS_AS(write_gray8_png((dir / "b.png").string(), img, 1.0, 1.0), ConfigError);
    Tensor threed({1, 2, 2});
    CHECK_THROWS_AS(write_gray8_png((dir / "c.png").string(), threed, 0.0, 1.0), ShapeError);
    fs::remove_all(dir);
}

TEST_CASE("manifest loading reassembles the sample from files") {
    const fs::path dir = fresh_dir("manifest");
    const SceneConfig cfg = hand_cfg();
    Rng rng(31);
    const StereoSample src = render_scene(hand_planes(), cfg, rng);

    write_rgb8_png((dir / "left.png").string(), src.left);
    write_rgb8_png((dir / "right.png").string(), src.right);
    write_depth_png((dir / "lidar_disp.png").string(), src.lidar_left);
    // ground truth stored in metres: disparities 2 and 5 give exact depths
    write_depth_png((dir / "gt.png").string(), disparity_map_to_depth(src.gt, src.calib));
    write_calibration((dir / "calib.txt").string(), src.calib);
    {
        std::ofstream mf(dir / "list.txt");
        mf << "# stereo pairs\n";
        mf << "\n";
        mf << "left.png right.png lidar_disp.png gt.png calib.txt\n";
    }

    const std::vector<ManifestEntry> entries = read_manifest((dir / "list.txt").string());
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].left == (dir / "left.png").string());

    const StereoSample s = load_manifest_sample(entries[0], 0);
    const auto quantize = [](double v) {
        return static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    };
    for (size_t i = 0; i < src.left.values.size(); ++i) {
        CHECK(s.left.values[i] == quantize(src.left.values[i]));
        CHECK(s.right.values[i] == quantize(src.right.values[i]));
    }
    CHECK(s.lidar_left.valid == src.lidar_left.valid);
    CHECK(s.lidar_left.disparity == src.lidar_left.disparity);  // 2 and 5 sit on the grid
    CHECK(s.gt.valid == src.gt.valid);
    CHECK(s.gt.disparity == src.gt.disparity);
    const SparseDisparityMap shifted = shift_to_right_view(s.lidar_left);
    CHECK(s.lidar_right.valid == shifted.valid);
    CHECK(s.calib.focal_px == src.calib.focal_px);
    CHECK(s.calib.width == 16);

    SUBCASE("a bottom crop keeps the last rows and moves the principal point") {
        const StereoSample c = load_manifest_sample(entries[0], 4);
        CHECK(c.left.shape() == std::vector<int>{3, 4, 16});
        CHECK(c.calib.height == 4);
        CHECK(c.calib.cy == src.calib.cy - 4.0);
        CHECK(c.calib.cx == src.calib.cx);
        for (int x = 0; x < 16; ++x) {
            CHECK(c.left.at({0, 0, x}) == s.left.at({0, 4, x}));
            CHECK(c.gt.is_valid(0, x) == s.gt.is_valid(4, x));
        }
    }

    SUBCASE("the ground-truth density guard rejects sparse crops when enabled") {
        SparseDisparityMap sparse_gt(8, 16);
        sparse_gt.set(0, 0, 2.0);
        sparse_gt.set(4, 4, 3.0);
        write_depth_png((dir / "gt_sparse_disp.png").string(), sparse_gt);
        ManifestEntry e = entries[0];
        e.gt = (dir / "gt_sparse_disp.png").string();
        CHECK_NOTHROW(load_manifest_sample(e, 0));
        ::setenv("FUSION_STEREO_CHECK_GT_DENSITY", "1", 1);
        CHECK_THROWS_AS(load_manifest_sample(e, 0), DataError);
        CHECK_NOTHROW(load_manifest_sample(entries[0], 0));  // dense gt still loads
        ::unsetenv("FUSION_STEREO_CHECK_GT_DENSITY");
    }

    SUBCASE("dimension mismatches are rejected") {
        CameraCalibration wrong = src.calib;
        wrong.width = 32;
        write_calibration((dir / "calib_wrong.txt").string(), wrong);
        ManifestEntry e = entries[0];
        e.calib = (dir / "calib_wrong.txt").string();
        CHECK_THROWS_AS(load_manifest_sample(e, 0), DataError);
    }
    fs::remove_all(dir);
}

TEST_CASE("malformed manifests fail with the offending line") {
    const fs::path dir = fresh_dir("badmanifest");
    {
        std::ofstream mf(dir / "four.txt");
        mf << "a.png b.png c.png d.png\n";
    }
    CHECK_THROWS_AS(read_manifest((dir / "four.txt").string()), DataError);
    {
        std::ofstream mf(dir / "six.txt");
        mf << "a b c d e f\n";
    }
    CHECK_THROWS_AS(read_manifest((dir / "six.txt").string()), DataError);
    {
        std::ofstream mf(dir / "empty.txt");
        mf << "# nothing\n\n";
    }
    CHECK_THROWS_AS(read_manifest((dir / "empty.txt").string()), DataError);
    CHECK_THROWS_AS(read_manifest((dir / "missing.txt").string()), DataError);
    fs::remove_all(dir);
}

TEST_CASE("crop_sample adjusts content and calibration together") {
    const SceneConfig cfg = hand_cfg();
    Rng rng(41);
    const StereoSample s = render_scene(hand_planes(), cfg, rng);

    const StereoSample c = crop_sample(s, 1, 2, 4, 6);
    REQUIRE(c.left.shape() == std::vector<int>{3, 4, 6});
    CHECK(c.left.at({1, 0, 0}) == s.left.at({1, 1, 2}));
    CHECK(c.right.at({2, 3, 5}) == s.right.at({2, 4, 7}));
    CHECK(c.gt.is_valid(2, 3) == s.gt.is_valid(3, 5));
    if (s.gt.is_valid(3, 5)) CHECK(c.gt.at(2, 3) == s.gt.at(3, 5));
    CHECK(c.lidar_left.is_valid(0, 0) == s.lidar_left.is_valid(1, 2));
    CHECK(c.calib.cx == s.calib.cx - 2.0);
    CHECK(c.calib.cy == s.calib.cy - 1.0);
    CHECK(c.calib.width == 6);
    CHECK(c.calib.height == 4);

    CHECK_THROWS_AS(crop_sample(s, 6, 0, 4, 6), ConfigError);   // runs past the bottom
    CHECK_THROWS_AS(crop_sample(s, 0, 12, 4, 6), ConfigError);  // runs past the right edge
    CHECK_THROWS_AS(crop_sample(s, -1, 0, 4, 6), ConfigError);

    Rng ra(7), rb(7);
    const StereoSample r1 = random_crop(s, 4, 6, ra);
    const StereoSample r2 = random_crop(s, 4, 6, rb);
    CHECK(r1.left.values == r2.left.values);
    CHECK(r1.calib.cx == r2.calib.cx);
    const StereoSample full = random_crop(s, 8, 16, ra);
    CHECK(full.left.values == s.left.values);
    CHECK_THROWS_AS(random_crop(s, 9, 16, ra), ConfigError);
}

TEST_CASE("data sources cache their samples") {
    SceneConfig cfg = hand_cfg();
    SyntheticDataSource src(cfg, 3, 11);
    CHECK(src.size() == 3);
    const StereoSample& a = src.get(1);
    const StereoSample& b = src.get(1);
    CHECK(&a == &b);
    const StereoSample direct = gen_scene(cfg, mix_seed(11, 1));
    CHECK(a.left.values == direct.left.values);
    CHECK(src.get(0).left.values != src.get(2).left.values);
    CHECK_THROWS_AS(src.get(3), ConfigError);
    CHECK_THROWS_AS(src.get(-1), ConfigError);
    CHECK_THROWS_AS(SyntheticDataSource(cfg, 0, 1), ConfigError);
}

TEST_CASE("metric suite matches the oracle and uses strict thresholds") {
    const SceneConfig cfg = hand_cfg();
    Rng rng(55);
    const StereoSample s = render_scene(hand_planes(), cfg, rng);
    Tensor pred({8, 16});
    Rng prng(56);
    for (size_t i = 0; i < pred.values.size(); ++i)
        pred.values[i] = prng.uniform(0.0, 8.0);

    const std::vector<MetricValue> got = compute_metrics(pred, s.gt, s.calib);
    const oracle::Metrics want = oracle::metrics(pred, s.gt, s.calib);
    REQUIRE(got.size() == 9);
    // outlier fractions are exact integer counts over the same denominator
    CHECK(metric_value(got, "err_gt_1px") == want.err1);
    CHECK(metric_value(got, "err_gt_2px") == want.err2);
    CHECK(metric_value(got, "err_gt_3px") == want.err3);
    CHECK(metric_value(got, "rmse_px") == doctest::Approx(want.rmse_px).epsilon(1e-12));
    CHECK(metric_value(got, "mae_px") == doctest::Approx(want.mae_px).epsilon(1e-12));
    CHECK(metric_value(got, "rmse_m") == doctest::Approx(want.rmse_m).epsilon(1e-12));
    CHECK(metric_value(got, "mae_m") == doctest::Approx(want.mae_m).epsilon(1e-12));
    CHECK(metric_value(got, "irmse_km") == doctest::Approx(want.irmse_km).epsilon(1e-12));
    CHECK(metric_value(got, "imae_km") == doctest::Approx(want.imae_km).epsilon(1e-12));
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i].name == metric_names()[i]);

    SUBCASE("errors exactly at the threshold do not count") {
        SparseDisparityMap gt(1, 4);
        for (int x = 0; x < 4; ++x) gt.set(0, x, 4.0);
        Tensor p({1, 4});
        p.values = {5.0, 6.0, 7.0, 4.0};  // errors 1, 2, 3, 0
        const auto m = compute_metrics(p, gt, s.calib);
        CHECK(metric_value(m, "err_gt_1px") == 0.5);   // only 2 and 3 exceed 1
        CHECK(metric_value(m, "err_gt_2px") == 0.25);  // only 3 exceeds 2
        CHECK(metric_value(m, "err_gt_3px") == 0.0);
        CHECK(metric_value(m, "mae_px") == 1.5);
    }

    SUBCASE("tiny and zero disparities use the depth clamp") {
        SparseDisparityMap gt(1, 1);
        gt.set(0, 0, 0.0);
        Tensor p({1, 1});
        p.values = {0.0};
        const auto m = compute_metrics(p, gt, s.calib);
        CHECK(metric_value(m, "rmse_m") == 0.0);  // both depths clamp identically
        CHECK(std::isfinite(metric_value(m, "mae_m")));
    }

    SUBCASE("an empty ground truth cannot be scored") {
        SparseDisparityMap gt(2, 2);
        Tensor p({2, 2});
        CHECK_THROWS_AS(compute_metrics(p, gt, s.calib), ConfigError);
    }

    SUBCASE("shape mismatches are rejected") {
        Tensor p({4, 4});
        CHECK_THROWS_AS(compute_metrics(p, s.gt, s.calib), ShapeError);
    }
}

TEST_CASE("metric helpers") {
    std::vector<MetricValue> a = {{"m1", 1.0}, {"m2", 3.0}};
    std::vector<MetricValue> b = {{"m1", 3.0}, {"m2", 5.0}};
    const auto avg = average_metrics({a, b});
    CHECK(avg[0].name == "m1");
    CHECK(avg[0].value == 2.0);
    CHECK(avg[1].value == 4.0);
    CHECK_THROWS_AS(average_metrics({}), ConfigError);
    std::vector<MetricValue> swapped = {{"m2", 0.0}, {"m1", 0.0}};
    CHECK_THROWS_AS(average_metrics({a, swapped}), ConfigError);
    std::vector<MetricValue> shorter = {{"m1", 0.0}};
    CHECK_THROWS_AS(average_metrics({a, shorter}), ConfigError);
    CHECK_THROWS_AS(metric_value(a, "nope"), ConfigError);
}

TEST_CASE("sparse_to_target builds a dense target and a 0/1 mask") {
    SparseDisparityMap gt(2, 3);
    gt.set(0, 1, 4.5);
    gt.set(1, 2, 2.0);
    Tensor target, mask;
    sparse_to_target(gt, target, mask);
    REQUIRE(target.shape() == std::vector<int>{2, 3});
    REQUIRE(mask.shape() == std::vector<int>{2, 3});
    CHECK(target.at({0, 1}) == 4.5);
    CHECK(target.at({1, 2}) == 2.0);
    CHECK(target.at({0, 0}) == 0.0);
    CHECK(mask.at({0, 1}) == 1.0);
    CHECK(mask.at({1, 2}) == 1.0);
    CHECK(mask.at({0, 0}) == 0.0);
    double sum = 0.0;
    for (double v : mask.values) sum += v;
    CHECK(sum == 2.0);
}
