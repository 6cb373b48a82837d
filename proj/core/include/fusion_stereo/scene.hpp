#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusion_stereo/rng.hpp"
#include "fusion_stereo/sample.hpp"

namespace fstereo {

// Synthetic stereo scenes: a background plane plus floating rectangles, each
// with a (possibly slanted) planar disparity profile and its own texture.
// The right view is rendered by solving x - d(x, y) = u along each row for
// the nearest covering plane, so left/right/ground truth are geometrically
// consistent by construction.

struct SceneConfig {
    int width = 64;
    int height = 32;
    int d_max = 16;
    int n_planes = 3;            // floating rectangles in front of the background
    double d_lo = 1.0;
    double d_hi = 0.0;           // 0 means d_max - 2
    bool slanted = true;
    std::string texture = "mixed";  // noise | checker | gradient | mixed
    double lidar_coverage = 0.05;   // fraction of pixels with a measurement
    double lidar_noise = 0.25;      // disparity noise sigma, pixels
    double focal_px = 100.0;
    double baseline_m = 0.2;

    double disp_hi() const { return d_hi > 0.0 ? d_hi : static_cast<double>(d_max) - 2.0; }
    void validate() const;
};

struct ScenePlane {
    // footprint [x0,x1) x [y0,y1) in left-image coordinates
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
    // disparity a + b*(x - xc) + c*(y - yc) around the footprint center
    double a = 0.0, b = 0.0, c = 0.0;
    double xc = 0.0, yc = 0.0;
    int texture_kind = 0;  // 0 noise, 1 checker, 2 gradient
    // noise: per-channel, per-row value lattice over extended x
    std::vector<std::vector<double>> lattice;  // [3], each rows*lattice_w
    int lattice_w = 0;
    // checker
    double cell = 4.0;
    double palette[2][3] = {};
    // gradient
    double g0[3] = {}, gx[3] = {}, gy[3] = {};

    bool covers(double x, int y) const {
        return x >= x0 && x < x1 && static_cast<double>(y) >= y0 && static_cast<double>(y) < y1;
    }
    double disparity_at(double x, int y) const {
        return a + b * (x - xc) + c * (static_cast<double>(y) - yc);
    }
    double texture_at(int channel, double x, int y, int img_w) const;
};

std::vector<ScenePlane> sample_planes(const SceneConfig& cfg, Rng& rng);

// Renders images, ground truth and both sparse maps from explicit planes;
// tests use it with hand-built integer-disparity planes.
StereoSample render_scene(const std::vector<ScenePlane>& planes, const SceneConfig& cfg,
                          Rng& lidar_rng);

StereoSample gen_scene(const SceneConfig& cfg, uint64_t seed);

}  // namespace fstereo
