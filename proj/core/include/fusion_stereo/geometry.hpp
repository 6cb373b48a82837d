#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusion_stereo/rng.hpp"

namespace fstereo {

// Fill value written into the fused input channel wherever the sparse map has
// no measurement.
inline constexpr double kInvalidFill = 0.0;

struct CameraCalibration {
    double focal_px = 0.0;
    double baseline_m = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
};

CameraCalibration read_calibration(const std::string& path);
void write_calibration(const std::string& path, const CameraCalibration& c);

// Row-major sparse disparity map; valid[i] == 0 means no measurement and the
// disparity entry is meaningless.
struct SparseDisparityMap {
    int height = 0;
    int width = 0;
    std::vector<double> disparity;
    std::vector<uint8_t> valid;

    SparseDisparityMap() = default;
    SparseDisparityMap(int h, int w)
        : height(h),
          width(w),
          disparity(static_cast<size_t>(h) * static_cast<size_t>(w), 0.0),
          valid(static_cast<size_t>(h) * static_cast<size_t>(w), 0) {}

    size_t idx(int y, int x) const {
        return static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x);
    }
    bool is_valid(int y, int x) const { return valid[idx(y, x)] != 0; }
    double at(int y, int x) const { return disparity[idx(y, x)]; }
    void set(int y, int x, double d) {
        disparity[idx(y, x)] = d;
        valid[idx(y, x)] = 1;
    }
    void clear(int y, int x) {
        disparity[idx(y, x)] = 0.0;
        valid[idx(y, x)] = 0;
    }
    int64_t valid_count() const;
    double density() const;
};

// Camera-frame point: x right, y down, z forward (metres).
struct LidarPoint {
    double x, y, z;
};

struct ProjectedLidar {
    SparseDisparityMap left;
    SparseDisparityMap right;
};

double depth_to_disparity(double z_m, const CameraCalibration& c);
double disparity_to_depth(double d_px, const CameraCalibration& c);

// Per-pixel conversion; invalid pixels stay invalid, nonpositive depths are
// dropped.
SparseDisparityMap depth_map_to_disparity(const SparseDisparityMap& depth,
                                          const CameraCalibration& c);
SparseDisparityMap disparity_map_to_depth(const SparseDisparityMap& disp,
                                          const CameraCalibration& c);

// Projects the cloud into both image planes.  The right-image column is
// derived from the rounded left column minus the rounded disparity, so the
// column offset of every surviving point is exactly round(f*B/z).  Collisions
// keep the larger disparity (the nearer point).
ProjectedLidar project_lidar(const std::vector<LidarPoint>& cloud, const CameraCalibration& c);

// Keeps round(fraction * valid_count) measurements, chosen uniformly without
// replacement; the rest become invalid.
SparseDisparityMap subsample_sparse(const SparseDisparityMap& map, double fraction, Rng& rng);

// Uniform bins over [0, d_max); values at or beyond d_max land in the last
// bin, negatives in bin 0.
int discretize_disparity(double d, double d_max, int n_bins);

}  // namespace fstereo
