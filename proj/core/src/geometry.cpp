#include "fusion_stereo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

int64_t SparseDisparityMap::valid_count() const {
    int64_t n = 0;
    for (uint8_t v : valid) n += (v != 0);
    return n;
}

double SparseDisparityMap::density() const {
    if (height == 0 || width == 0) return 0.0;
    return static_cast<double>(valid_count()) /
           (static_cast<double>(height) * static_cast<double>(width));
}

CameraCalibration read_calibration(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open calibration file '" + path + "'");
    std::map<std::string, double> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        double value;
        if (!(ls >> key >> value)) {
            throw DataError("calibration file '" + path + "' line " + std::to_string(line_no) +
                            " is not 'key value'");
        }
        if (kv.count(key))
            throw DataError("calibration file '" + path + "' repeats key '" + key + "'");
        kv[key] = value;
    }
    static const char* required[] = {"focal_px", "baseline_m", "cx", "cy", "width", "height"};
    for (const char* key : required) {
        if (!kv.count(key))
            throw DataError("calibration file '" + path + "' is missing key '" + key + "'");
    }
    for (const auto& [key, _] : kv) {
        bool known = false;
        for (const char* r : required) known = known || key == r;
        if (!known)
            throw DataError("calibration file '" + path + "' has unknown key '" + key + "'");
    }
    CameraCalibration c;
    c.focal_px = kv["focal_px"];
    c.baseline_m = kv["baseline_m"];
    c.cx = kv["cx"];
    c.cy = kv["cy"];
    c.width = static_cast<int>(kv["width"]);
    c.height = static_cast<int>(kv["height"]);
    if (c.focal_px <= 0.0 || c.baseline_m <= 0.0)
        throw DataError("calibration file '" + path + "' needs positive focal_px and baseline_m");
    if (c.width <= 0 || c.height <= 0)
        throw DataError("calibration file '" + path + "' needs positive width and height");
    return c;
}

void write_calibration(const std::string& path, const CameraCalibration& c) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open calibration file '" + path + "' for writing");
    char buf[64];
    auto emit = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << key << ' ' << buf << '\n';
    };
    emit("focal_px", c.focal_px);
    emit("baseline_m", c.baseline_m);
    emit("cx", c.cx);
    emit("cy", c.cy);
    os << "width " << c.width << '\n';
    os << "height " << c.height << '\n';
}

double depth_to_disparity(double z_m, const CameraCalibration& c) {
    if (z_m <= 0.0) throw DataError("depth_to_disparity: depth must be positive");
    return c.focal_px * c.baseline_m / z_m;
}

double disparity_to_depth(double d_px, const CameraCalibration& c) {
    return c.focal_px * c.baseline_m / std::max(d_px, 1e-3);
}

SparseDisparityMap depth_map_to_disparity(const SparseDisparityMap& depth,
                                          const CameraCalibration& c) {
    SparseDisparityMap out(depth.height, depth.width);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.is_valid(y, x)) continue;
            const double z = depth.at(y, x);
            if (z <= 0.0) continue;
            out.set(y, x, c.focal_px * c.baseline_m / z);
        }
    }
    return out;
}

SparseDisparityMap disparity_map_to_depth(const SparseDisparityMap& disp,
                                          const CameraCalibration& c) {
    SparseDisparityMap out(disp.height, disp.width);
    for (int y = 0; y < disp.height; ++y) {
        for (int x = 0; x < disp.width; ++x) {
            if (!disp.is_valid(y, x)) continue;
            out.set(y, x, disparity_to_depth(disp.at(y, x), c));
        }
    }
    return out;
}

ProjectedLidar project_lidar(const std::vector<LidarPoint>& cloud, const CameraCalibration& c) {
    ProjectedLidar out{SparseDisparityMap(c.height, c.width), SparseDisparityMap(c.height, c.width)};
    for (const LidarPoint& p : cloud) {
        if (p.z <= 0.0) continue;
        const double u = c.focal_px * p.x / p.z + c.cx;
        const double v = c.focal_px * p.y / p.z + c.cy;
        const double d = c.focal_px * c.baseline_m / p.z;
        const int col = static_cast<int>(std::lround(u));
        const int row = static_cast<int>(std::lround(v));
        if (row < 0 || row >= c.height) continue;
        if (col >= 0 && col < c.width) {
            if (!out.left.is_valid(row, col) || d > out.left.at(row, col))
                out.left.set(row, col, d);
        }
        const int col_r = col - static_cast<int>(std::lround(d));
        if (col_r >= 0 && col_r < c.width) {
            if (!out.right.is_valid(row, col_r) || d > out.right.at(row, col_r))
                out.right.set(row, col_r, d);
        }
    }
    return out;
}

SparseDisparityMap subsample_sparse(const SparseDisparityMap& map, double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("subsample_sparse: fraction must lie in [0,1], got " +
                          std::to_string(fraction));
    std::vector<size_t> valid_idx;
    valid_idx.reserve(map.valid.size());
    for (size_t i = 0; i < map.valid.size(); ++i)
        if (map.valid[i]) valid_idx.push_back(i);

    const int64_t keep = static_cast<int64_t>(
        std::llround(fraction * static_cast<double>(valid_idx.size())));
    SparseDisparityMap out(map.height, map.width);
    for (int64_t i = 0; i < keep; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.uniform_below(
                                  static_cast<uint64_t>(valid_idx.size() - i)));
        std::swap(valid_idx[static_cast<size_t>(i)], valid_idx[static_cast<size_t>(j)]);
        const size_t pick = valid_idx[static_cast<size_t>(i)];
        out.disparity[pick] = map.disparity[pick];
        out.valid[pick] = 1;
    }
    return out;
}

int discretize_disparity(double d, double d_max, int n_bins) {
    if (n_bins < 1) throw ConfigError("discretize_disparity: n_bins must be >= 1");
    if (d_max <= 0.0) throw ConfigError("discretize_disparity: d_max must be positive");
    const int k = static_cast<int>(std::floor(d / d_max * static_cast<double>(n_bins)));
    return std::clamp(k, 0, n_bins - 1);
}

}  // namespace fstereo
