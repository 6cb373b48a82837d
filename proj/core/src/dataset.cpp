#include "fusion_stereo/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/png_io.hpp"

namespace fstereo {

namespace {

bool is_disparity_file(const std::string& path) {
    const std::string suffix = "_disp.png";
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
}

SparseDisparityMap read_sparse_as_disparity(const std::string& path,
                                            const CameraCalibration& calib) {
    SparseDisparityMap map = read_depth_png(path);
    if (is_disparity_file(path)) return map;
    return depth_map_to_disparity(map, calib);
}

SparseDisparityMap crop_map(const SparseDisparityMap& m, int y0, int x0, int ch, int cw) {
    SparseDisparityMap out(ch, cw);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            if (m.is_valid(y0 + y, x0 + x)) out.set(y, x, m.at(y0 + y, x0 + x));
        }
    }
    return out;
}

}  // namespace

SparseDisparityMap shift_to_right_view(const SparseDisparityMap& left) {
    SparseDisparityMap right(left.height, left.width);
    for (int y = 0; y < left.height; ++y) {
        for (int x = 0; x < left.width; ++x) {
            if (!left.is_valid(y, x)) continue;
            const double d = left.at(y, x);
            const int u = x - static_cast<int>(std::lround(d));
            if (u < 0 || u >= left.width) continue;
            if (!right.is_valid(y, u) || d > right.at(y, u)) right.set(y, u, d);
        }
    }
    return right;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest '" + path + "'");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.left)) continue;  // blank or comment-only line
        std::string extra;
        if (!(ls >> e.right >> e.lidar >> e.gt >> e.calib) || (ls >> extra)) {
            throw DataError("manifest '" + path + "' line " + std::to_string(line_no) +
                            " must have exactly 5 paths: left right lidar gt calib");
        }
        e.left = resolve(e.left);
        e.right = resolve(e.right);
        e.lidar = resolve(e.lidar);
        e.gt = resolve(e.gt);
        e.calib = resolve(e.calib);
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw DataError("manifest '" + path + "' lists no samples");
    return entries;
}

StereoSample load_manifest_sample(const ManifestEntry& entry, int crop_h) {
    StereoSample s;
    s.calib = read_calibration(entry.calib);
    s.left = read_rgb8_png(entry.left);
    s.right = read_rgb8_png(entry.right);
    check_same_shape(s.left, s.right, "stereo pair");
    const int h = s.left.dim(1), w = s.left.dim(2);
    if (s.calib.width != w || s.calib.height != h)
        throw DataError("calibration '" + entry.calib + "' says " +
                        std::to_string(s.calib.width) + "x" + std::to_string(s.calib.height) +
                        " but '" + entry.left + "' is " + std::to_string(w) + "x" +
                        std::to_string(h));

    SparseDisparityMap lidar = read_sparse_as_disparity(entry.lidar, s.calib);
    SparseDisparityMap gt = read_sparse_as_disparity(entry.gt, s.calib);
    if (lidar.height != h || lidar.width != w)
        throw DataError("sparse map '" + entry.lidar + "' size does not match the images");
    if (gt.height != h || gt.width != w)
        throw DataError("ground truth '" + entry.gt + "' size does not match the images");
    s.lidar_left = std::move(lidar);
    s.gt = std::move(gt);
    s.lidar_right = shift_to_right_view(s.lidar_left);

    if (crop_h > 0 && crop_h < h) s = crop_sample(s, h - crop_h, 0, crop_h, w);

    const char* check = std::getenv("FUSION_STEREO_CHECK_GT_DENSITY");
    if (check && std::string(check) == "1" && s.gt.density() < 0.30) {
        throw DataError("ground truth '" + entry.gt + "' covers only " +
                        std::to_string(s.gt.density() * 100.0) + "% of the crop, expected >= 30%");
    }
    return s;
}

StereoSample crop_sample(const StereoSample& s, int y0, int x0, int crop_h, int crop_w) {
    const int h = s.left.dim(1), w = s.left.dim(2);
    if (y0 < 0 || x0 < 0 || crop_h < 1 || crop_w < 1 || y0 + crop_h > h || x0 + crop_w > w)
        throw ConfigError("crop_sample: crop " + std::to_string(crop_w) + "x" +
                          std::to_string(crop_h) + " at (" + std::to_string(x0) + "," +
                          std::to_string(y0) + ") does not fit in " + std::to_string(w) + "x" +
                          std::to_string(h));
    StereoSample out;
    out.left = Tensor({3, crop_h, crop_w});
    out.right = Tensor({3, crop_h, crop_w});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < crop_h; ++y) {
            for (int x = 0; x < crop_w; ++x) {
                const size_t src = static_cast<size_t>((c * h + y0 + y) * w + x0 + x);
                const size_t dst = static_cast<size_t>((c * crop_h + y) * crop_w + x);
                out.left.values[dst] = s.left.values[src];
                out.right.values[dst] = s.right.values[src];
            }
        }
    }
    out.lidar_left = crop_map(s.lidar_left, y0, x0, crop_h, crop_w);
    out.lidar_right = crop_map(s.lidar_right, y0, x0, crop_h, crop_w);
    out.gt = crop_map(s.gt, y0, x0, crop_h, crop_w);
    out.calib = s.calib;
    out.calib.cx -= static_cast<double>(x0);
    out.calib.cy -= static_cast<double>(y0);
    out.calib.width = crop_w;
    out.calib.height = crop_h;
    return out;
}

StereoSample random_crop(const StereoSample& s, int crop_h, int crop_w, Rng& rng) {
    const int h = s.left.dim(1), w = s.left.dim(2);
    if (crop_h > h || crop_w > w)
        throw ConfigError("random_crop: crop larger than the sample");
    if (crop_h == h && crop_w == w) return s;
    const int y0 = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(h - crop_h + 1)));
    const int x0 = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(w - crop_w + 1)));
    return crop_sample(s, y0, x0, crop_h, crop_w);
}

SyntheticDataSource::SyntheticDataSource(const SceneConfig& cfg, int count, uint64_t base_seed)
    : cfg_(cfg), count_(count), base_seed_(base_seed) {
    if (count < 1) throw ConfigError("synthetic data source needs at least one scene");
    cfg_.validate();
    cache_.resize(static_cast<size_t>(count));
}

const StereoSample& SyntheticDataSource::get(int idx) {
    if (idx < 0 || idx >= count_)
        throw ConfigError("scene index " + std::to_string(idx) + " out of range");
    std::unique_ptr<StereoSample>& slot = cache_[static_cast<size_t>(idx)];
    if (!slot) {
        slot = std::make_unique<StereoSample>(
            gen_scene(cfg_, mix_seed(base_seed_, static_cast<uint64_t>(idx))));
    }
    return *slot;
}

ManifestDataSource::ManifestDataSource(const std::string& manifest_path, int crop_h)
    : entries_(read_manifest(manifest_path)), crop_h_(crop_h) {
    cache_.resize(entries_.size());
}

const StereoSample& ManifestDataSource::get(int idx) {
    if (idx < 0 || idx >= size())
        throw ConfigError("manifest index " + std::to_string(idx) + " out of range");
    std::unique_ptr<StereoSample>& slot = cache_[static_cast<size_t>(idx)];
    if (!slot)
        slot = std::make_unique<StereoSample>(
            load_manifest_sample(entries_[static_cast<size_t>(idx)], crop_h_));
    return *slot;
}

}  // namespace fstereo
