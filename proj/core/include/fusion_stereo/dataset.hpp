#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fusion_stereo/sample.hpp"
#include "fusion_stereo/scene.hpp"

namespace fstereo {

// Manifest line: left right lidar gt calib (paths, whitespace separated,
// resolved against the manifest's directory; # starts a comment).
struct ManifestEntry {
    std::string left, right, lidar, gt, calib;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);

// Assembles a sample from one manifest entry.  16-bit maps hold metres unless
// the filename ends in _disp.png, in which case they already hold disparity.
// crop_h > 0 keeps the bottom crop_h rows (principal point adjusted).  The
// right sparse map is derived by shifting each measurement by its own
// disparity.  With FUSION_STEREO_CHECK_GT_DENSITY=1 the loader rejects ground
// truth covering less than 30% of the crop.
StereoSample load_manifest_sample(const ManifestEntry& entry, int crop_h);

StereoSample crop_sample(const StereoSample& s, int y0, int x0, int crop_h, int crop_w);
StereoSample random_crop(const StereoSample& s, int crop_h, int crop_w, Rng& rng);

// Left-view measurements moved to their right-view columns (u = x - round(d));
// collisions keep the larger disparity.
SparseDisparityMap shift_to_right_view(const SparseDisparityMap& left);

class DataSource {
public:
    virtual ~DataSource() = default;
    virtual int size() const = 0;
    virtual const StereoSample& get(int idx) = 0;
};

// Fixed pool of generated scenes; scene i uses a seed derived from
// (base_seed, i) and is cached after first use.
class SyntheticDataSource : public DataSource {
public:
    SyntheticDataSource(const SceneConfig& cfg, int count, uint64_t base_seed);
    int size() const override { return count_; }
    const StereoSample& get(int idx) override;

private:
    SceneConfig cfg_;
    int count_;
    uint64_t base_seed_;
    std::vector<std::unique_ptr<StereoSample>> cache_;
};

class ManifestDataSource : public DataSource {
public:
    ManifestDataSource(const std::string& manifest_path, int crop_h);
    int size() const override { return static_cast<int>(entries_.size()); }
    const StereoSample& get(int idx) override;

private:
    std::vector<ManifestEntry> entries_;
    int crop_h_;
    std::vector<std::unique_ptr<StereoSample>> cache_;
};

}  // namespace fstereo
