#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusion_stereo/network.hpp"
#include "fusion_stereo/scene.hpp"
#include "fusion_stereo/trainer.hpp"

namespace fstereo {

// INI subset: [section] headers, key = value lines, # or ; comments.
class IniFile {
public:
    static IniFile parse_file(const std::string& path);
    static IniFile parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& sec, const std::string& key) const;
    std::string get_str(const std::string& sec, const std::string& key,
                        const std::string& def) const;
    double get_double(const std::string& sec, const std::string& key, double def) const;
    int get_int(const std::string& sec, const std::string& key, int def) const;
    uint64_t get_u64(const std::string& sec, const std::string& key, uint64_t def) const;
    bool get_bool(const std::string& sec, const std::string& key, bool def) const;
    std::vector<double> get_double_list(const std::string& sec, const std::string& key,
                                        const std::vector<double>& def) const;
    std::vector<int> get_int_list(const std::string& sec, const std::string& key,
                                  const std::vector<int>& def) const;
    std::vector<uint64_t> get_u64_list(const std::string& sec, const std::string& key,
                                       const std::vector<uint64_t>& def) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::string origin_;
};

// All knobs of one run, resolved from defaults, then the config file, then
// command-line flags (the caller applies those), then the precision
// environment variable.
struct RunConfig {
    std::string variant = "none";
    uint64_t seed = 0;
    int iters = 200;
    std::string out = "out";
    std::string data = "synthetic";  // synthetic | manifest:PATH
    std::string precision = "f64";

    NetworkConfig network;
    TrainConfig train;

    SceneConfig scene;
    int scene_count = 4;

    std::vector<double> density_fractions = {1.0, 0.5, 0.25, 0.1};
    std::vector<uint64_t> density_seeds = {0, 1, 2};
    int density_eval_samples = 2;

    int sens_y0 = 8, sens_x0 = 16, sens_h = 8, sens_w = 16;
    double sens_delta = 4.0;
    int sens_sample = 0;

    int eval_samples = 0;  // 0 means every scene

    static RunConfig from_ini(const IniFile& ini);
    void write_resolved(const std::string& path) const;
};

// FUSION_STEREO_PRECISION beats the resolved value; anything but f32/f64 is
// rejected.  Installs the global precision mode.
void apply_precision_choice(RunConfig& cfg);

}  // namespace fstereo
