#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "fusion_stereo/dataset.hpp"
#include "fusion_stereo/metrics.hpp"
#include "fusion_stereo/network.hpp"

namespace fstereo {

// The sample with its left sparse map thinned to the given fraction of
// measurements and the right map rebuilt from the survivors.
StereoSample with_lidar_fraction(const StereoSample& s, double fraction, uint64_t seed);

struct DensitySweepConfig {
    std::vector<double> fractions = {1.0, 0.5, 0.25, 0.1};
    std::vector<uint64_t> seeds = {0, 1, 2};
    int eval_samples = 2;
};

// Evaluates the model at each (fraction, seed) pair and writes CSV rows
// "density,seed,metric,value", one row per metric, after a single header
// line.  Rows appear in fraction-major, then seed, then metric order.
void density_sweep(Model& model, DataSource& data, const DensitySweepConfig& cfg,
                   std::ostream& csv);

struct SensitivityResult {
    double inside_mean_abs_delta = 0.0;
    double outside_mean_abs_delta = 0.0;
    int64_t perturbed_measurements = 0;
};

// Perturbs the left sparse map inside the region by delta (values clamped at
// zero), leaves everything else untouched, and compares eval-mode
// predictions inside versus outside the region.  The base and perturbed
// predictions are copied out when requested.
SensitivityResult sensitivity_probe(Model& model, const StereoSample& sample, int y0, int x0,
                                    int region_h, int region_w, double delta,
                                    Tensor* base_pred = nullptr, Tensor* probed_pred = nullptr);

struct RuntimeReport {
    double median_forward_ms = 0.0;
    int runs = 0;
    int64_t param_total = 0;
    int64_t param_conditioning = 0;
    int64_t checkpoint_param_total = 0;
    bool checkpoint_matches = false;
};

// Times eval-mode forwards (median of at least 10 runs) and cross-checks the
// in-memory parameter count against a checkpoint round trip written to
// scratch_ckpt_path.
RuntimeReport runtime_report(Model& model, const StereoSample& sample, int runs,
                             const std::string& scratch_ckpt_path);

void write_runtime_report(const RuntimeReport& r, std::ostream& os);

}  // namespace fstereo
