#include "fusion_stereo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "fusion_stereo/checkpoint.hpp"
#include "fusion_stereo/errors.hpp"

namespace fstereo {

StereoSample with_lidar_fraction(const StereoSample& s, double fraction, uint64_t seed) {
    StereoSample out = s;
    Rng rng(mix_seed(seed, 0x646e7374ull));
    out.lidar_left = subsample_sparse(s.lidar_left, fraction, rng);
    out.lidar_right = shift_to_right_view(out.lidar_left);
    return out;
}

void density_sweep(Model& model, DataSource& data, const DensitySweepConfig& cfg,
                   std::ostream& csv) {
    if (cfg.fractions.empty()) throw ConfigError("density_sweep: no fractions");
    if (cfg.seeds.empty()) throw ConfigError("density_sweep: no seeds");
    const int n = cfg.eval_samples > 0 ? std::min(cfg.eval_samples, data.size()) : data.size();

    csv << "density,seed,metric,value\n";
    char line[160];
    for (double fraction : cfg.fractions) {
        for (uint64_t seed : cfg.seeds) {
            std::vector<std::vector<MetricValue>> per_sample;
            for (int i = 0; i < n; ++i) {
                const StereoSample thinned = with_lidar_fraction(
                    data.get(i), fraction, mix_seed(seed, static_cast<uint64_t>(i)));
                const Tensor pred = model.forward(thinned, false);
                per_sample.push_back(compute_metrics(pred, thinned.gt, thinned.calib));
            }
            for (const MetricValue& m : average_metrics(per_sample)) {
                std::snprintf(line, sizeof(line), "%.17g,%llu,%s,%.17g\n", fraction,
                              static_cast<unsigned long long>(seed), m.name.c_str(), m.value);
                csv << line;
            }
        }
    }
}

SensitivityResult sensitivity_probe(Model& model, const StereoSample& sample, int y0, int x0,
                                    int region_h, int region_w, double delta, Tensor* base_pred,
                                    Tensor* probed_pred) {
    const int h = sample.left.dim(1), w = sample.left.dim(2);
    if (y0 < 0 || x0 < 0 || region_h < 1 || region_w < 1 || y0 + region_h > h ||
        x0 + region_w > w)
        throw ConfigError("sensitivity_probe: region outside the image");

    StereoSample probed = sample;
    int64_t touched = 0;
    for (int y = y0; y < y0 + region_h; ++y) {
        for (int x = x0; x < x0 + region_w; ++x) {
            if (!probed.lidar_left.is_valid(y, x)) continue;
            probed.lidar_left.set(y, x, std::max(0.0, probed.lidar_left.at(y, x) + delta));
            ++touched;
        }
    }
    if (touched == 0) throw ConfigError("sensitivity_probe: no conditioning signal in region");

    const Tensor base = model.forward(sample, false);
    const Tensor probe = model.forward(probed, false);
    if (base_pred) *base_pred = base;
    if (probed_pred) *probed_pred = probe;

    SensitivityResult r;
    r.perturbed_measurements = touched;
    double in_acc = 0.0, out_acc = 0.0;
    int64_t in_n = 0, out_n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dv = std::abs(probe.values[static_cast<size_t>(y * w + x)] -
                                       base.values[static_cast<size_t>(y * w + x)]);
            const bool inside = y >= y0 && y < y0 + region_h && x >= x0 && x < x0 + region_w;
            if (inside) {
                in_acc += dv;
                ++in_n;
            } else {
                out_acc += dv;
                ++out_n;
            }
        }
    }
    r.inside_mean_abs_delta = in_acc / static_cast<double>(in_n);
    r.outside_mean_abs_delta = out_n > 0 ? out_acc / static_cast<double>(out_n) : 0.0;
    return r;
}

RuntimeReport runtime_report(Model& model, const StereoSample& sample, int runs,
                             const std::string& scratch_ckpt_path) {
    if (runs < 10) throw ConfigError("runtime_report: need at least 10 runs");
    std::vector<double> times;
    times.reserve(static_cast<size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        volatile double sink = model.forward(sample, false).values[0];
        (void)sink;
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const size_t mid = times.size() / 2;
    const double median = times.size() % 2 == 1
                              ? times[mid]
                              : 0.5 * (times[mid - 1] + times[mid]);

    RuntimeReport r;
    r.runs = runs;
    r.median_forward_ms = median;
    r.param_total = model.param_count(true);
    r.param_conditioning = model.conditioning_param_count();

    model.save(scratch_ckpt_path);
    int64_t ckpt_total = 0;
    std::vector<ParamRef> params = model.named_parameters();
    const std::vector<CheckpointEntry> entries = load_checkpoint(scratch_ckpt_path);
    size_t pi = 0;
    for (const CheckpointEntry& e : entries) {
        // count trainable entries only, matched positionally against the model
        if (pi < params.size() && params[pi].name == e.name) {
            if (params[pi].trainable) ckpt_total += e.tensor.numel();
            ++pi;
        }
    }
    r.checkpoint_param_total = ckpt_total;
    r.checkpoint_matches = pi == params.size() && ckpt_total == r.param_total;
    return r;
}

void write_runtime_report(const RuntimeReport& r, std::ostream& os) {
    char line[128];
    std::snprintf(line, sizeof(line), "median_forward_ms %.6f\n", r.median_forward_ms);
    os << line;
    os << "runs " << r.runs << '\n';
    os << "param_total " << r.param_total << '\n';
    os << "param_conditioning " << r.param_conditioning << '\n';
    os << "checkpoint_param_total " << r.checkpoint_param_total << '\n';
    os << "checkpoint_matches " << (r.checkpoint_matches ? 1 : 0) << '\n';
}

}  // namespace fstereo
