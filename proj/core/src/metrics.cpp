#include "fusion_stereo/metrics.hpp"

#include <cmath>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "err_gt_1px", "err_gt_2px", "err_gt_3px", "rmse_px", "mae_px",
        "rmse_m",     "mae_m",      "irmse_km",   "imae_km",
    };
    return names;
}

std::vector<MetricValue> compute_metrics(const Tensor& pred_disp, const SparseDisparityMap& gt,
                                         const CameraCalibration& calib) {
    if (pred_disp.ndim() != 2 || pred_disp.dim(0) != gt.height || pred_disp.dim(1) != gt.width)
        throw ShapeError("compute_metrics: prediction " + pred_disp.shape_str() +
                         " does not match ground truth " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
    int64_t n = 0;
    int64_t over1 = 0, over2 = 0, over3 = 0;
    double sum_abs = 0.0, sum_sq = 0.0;
    double sum_abs_m = 0.0, sum_sq_m = 0.0;
    double sum_abs_i = 0.0, sum_sq_i = 0.0;
    const double fb = calib.focal_px * calib.baseline_m;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!gt.is_valid(y, x)) continue;
            ++n;
            const double pred = pred_disp.values[static_cast<size_t>(y * gt.width + x)];
            const double truth = gt.at(y, x);
            const double err = std::abs(pred - truth);
            over1 += err > 1.0;
            over2 += err > 2.0;
            over3 += err > 3.0;
            sum_abs += err;
            sum_sq += err * err;
            const double zp = disparity_to_depth(pred, calib);
            const double zt = disparity_to_depth(truth, calib);
            const double em = std::abs(zp - zt);
            sum_abs_m += em;
            sum_sq_m += em * em;
            // inverse depth in 1/km: 1000 * d / (f*B)
            const double ei = std::abs(pred - truth) * 1000.0 / fb;
            sum_abs_i += ei;
            sum_sq_i += ei * ei;
        }
    }
    if (n == 0) throw ConfigError("compute_metrics: no ground-truth pixels");
    const double dn = static_cast<double>(n);
    return {
        {"err_gt_1px", static_cast<double>(over1) / dn},
        {"err_gt_2px", static_cast<double>(over2) / dn},
        {"err_gt_3px", static_cast<double>(over3) / dn},
        {"rmse_px", std::sqrt(sum_sq / dn)},
        {"mae_px", sum_abs / dn},
        {"rmse_m", std::sqrt(sum_sq_m / dn)},
        {"mae_m", sum_abs_m / dn},
        {"irmse_km", std::sqrt(sum_sq_i / dn)},
        {"imae_km", sum_abs_i / dn},
    };
}

double metric_value(const std::vector<MetricValue>& metrics, const std::string& name) {
    for (const MetricValue& m : metrics)
        if (m.name == name) return m.value;
    throw ConfigError("unknown metric '" + name + "'");
}

std::vector<MetricValue> average_metrics(const std::vector<std::vector<MetricValue>>& per_sample) {
    if (per_sample.empty()) throw ConfigError("average_metrics: no samples");
    std::vector<MetricValue> avg = per_sample.front();
    for (MetricValue& m : avg) m.value = 0.0;
    for (const std::vector<MetricValue>& sample : per_sample) {
        if (sample.size() != avg.size())
            throw ConfigError("average_metrics: inconsistent metric vectors");
        for (size_t i = 0; i < avg.size(); ++i) {
            if (sample[i].name != avg[i].name)
                throw ConfigError("average_metrics: inconsistent metric order");
            avg[i].value += sample[i].value;
        }
    }
    for (MetricValue& m : avg) m.value /= static_cast<double>(per_sample.size());
    return avg;
}

void sparse_to_target(const SparseDisparityMap& gt, Tensor& target, Tensor& mask) {
    target = Tensor({gt.height, gt.width});
    mask = Tensor({gt.height, gt.width});
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!gt.is_valid(y, x)) continue;
            target.values[static_cast<size_t>(y * gt.width + x)] = gt.at(y, x);
            mask.values[static_cast<size_t>(y * gt.width + x)] = 1.0;
        }
    }
}

}  // namespace fstereo
