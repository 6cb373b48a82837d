#pragma once

#include <string>
#include <vector>

#include "fusion_stereo/geometry.hpp"
#include "fusion_stereo/tensor.hpp"

namespace fstereo {

struct MetricValue {
    std::string name;
    double value;
};

// Evaluated over ground-truth pixels only, in a fixed order:
// err_gt_{1,2,3}px (fraction with |error| strictly above the threshold),
// rmse_px / mae_px in disparity, rmse_m / mae_m in depth, irmse_km / imae_km
// in inverse depth (1/km).  Depth uses z = f*B/max(d, 1e-3).
std::vector<MetricValue> compute_metrics(const Tensor& pred_disp, const SparseDisparityMap& gt,
                                         const CameraCalibration& calib);

const std::vector<std::string>& metric_names();
double metric_value(const std::vector<MetricValue>& metrics, const std::string& name);

// Element-wise mean of per-sample metric vectors.
std::vector<MetricValue> average_metrics(const std::vector<std::vector<MetricValue>>& per_sample);

// Dense [H,W] target plus a 0/1 mask from a sparse map.
void sparse_to_target(const SparseDisparityMap& gt, Tensor& target, Tensor& mask);

}  // namespace fstereo
