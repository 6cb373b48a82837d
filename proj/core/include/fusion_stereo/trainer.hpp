#pragma once

#include <ostream>
#include <vector>

#include "fusion_stereo/dataset.hpp"
#include "fusion_stereo/metrics.hpp"
#include "fusion_stereo/network.hpp"
#include "fusion_stereo/optimizer.hpp"

namespace fstereo {

struct TrainConfig {
    int iters = 200;
    double lr = 1e-3;
    double alpha = 0.99;
    double eps = 1e-8;
    int crop_h = 0;  // 0 means full frame
    int crop_w = 0;
    uint64_t seed = 0;       // sampling and crop stream
    double stop_below = 0.0; // early stop once the loss drops under this; 0 disables
};

struct TrainResult {
    std::vector<double> losses;  // one entry per executed iteration
    double final_loss = 0.0;
    int iterations_run = 0;
};

// Single-sample training loop: draw a scene, crop, forward in training mode,
// masked L1 against ground truth, explicit backward, RMSProp step.  Each
// iteration appends "iter,loss" to loss_log when given.  A non-finite loss
// raises DivergenceError.
TrainResult train_model(Model& model, DataSource& data, const TrainConfig& cfg,
                        std::ostream* loss_log);

// Average metrics over the first max_samples scenes (all when <= 0),
// forwarding in eval mode.
std::vector<MetricValue> evaluate_model(Model& model, DataSource& data, int max_samples);

}  // namespace fstereo
