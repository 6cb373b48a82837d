#include "fusion_stereo/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/ops.hpp"

namespace fstereo {

TrainResult train_model(Model& model, DataSource& data, const TrainConfig& cfg,
                        std::ostream* loss_log) {
    if (cfg.iters < 1) throw ConfigError("train: iters must be >= 1");
    RmsProp opt(model.named_parameters(), {cfg.lr, cfg.alpha, cfg.eps});
    Rng rng(mix_seed(cfg.seed, 0x74726e00ull));

    TrainResult result;
    char line[64];
    for (int it = 0; it < cfg.iters; ++it) {
        const int idx = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(data.size())));
        const StereoSample& base = data.get(idx);
        StereoSample cropped;
        const StereoSample* sample = &base;
        if (cfg.crop_h > 0 && cfg.crop_w > 0) {
            cropped = random_crop(base, cfg.crop_h, cfg.crop_w, rng);
            sample = &cropped;
        }

        Tensor pred = model.forward(*sample, true);
        Tensor target, mask;
        sparse_to_target(sample->gt, target, mask);
        const double loss = l1_loss(pred, target, mask);
        if (!std::isfinite(loss))
            throw DivergenceError("loss is not finite at iteration " + std::to_string(it));
        if (loss_log) {
            std::snprintf(line, sizeof(line), "%d,%.17g\n", it, loss);
            (*loss_log) << line;
        }
        result.losses.push_back(loss);
        result.final_loss = loss;
        result.iterations_run = it + 1;

        model.zero_grad();
        model.backward(l1_loss_backward(pred, target, mask));
        opt.step();

        if (cfg.stop_below > 0.0 && loss < cfg.stop_below) break;
    }
    return result;
}

std::vector<MetricValue> evaluate_model(Model& model, DataSource& data, int max_samples) {
    const int n = max_samples > 0 ? std::min(max_samples, data.size()) : data.size();
    std::vector<std::vector<MetricValue>> per_sample;
    for (int i = 0; i < n; ++i) {
        const StereoSample& s = data.get(i);
        const Tensor pred = model.forward(s, false);
        per_sample.push_back(compute_metrics(pred, s.gt, s.calib));
    }
    return average_metrics(per_sample);
}

}  // namespace fstereo
