#include "fusion_stereo/optimizer.hpp"

#include <cmath>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

RmsProp::RmsProp(std::vector<ParamRef> params, RmsPropConfig cfg) : cfg_(cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("rmsprop: learning rate must be positive");
    if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0)
        throw ConfigError("rmsprop: alpha must lie in (0,1)");
    if (cfg.eps <= 0.0) throw ConfigError("rmsprop: eps must be positive");
    for (ParamRef& p : params) {
        if (!p.trainable) continue;
        params_.push_back(p);
        sq_.emplace_back(p.tensor->shape());
    }
}

void RmsProp::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i].tensor;
        if (!p.has_grad())
            throw ConfigError("rmsprop: parameter '" + params_[i].name +
                              "' has no gradient; run backward first");
        Tensor& s = sq_[i];
        for (size_t j = 0; j < p.values.size(); ++j) {
            const double g = p.grad[j];
            s.values[j] = cfg_.alpha * s.values[j] + (1.0 - cfg_.alpha) * g * g;
            p.values[j] -= cfg_.lr * g / (std::sqrt(s.values[j]) + cfg_.eps);
        }
        apply_precision(p);
    }
}

}  // namespace fstereo
