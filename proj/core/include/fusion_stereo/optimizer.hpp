#pragma once

#include <vector>

#include "fusion_stereo/network.hpp"

namespace fstereo {

struct RmsPropConfig {
    double lr = 1e-3;
    double alpha = 0.99;
    double eps = 1e-8;
};

// Keeps a running mean of squared gradients per trainable parameter:
// s <- alpha*s + (1-alpha)*g^2, p <- p - lr * g / (sqrt(s) + eps).
class RmsProp {
public:
    RmsProp(std::vector<ParamRef> params, RmsPropConfig cfg);
    void step();

private:
    std::vector<ParamRef> params_;  // trainable only
    std::vector<Tensor> sq_;
    RmsPropConfig cfg_;
};

}  // namespace fstereo
