#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// Central-difference verification of an analytic gradient.
//
// Relative error per coordinate is |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8).  Coordinates where the forward and backward one-sided
// differences disagree by more than 10x the tolerance sit on a kink of the
// loss surface (|.|, relu, max); they are reported separately and do not
// count as failures.
struct GradCheckIssue {
    int64_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckResult {
    double max_rel_err = 0.0;  // over smooth coordinates only
    int64_t checked = 0;
    std::vector<GradCheckIssue> failures;
    std::vector<int64_t> kinks;

    bool ok() const { return failures.empty(); }
};

using ScalarFn = std::function<double(const Tensor&)>;

// Perturbs coordinates of x one at a time.  When max_coords >= 0 and the
// tensor is larger, a seeded subset of coordinates is checked instead of all
// of them.
GradCheckResult gradient_check(const ScalarFn& f, const Tensor& x, const Tensor& analytic_grad,
                               double eps = 1e-5, double tol = 1e-4, int64_t max_coords = -1,
                               uint64_t sample_seed = 7);

// Helpers for checking vector-valued ops through a fixed random projection:
// L(x) = sum_i r_i * y_i(x), so dL/dx is backward(x, r).
Tensor random_projection(const std::vector<int>& shape, uint64_t seed);
double project(const Tensor& y, const Tensor& r);

}  // namespace fstereo
