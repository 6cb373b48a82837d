#include "fusion_stereo/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/rng.hpp"

namespace fstereo {

namespace {
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}
}  // namespace

GradCheckResult gradient_check(const ScalarFn& f, const Tensor& x, const Tensor& analytic_grad,
                               double eps, double tol, int64_t max_coords, uint64_t sample_seed) {
    check_same_shape(x, analytic_grad, "gradient_check x/analytic");
    if (eps <= 0.0) throw ConfigError("gradient_check: eps must be positive");

    const int64_t n = x.numel();
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords >= 0 && n > max_coords) {
        Rng rng(sample_seed);
        for (int64_t i = 0; i < max_coords; ++i) {
            const int64_t j =
                i + static_cast<int64_t>(rng.uniform_below(static_cast<uint64_t>(n - i)));
            std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
        }
        coords.resize(static_cast<size_t>(max_coords));
        std::sort(coords.begin(), coords.end());
    }

    Tensor probe = x;
    const double f0 = f(probe);

    GradCheckResult res;
    for (int64_t c : coords) {
        const size_t i = static_cast<size_t>(c);
        const double orig = probe.values[i];
        probe.values[i] = orig + eps;
        const double fp = f(probe);
        probe.values[i] = orig - eps;
        const double fm = f(probe);
        probe.values[i] = orig;

        const double fwd = (fp - f0) / eps;
        const double bwd = (f0 - fm) / eps;
        const double central = (fp - fm) / (2.0 * eps);
        res.checked++;

        if (rel_err(fwd, bwd) > 10.0 * tol) {
            res.kinks.push_back(c);
            continue;
        }
        const double re = rel_err(analytic_grad.values[i], central);
        res.max_rel_err = std::max(res.max_rel_err, re);
        if (re > tol) res.failures.push_back({c, analytic_grad.values[i], central, re});
    }
    return res;
}

Tensor random_projection(const std::vector<int>& shape, uint64_t seed) {
    Tensor r(shape);
    Rng rng(seed);
    for (double& v : r.values) v = rng.uniform(-1.0, 1.0);
    return r;
}

double project(const Tensor& y, const Tensor& r) {
    check_same_shape(y, r, "project y/r");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) acc += y.values[i] * r.values[i];
    return acc;
}

}  // namespace fstereo
