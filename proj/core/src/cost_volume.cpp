#include "fusion_stereo/cost_volume.hpp"

#include <vector>

#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/ops.hpp"

namespace fstereo {

Tensor build_cost_volume(const Tensor& fl, const Tensor& fr, int n_disp) {
    if (fl.ndim() != 3)
        throw ShapeError("build_cost_volume: features must be [C,H,W], got " + fl.shape_str());
    check_same_shape(fl, fr, "build_cost_volume left/right features");
    const int c_n = fl.dim(0), h = fl.dim(1), w = fl.dim(2);
    if (n_disp < 1) throw ConfigError("build_cost_volume: n_disp must be >= 1");
    if (n_disp > w)
        throw ShapeError("build_cost_volume: disparity count " + std::to_string(n_disp) +
                         " exceeds feature width " + std::to_string(w));

    Tensor out({2 * c_n, h, w, n_disp});
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double vl = fl.values[static_cast<size_t>((c * h + y) * w + x)];
                double* cell =
                    &out.values[static_cast<size_t>(((c * h + y) * w + x)) * n_disp];
                for (int d = 0; d < n_disp; ++d) cell[d] = vl;
                double* cell_r = &out.values[static_cast<size_t>(
                    (((c_n + c) * h + y) * w + x)) * n_disp];
                const double* frow = &fr.values[static_cast<size_t>((c * h + y) * w)];
                const int d_hi = std::min(n_disp, x + 1);
                for (int d = 0; d < d_hi; ++d) cell_r[d] = frow[x - d];
            }
        }
    }
    return out;
}

void cost_volume_backward(const Tensor& grad_vol, Tensor& grad_left, Tensor& grad_right) {
    if (grad_vol.ndim() != 4)
        throw ShapeError("cost_volume_backward: expected [2C,H,W,D], got " + grad_vol.shape_str());
    if (grad_vol.dim(0) % 2 != 0)
        throw ShapeError("cost_volume_backward: dimension 0 must be even, got " +
                         std::to_string(grad_vol.dim(0)));
    const int c_n = grad_vol.dim(0) / 2, h = grad_vol.dim(1), w = grad_vol.dim(2),
              n_disp = grad_vol.dim(3);
    grad_left = Tensor({c_n, h, w});
    grad_right = Tensor({c_n, h, w});
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double* cell =
                    &grad_vol.values[static_cast<size_t>(((c * h + y) * w + x)) * n_disp];
                double acc = 0.0;
                for (int d = 0; d < n_disp; ++d) acc += cell[d];
                grad_left.values[static_cast<size_t>((c * h + y) * w + x)] = acc;

                // right feature at column x contributes to volume column x+d
                double acc_r = 0.0;
                const int d_hi = std::min(n_disp, w - x);
                for (int d = 0; d < d_hi; ++d) {
                    acc_r += grad_vol.values[static_cast<size_t>(
                        (((c_n + c) * h + y) * w + (x + d))) * n_disp + d];
                }
                grad_right.values[static_cast<size_t>((c * h + y) * w + x)] = acc_r;
            }
        }
    }
}

Tensor soft_argmin(const Tensor& cost, double d_scale) {
    if (cost.ndim() != 4 || cost.dim(0) != 1)
        throw ShapeError("soft_argmin: expected [1,H,W,D], got " + cost.shape_str());
    const int h = cost.dim(1), w = cost.dim(2), n_disp = cost.dim(3);
    Tensor out({h, w});
    std::vector<double> weights(static_cast<size_t>(n_disp));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* cell = &cost.values[static_cast<size_t>((y * w + x)) * n_disp];
            softmax_neg_span(cell, weights.data(), n_disp);
            double ybar = 0.0;
            for (int d = 0; d < n_disp; ++d) ybar += static_cast<double>(d) * weights[static_cast<size_t>(d)];
            out.values[static_cast<size_t>(y * w + x)] = d_scale * ybar;
        }
    }
    apply_precision(out);
    return out;
}

Tensor soft_argmin_backward(const Tensor& cost, double d_scale, const Tensor& grad_out) {
    const int h = cost.dim(1), w = cost.dim(2), n_disp = cost.dim(3);
    if (grad_out.ndim() != 2 || grad_out.dim(0) != h || grad_out.dim(1) != w)
        throw ShapeError("soft_argmin_backward: grad shape " + grad_out.shape_str() +
                         " does not match [H,W]");
    Tensor g(cost.shape());
    std::vector<double> weights(static_cast<size_t>(n_disp));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* cell = &cost.values[static_cast<size_t>((y * w + x)) * n_disp];
            softmax_neg_span(cell, weights.data(), n_disp);
            double ybar = 0.0;
            for (int d = 0; d < n_disp; ++d) ybar += static_cast<double>(d) * weights[static_cast<size_t>(d)];
            const double go = grad_out.values[static_cast<size_t>(y * w + x)] * d_scale;
            double* gcell = &g.values[static_cast<size_t>((y * w + x)) * n_disp];
            for (int d = 0; d < n_disp; ++d) {
                gcell[d] = go * weights[static_cast<size_t>(d)] * (ybar - static_cast<double>(d));
            }
        }
    }
    return g;
}

}  // namespace fstereo
