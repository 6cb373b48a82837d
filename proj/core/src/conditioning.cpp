#include "fusion_stereo/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/ops.hpp"

namespace fstereo {

namespace {

int64_t channel_chunk(const Tensor& x) {
    if (x.ndim() < 2) throw ShapeError("batch_norm: input must be channel-first, got " + x.shape_str());
    return x.numel() / x.dim(0);
}

void check_field_shapes(const Tensor& x, const Tensor& gamma_field, const Tensor& beta_field) {
    if (x.ndim() != 4)
        throw ShapeError("conditioned_norm: input must be [C,H,W,D], got " + x.shape_str());
    check_same_shape(gamma_field, beta_field, "conditioned_norm gamma/beta fields");
    if (gamma_field.ndim() != 4)
        throw ShapeError("conditioned_norm: fields must be [H,W,D,C], got " +
                         gamma_field.shape_str());
    const bool match = gamma_field.dim(0) == x.dim(1) && gamma_field.dim(1) == x.dim(2) &&
                       gamma_field.dim(2) == x.dim(3) && gamma_field.dim(3) == x.dim(0);
    if (!match)
        throw ShapeError("conditioned_norm: field shape " + gamma_field.shape_str() +
                         " does not match input " + x.shape_str());
}

// Shared statistics step: fills cache->xhat and cache->inv_std, updates the
// running buffers in training mode.
void normalize_input(const Tensor& x, Tensor& running_mean, Tensor& running_var, bool training,
                     double momentum, double eps, NormCache& cache) {
    const int c_n = x.dim(0);
    const int64_t chunk = channel_chunk(x);
    if (running_mean.ndim() != 1 || running_mean.dim(0) != c_n)
        throw ShapeError("batch_norm: running_mean must be [C], got " + running_mean.shape_str());
    check_same_shape(running_mean, running_var, "batch_norm running stats");

    cache.xhat = Tensor(x.shape());
    cache.inv_std = Tensor({c_n});
    cache.count = chunk;
    cache.training = training;

    for (int c = 0; c < c_n; ++c) {
        const double* xc = &x.values[static_cast<size_t>(c) * static_cast<size_t>(chunk)];
        double mean, var;
        if (training) {
            double acc = 0.0;
            for (int64_t i = 0; i < chunk; ++i) acc += xc[i];
            mean = acc / static_cast<double>(chunk);
            double acc2 = 0.0;
            for (int64_t i = 0; i < chunk; ++i) {
                const double dev = xc[i] - mean;
                acc2 += dev * dev;
            }
            var = acc2 / static_cast<double>(chunk);
            running_mean.values[static_cast<size_t>(c)] =
                (1.0 - momentum) * running_mean.values[static_cast<size_t>(c)] + momentum * mean;
            running_var.values[static_cast<size_t>(c)] =
                (1.0 - momentum) * running_var.values[static_cast<size_t>(c)] + momentum * var;
        } else {
            mean = running_mean.values[static_cast<size_t>(c)];
            var = running_var.values[static_cast<size_t>(c)];
        }
        const double inv_std = 1.0 / std::sqrt(var + eps);
        cache.inv_std.values[static_cast<size_t>(c)] = inv_std;
        double* xh = &cache.xhat.values[static_cast<size_t>(c) * static_cast<size_t>(chunk)];
        for (int64_t i = 0; i < chunk; ++i) xh[i] = (xc[i] - mean) * inv_std;
    }
}

// dx from dxhat: training mode couples through the batch statistics,
// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
void backprop_through_stats(const NormCache& cache, const Tensor& dxhat, Tensor& dx) {
    const int c_n = cache.inv_std.dim(0);
    const int64_t chunk = cache.count;
    dx = Tensor(cache.xhat.shape());
    for (int c = 0; c < c_n; ++c) {
        const size_t base = static_cast<size_t>(c) * static_cast<size_t>(chunk);
        const double* dxh = &dxhat.values[base];
        const double* xh = &cache.xhat.values[base];
        const double inv_std = cache.inv_std.values[static_cast<size_t>(c)];
        double* out = &dx.values[base];
        if (!cache.training) {
            for (int64_t i = 0; i < chunk; ++i) out[i] = dxh[i] * inv_std;
            continue;
        }
        double sum_d = 0.0, sum_dx = 0.0;
        for (int64_t i = 0; i < chunk; ++i) sum_d += dxh[i];
        for (int64_t i = 0; i < chunk; ++i) sum_dx += dxh[i] * xh[i];
        const double mean_d = sum_d / static_cast<double>(chunk);
        const double mean_dx = sum_dx / static_cast<double>(chunk);
        for (int64_t i = 0; i < chunk; ++i)
            out[i] = inv_std * (dxh[i] - mean_d - xh[i] * mean_dx);
    }
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps,
                  NormCache* cache) {
    const int c_n = x.dim(0);
    if (gamma.ndim() != 1 || gamma.dim(0) != c_n)
        throw ShapeError("batch_norm: gamma must be [C], got " + gamma.shape_str());
    check_same_shape(gamma, beta, "batch_norm gamma/beta");

    NormCache local;
    NormCache& cc = cache ? *cache : local;
    normalize_input(x, running_mean, running_var, training, momentum, eps, cc);

    const int64_t chunk = cc.count;
    Tensor out(x.shape());
    for (int c = 0; c < c_n; ++c) {
        const size_t base = static_cast<size_t>(c) * static_cast<size_t>(chunk);
        const double g = gamma.values[static_cast<size_t>(c)];
        const double b = beta.values[static_cast<size_t>(c)];
        const double* xh = &cc.xhat.values[base];
        double* o = &out.values[base];
        for (int64_t i = 0; i < chunk; ++i) o[i] = g * xh[i] + b;
    }
    apply_precision(out);
    return out;
}

BatchNormGrads batch_norm_backward(const NormCache& cache, const Tensor& gamma,
                                   const Tensor& grad_out) {
    const int c_n = cache.inv_std.dim(0);
    const int64_t chunk = cache.count;
    check_same_shape(cache.xhat, grad_out, "batch_norm_backward grad");

    BatchNormGrads grads;
    grads.gamma = Tensor({c_n});
    grads.beta = Tensor({c_n});
    Tensor dxhat(cache.xhat.shape());
    for (int c = 0; c < c_n; ++c) {
        const size_t base = static_cast<size_t>(c) * static_cast<size_t>(chunk);
        const double* g = &grad_out.values[base];
        const double* xh = &cache.xhat.values[base];
        double dg = 0.0, db = 0.0;
        for (int64_t i = 0; i < chunk; ++i) {
            dg += g[i] * xh[i];
            db += g[i];
        }
        grads.gamma.values[static_cast<size_t>(c)] = dg;
        grads.beta.values[static_cast<size_t>(c)] = db;
        const double gv = gamma.values[static_cast<size_t>(c)];
        double* dxh = &dxhat.values[base];
        for (int64_t i = 0; i < chunk; ++i) dxh[i] = g[i] * gv;
    }
    backprop_through_stats(cache, dxhat, grads.input);
    return grads;
}

Tensor conditioned_norm(const Tensor& x, const Tensor& gamma_field, const Tensor& beta_field,
                        Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                        double eps, NormCache* cache) {
    check_field_shapes(x, gamma_field, beta_field);
    NormCache local;
    NormCache& cc = cache ? *cache : local;
    normalize_input(x, running_mean, running_var, training, momentum, eps, cc);

    const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2), d = x.dim(3);
    Tensor out(x.shape());
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xw = 0; xw < w; ++xw) {
                const size_t xbase = static_cast<size_t>(((c * h + y) * w + xw)) * d;
                const size_t fbase = static_cast<size_t>(((y * w + xw))) * d * c_n;
                for (int dd = 0; dd < d; ++dd) {
                    const size_t fi = fbase + static_cast<size_t>(dd) * c_n + static_cast<size_t>(c);
                    out.values[xbase + static_cast<size_t>(dd)] =
                        gamma_field.values[fi] * cc.xhat.values[xbase + static_cast<size_t>(dd)] +
                        beta_field.values[fi];
                }
            }
        }
    }
    apply_precision(out);
    return out;
}

ConditionedNormGrads conditioned_norm_backward(const NormCache& cache, const Tensor& gamma_field,
                                               const Tensor& grad_out) {
    check_same_shape(cache.xhat, grad_out, "conditioned_norm_backward grad");
    const int c_n = cache.xhat.dim(0), h = cache.xhat.dim(1), w = cache.xhat.dim(2),
              d = cache.xhat.dim(3);

    ConditionedNormGrads grads;
    grads.gamma_field = Tensor(gamma_field.shape());
    grads.beta_field = Tensor(gamma_field.shape());
    Tensor dxhat(cache.xhat.shape());
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xw = 0; xw < w; ++xw) {
                const size_t xbase = static_cast<size_t>(((c * h + y) * w + xw)) * d;
                const size_t fbase = static_cast<size_t>(((y * w + xw))) * d * c_n;
                for (int dd = 0; dd < d; ++dd) {
                    const size_t xi = xbase + static_cast<size_t>(dd);
                    const size_t fi = fbase + static_cast<size_t>(dd) * c_n + static_cast<size_t>(c);
                    const double g = grad_out.values[xi];
                    grads.gamma_field.values[fi] = g * cache.xhat.values[xi];
                    grads.beta_field.values[fi] = g;
                    dxhat.values[xi] = g * gamma_field.values[fi];
                }
            }
        }
    }
    backprop_through_stats(cache, dxhat, grads.input);
    return grads;
}

// ---------------------------------------------------------------------------
// Categorical producer
// ---------------------------------------------------------------------------

FieldPair categorical_fields(const SparseDisparityMap& lidar, double d_max,
                             const Tensor& gamma_table, const Tensor& beta_table,
                             const Tensor& gamma_invalid, const Tensor& beta_invalid) {
    if (gamma_table.ndim() != 3)
        throw ShapeError("categorical_fields: tables must be [n_bins,D,C], got " +
                         gamma_table.shape_str());
    check_same_shape(gamma_table, beta_table, "categorical tables");
    const int n_bins = gamma_table.dim(0), n_disp = gamma_table.dim(1), c_n = gamma_table.dim(2);
    if (gamma_invalid.ndim() != 2 || gamma_invalid.dim(0) != n_disp ||
        gamma_invalid.dim(1) != c_n)
        throw ShapeError("categorical_fields: invalid params must be [D,C], got " +
                         gamma_invalid.shape_str());

    const int h = lidar.height, w = lidar.width;
    const size_t block = static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);
    FieldPair out{Tensor({h, w, n_disp, c_n}), Tensor({h, w, n_disp, c_n})};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t dst = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                static_cast<size_t>(x)) * block;
            if (lidar.is_valid(y, x)) {
                const int k = discretize_disparity(lidar.at(y, x), d_max, n_bins);
                const size_t src = static_cast<size_t>(k) * block;
                std::memcpy(&out.gamma.values[dst], &gamma_table.values[src],
                            block * sizeof(double));
                std::memcpy(&out.beta.values[dst], &beta_table.values[src],
                            block * sizeof(double));
            } else {
                std::memcpy(&out.gamma.values[dst], gamma_invalid.values.data(),
                            block * sizeof(double));
                std::memcpy(&out.beta.values[dst], beta_invalid.values.data(),
                            block * sizeof(double));
            }
        }
    }
    return out;
}

CategoricalGrads categorical_fields_backward(const SparseDisparityMap& lidar, double d_max,
                                             int n_bins, const Tensor& grad_gamma_field,
                                             const Tensor& grad_beta_field) {
    const int h = grad_gamma_field.dim(0), w = grad_gamma_field.dim(1),
              n_disp = grad_gamma_field.dim(2), c_n = grad_gamma_field.dim(3);
    const size_t block = static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);

    CategoricalGrads g;
    g.gamma_table = Tensor({n_bins, n_disp, c_n});
    g.beta_table = Tensor({n_bins, n_disp, c_n});
    g.gamma_invalid = Tensor({n_disp, c_n});
    g.beta_invalid = Tensor({n_disp, c_n});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t src = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                static_cast<size_t>(x)) * block;
            double* gdst;
            double* bdst;
            if (lidar.is_valid(y, x)) {
                const int k = discretize_disparity(lidar.at(y, x), d_max, n_bins);
                gdst = &g.gamma_table.values[static_cast<size_t>(k) * block];
                bdst = &g.beta_table.values[static_cast<size_t>(k) * block];
            } else {
                gdst = g.gamma_invalid.values.data();
                bdst = g.beta_invalid.values.data();
            }
            for (size_t i = 0; i < block; ++i) {
                gdst[i] += grad_gamma_field.values[src + i];
                bdst[i] += grad_beta_field.values[src + i];
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Hierarchical producer
// ---------------------------------------------------------------------------

FieldPair hier_fields(const SparseDisparityMap& lidar, double d_max, const Tensor& g_table,
                      const Tensor& h_table, const Tensor& phi_g, const Tensor& psi_g,
                      const Tensor& phi_h, const Tensor& psi_h, const Tensor& gamma_invalid,
                      const Tensor& beta_invalid) {
    if (g_table.ndim() != 2)
        throw ShapeError("hier_fields: code tables must be [n_bins,C], got " + g_table.shape_str());
    check_same_shape(g_table, h_table, "hier code tables");
    if (phi_g.ndim() != 2)
        throw ShapeError("hier_fields: modulation must be [D,C], got " + phi_g.shape_str());
    const int n_bins = g_table.dim(0), c_n = g_table.dim(1);
    const int n_disp = phi_g.dim(0);
    if (phi_g.dim(1) != c_n)
        throw ShapeError("hier_fields: modulation dimension 1 must equal C=" +
                         std::to_string(c_n) + ", got " + phi_g.shape_str());

    const int h = lidar.height, w = lidar.width;
    const size_t block = static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);
    FieldPair out{Tensor({h, w, n_disp, c_n}), Tensor({h, w, n_disp, c_n})};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t dst = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                static_cast<size_t>(x)) * block;
            if (lidar.is_valid(y, x)) {
                const int k = discretize_disparity(lidar.at(y, x), d_max, n_bins);
                const double* gk = &g_table.values[static_cast<size_t>(k) * c_n];
                const double* hk = &h_table.values[static_cast<size_t>(k) * c_n];
                for (size_t i = 0; i < block; ++i) {
                    const size_t c = i % static_cast<size_t>(c_n);
                    out.gamma.values[dst + i] = phi_g.values[i] * gk[c] + psi_g.values[i];
                    out.beta.values[dst + i] = phi_h.values[i] * hk[c] + psi_h.values[i];
                }
            } else {
                std::memcpy(&out.gamma.values[dst], gamma_invalid.values.data(),
                            block * sizeof(double));
                std::memcpy(&out.beta.values[dst], beta_invalid.values.data(),
                            block * sizeof(double));
            }
        }
    }
    return out;
}

HierGrads hier_fields_backward(const SparseDisparityMap& lidar, double d_max,
                               const Tensor& g_table, const Tensor& h_table, const Tensor& phi_g,
                               const Tensor& psi_g, const Tensor& phi_h, const Tensor& psi_h,
                               const Tensor& grad_gamma_field, const Tensor& grad_beta_field) {
    (void)psi_g;
    (void)psi_h;
    const int n_bins = g_table.dim(0), c_n = g_table.dim(1);
    const int n_disp = phi_g.dim(0);
    const int h = grad_gamma_field.dim(0), w = grad_gamma_field.dim(1);
    const size_t block = static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);

    HierGrads g;
    g.g_table = Tensor({n_bins, c_n});
    g.h_table = Tensor({n_bins, c_n});
    g.phi_g = Tensor({n_disp, c_n});
    g.psi_g = Tensor({n_disp, c_n});
    g.phi_h = Tensor({n_disp, c_n});
    g.psi_h = Tensor({n_disp, c_n});
    g.gamma_invalid = Tensor({n_disp, c_n});
    g.beta_invalid = Tensor({n_disp, c_n});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t src = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                static_cast<size_t>(x)) * block;
            if (lidar.is_valid(y, x)) {
                const int k = discretize_disparity(lidar.at(y, x), d_max, n_bins);
                const double* gk = &g_table.values[static_cast<size_t>(k) * c_n];
                const double* hk = &h_table.values[static_cast<size_t>(k) * c_n];
                double* dgk = &g.g_table.values[static_cast<size_t>(k) * c_n];
                double* dhk = &g.h_table.values[static_cast<size_t>(k) * c_n];
                for (size_t i = 0; i < block; ++i) {
                    const size_t c = i % static_cast<size_t>(c_n);
                    const double dg = grad_gamma_field.values[src + i];
                    const double db = grad_beta_field.values[src + i];
                    g.phi_g.values[i] += dg * gk[c];
                    g.psi_g.values[i] += dg;
                    dgk[c] += dg * phi_g.values[i];
                    g.phi_h.values[i] += db * hk[c];
                    g.psi_h.values[i] += db;
                    dhk[c] += db * phi_h.values[i];
                }
            } else {
                for (size_t i = 0; i < block; ++i) {
                    g.gamma_invalid.values[i] += grad_gamma_field.values[src + i];
                    g.beta_invalid.values[i] += grad_beta_field.values[src + i];
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Conditional batch norm baseline
// ---------------------------------------------------------------------------

FieldPair cbn_fields(const SparseDisparityMap& lidar, double d_max, int n_disp, const Tensor& w1,
                     const Tensor& b1, const Tensor& w2, const Tensor& b2,
                     const Tensor& uncond_gamma, const Tensor& uncond_beta) {
    const int nh = w1.dim(0);
    if (w2.ndim() != 2 || w2.dim(1) != nh)
        throw ShapeError("cbn_fields: w2 must be [2C,nh], got " + w2.shape_str());
    const int c_n = w2.dim(0) / 2;
    if (w2.dim(0) != 2 * c_n || b2.dim(0) != 2 * c_n)
        throw ShapeError("cbn_fields: output head must have 2C rows");
    if (uncond_gamma.ndim() != 1 || uncond_gamma.dim(0) != c_n)
        throw ShapeError("cbn_fields: unconditional params must be [C], got " +
                         uncond_gamma.shape_str());

    const int h = lidar.height, w = lidar.width;
    FieldPair out{Tensor({h, w, n_disp, c_n}), Tensor({h, w, n_disp, c_n})};
    std::vector<double> hidden(static_cast<size_t>(nh));
    std::vector<double> head(static_cast<size_t>(2 * c_n));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* gsrc;
            const double* bsrc;
            if (lidar.is_valid(y, x)) {
                const double u = lidar.at(y, x) / d_max;
                for (int j = 0; j < nh; ++j)
                    hidden[static_cast<size_t>(j)] =
                        std::tanh(w1.values[static_cast<size_t>(j)] * u +
                                  b1.values[static_cast<size_t>(j)]);
                for (int i = 0; i < 2 * c_n; ++i) {
                    double acc = b2.values[static_cast<size_t>(i)];
                    const double* wrow = &w2.values[static_cast<size_t>(i) * nh];
                    for (int j = 0; j < nh; ++j) acc += wrow[j] * hidden[static_cast<size_t>(j)];
                    head[static_cast<size_t>(i)] = acc;
                }
                gsrc = head.data();
                bsrc = head.data() + c_n;
            } else {
                gsrc = uncond_gamma.values.data();
                bsrc = uncond_beta.values.data();
            }
            const size_t base = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                 static_cast<size_t>(x)) *
                                static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);
            for (int dd = 0; dd < n_disp; ++dd) {
                std::memcpy(&out.gamma.values[base + static_cast<size_t>(dd) * c_n], gsrc,
                            static_cast<size_t>(c_n) * sizeof(double));
                std::memcpy(&out.beta.values[base + static_cast<size_t>(dd) * c_n], bsrc,
                            static_cast<size_t>(c_n) * sizeof(double));
            }
        }
    }
    return out;
}

CbnGrads cbn_fields_backward(const SparseDisparityMap& lidar, double d_max, const Tensor& w1,
                             const Tensor& b1, const Tensor& w2, const Tensor& b2,
                             const Tensor& grad_gamma_field, const Tensor& grad_beta_field) {
    const int nh = w1.dim(0);
    const int c_n = w2.dim(0) / 2;
    const int h = grad_gamma_field.dim(0), w = grad_gamma_field.dim(1),
              n_disp = grad_gamma_field.dim(2);

    CbnGrads g;
    g.w1 = Tensor({nh});
    g.b1 = Tensor({nh});
    g.w2 = Tensor({2 * c_n, nh});
    g.b2 = Tensor({2 * c_n});
    g.uncond_gamma = Tensor({c_n});
    g.uncond_beta = Tensor({c_n});

    std::vector<double> hidden(static_cast<size_t>(nh));
    std::vector<double> dout(static_cast<size_t>(2 * c_n));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t base = (static_cast<size_t>(y) * static_cast<size_t>(w) +
                                 static_cast<size_t>(x)) *
                                static_cast<size_t>(n_disp) * static_cast<size_t>(c_n);
            // fields are constant along d, so the pixel gradient is the sum
            // over the disparity axis
            if (!lidar.is_valid(y, x)) {
                for (int c = 0; c < c_n; ++c) {
                    double ag = 0.0, ab = 0.0;
                    for (int dd = 0; dd < n_disp; ++dd) {
                        ag += grad_gamma_field.values[base + static_cast<size_t>(dd) * c_n +
                                                      static_cast<size_t>(c)];
                        ab += grad_beta_field.values[base + static_cast<size_t>(dd) * c_n +
                                                     static_cast<size_t>(c)];
                    }
                    g.uncond_gamma.values[static_cast<size_t>(c)] += ag;
                    g.uncond_beta.values[static_cast<size_t>(c)] += ab;
                }
                continue;
            }
            const double u = lidar.at(y, x) / d_max;
            for (int j = 0; j < nh; ++j)
                hidden[static_cast<size_t>(j)] = std::tanh(
                    w1.values[static_cast<size_t>(j)] * u + b1.values[static_cast<size_t>(j)]);
            for (int c = 0; c < c_n; ++c) {
                double ag = 0.0, ab = 0.0;
                for (int dd = 0; dd < n_disp; ++dd) {
                    ag += grad_gamma_field.values[base + static_cast<size_t>(dd) * c_n +
                                                  static_cast<size_t>(c)];
                    ab += grad_beta_field.values[base + static_cast<size_t>(dd) * c_n +
                                                 static_cast<size_t>(c)];
                }
                dout[static_cast<size_t>(c)] = ag;
                dout[static_cast<size_t>(c_n + c)] = ab;
            }
            for (int i = 0; i < 2 * c_n; ++i) {
                const double d = dout[static_cast<size_t>(i)];
                g.b2.values[static_cast<size_t>(i)] += d;
                double* wrow = &g.w2.values[static_cast<size_t>(i) * nh];
                for (int j = 0; j < nh; ++j) wrow[j] += d * hidden[static_cast<size_t>(j)];
            }
            for (int j = 0; j < nh; ++j) {
                double dh = 0.0;
                for (int i = 0; i < 2 * c_n; ++i)
                    dh += dout[static_cast<size_t>(i)] * w2.values[static_cast<size_t>(i) * nh + j];
                const double hv = hidden[static_cast<size_t>(j)];
                const double dpre = dh * (1.0 - hv * hv);
                g.b1.values[static_cast<size_t>(j)] += dpre;
                g.w1.values[static_cast<size_t>(j)] += dpre * u;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Continuous producer
// ---------------------------------------------------------------------------

Tensor sparse_to_dense_input(const SparseDisparityMap& lidar, double d_max) {
    Tensor out({2, lidar.height, lidar.width});
    const size_t plane = static_cast<size_t>(lidar.height) * static_cast<size_t>(lidar.width);
    for (size_t i = 0; i < plane; ++i) {
        if (lidar.valid[i]) {
            out.values[i] = lidar.disparity[i] / d_max;
            out.values[plane + i] = 1.0;
        } else {
            out.values[i] = kInvalidFill;
            out.values[plane + i] = 0.0;
        }
    }
    return out;
}

Tensor continuous_trunk_forward(const Tensor& input, const Tensor& conv1_w, const Tensor& conv1_b,
                                const Tensor& conv2_w, const Tensor& conv2_b,
                                ContinuousTrunkCache* cache) {
    ContinuousTrunkCache local;
    ContinuousTrunkCache& cc = cache ? *cache : local;
    cc.input = input;
    cc.pre1 = conv2d(input, conv1_w, conv1_b, 1, 1);
    cc.act1 = relu(cc.pre1);
    cc.pre2 = conv2d(cc.act1, conv2_w, conv2_b, 1, 1);
    for (size_t i = 0; i < cc.pre2.values.size(); ++i) cc.pre2.values[i] += cc.act1.values[i];
    cc.out = relu(cc.pre2);
    return cc.out;
}

ContinuousTrunkGrads continuous_trunk_backward(const ContinuousTrunkCache& cache,
                                               const Tensor& conv1_w, const Tensor& conv2_w,
                                               const Tensor& grad_out) {
    Tensor dpre2 = relu_backward(cache.pre2, grad_out);
    Conv2dGrads g2 = conv2d_backward(cache.act1, conv2_w, true, 1, 1, dpre2);
    Tensor dact1 = g2.input;
    for (size_t i = 0; i < dact1.values.size(); ++i) dact1.values[i] += dpre2.values[i];
    Tensor dpre1 = relu_backward(cache.pre1, dact1);
    Conv2dGrads g1 = conv2d_backward(cache.input, conv1_w, true, 1, 1, dpre1);
    return {g1.weights, g1.bias, g2.weights, g2.bias};
}

FieldPair continuous_head_forward(const Tensor& trunk_out, const Tensor& head_w,
                                  const Tensor& head_b, int n_disp, int channels) {
    if (head_w.dim(0) != 2 * n_disp * channels)
        throw ShapeError("continuous_head_forward: head must emit 2*D*C channels, got " +
                         head_w.shape_str());
    const Tensor raw = conv2d(trunk_out, head_w, head_b, 1, 0);
    const int h = raw.dim(1), w = raw.dim(2);
    const int64_t dc = static_cast<int64_t>(n_disp) * channels;
    FieldPair out{Tensor({h, w, n_disp, channels}), Tensor({h, w, n_disp, channels})};
    for (int64_t i = 0; i < dc; ++i) {
        const double* graw = &raw.values[static_cast<size_t>(i) * h * w];
        const double* braw = &raw.values[static_cast<size_t>(dc + i) * h * w];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t fi =
                    (static_cast<size_t>(y) * w + static_cast<size_t>(x)) * static_cast<size_t>(dc) +
                    static_cast<size_t>(i);
                out.gamma.values[fi] = graw[y * w + x];
                out.beta.values[fi] = braw[y * w + x];
            }
        }
    }
    return out;
}

ContinuousHeadGrads continuous_head_backward(const Tensor& trunk_out, const Tensor& head_w,
                                             const Tensor& grad_gamma_field,
                                             const Tensor& grad_beta_field) {
    const int h = grad_gamma_field.dim(0), w = grad_gamma_field.dim(1),
              n_disp = grad_gamma_field.dim(2), channels = grad_gamma_field.dim(3);
    const int64_t dc = static_cast<int64_t>(n_disp) * channels;
    Tensor draw({static_cast<int>(2 * dc), h, w});
    for (int64_t i = 0; i < dc; ++i) {
        double* graw = &draw.values[static_cast<size_t>(i) * h * w];
        double* braw = &draw.values[static_cast<size_t>(dc + i) * h * w];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t fi =
                    (static_cast<size_t>(y) * w + static_cast<size_t>(x)) * static_cast<size_t>(dc) +
                    static_cast<size_t>(i);
                graw[y * w + x] = grad_gamma_field.values[fi];
                braw[y * w + x] = grad_beta_field.values[fi];
            }
        }
    }
    Conv2dGrads g = conv2d_backward(trunk_out, head_w, true, 1, 0, draw);
    return {g.weights, g.bias, g.input};
}

int64_t categorical_params_per_layer(int n_bins, int n_disp, int channels) {
    return 2LL * n_bins * n_disp * channels + 2LL * n_disp * channels;
}

int64_t hier_params_per_layer(int n_bins, int n_disp, int channels) {
    return 2LL * n_bins * channels + 4LL * n_disp * channels + 2LL * n_disp * channels;
}

}  // namespace fstereo
