#include "fusion_stereo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace fstereo {

namespace {

void check_conv2d_shapes(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.ndim() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + x.shape_str());
    if (w.ndim() != 4)
        throw ShapeError("conv2d: weights must be [Cout,Cin,kH,kW], got " + w.shape_str());
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
    if (w.dim(1) != x.dim(0)) {
        throw ShapeError("conv2d: weight dimension 1 (input channels) is " +
                         std::to_string(w.dim(1)) + " but input has " + std::to_string(x.dim(0)) +
                         " channels");
    }
    if (w.dim(2) > x.dim(1) + 2 * pad) {
        throw ShapeError("conv2d: kernel dimension 2 (kH=" + std::to_string(w.dim(2)) +
                         ") exceeds padded input height " + std::to_string(x.dim(1) + 2 * pad));
    }
    if (w.dim(3) > x.dim(2) + 2 * pad) {
        throw ShapeError("conv2d: kernel dimension 3 (kW=" + std::to_string(w.dim(3)) +
                         ") exceeds padded input width " + std::to_string(x.dim(2) + 2 * pad));
    }
    if (b.numel() > 0 && (b.ndim() != 1 || b.dim(0) != w.dim(0))) {
        throw ShapeError("conv2d: bias dimension 0 must equal Cout=" + std::to_string(w.dim(0)) +
                         ", got " + b.shape_str());
    }
}

void check_conv3d_shapes(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.ndim() != 4) throw ShapeError("conv3d: input must be [C,H,W,D], got " + x.shape_str());
    if (w.ndim() != 5)
        throw ShapeError("conv3d: weights must be [Cout,Cin,k,k,k], got " + w.shape_str());
    if (stride < 1) throw ConfigError("conv3d: stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw ConfigError("conv3d: pad must be >= 0");
    if (w.dim(1) != x.dim(0)) {
        throw ShapeError("conv3d: weight dimension 1 (input channels) is " +
                         std::to_string(w.dim(1)) + " but input has " + std::to_string(x.dim(0)) +
                         " channels");
    }
    for (int axis = 0; axis < 3; ++axis) {
        if (w.dim(2 + axis) > x.dim(1 + axis) + 2 * pad) {
            throw ShapeError("conv3d: kernel dimension " + std::to_string(2 + axis) +
                             " exceeds padded input extent " +
                             std::to_string(x.dim(1 + axis) + 2 * pad));
        }
    }
    if (b.numel() > 0 && (b.ndim() != 1 || b.dim(0) != w.dim(0))) {
        throw ShapeError("conv3d: bias dimension 0 must equal Cout=" + std::to_string(w.dim(0)) +
                         ", got " + b.shape_str());
    }
}

int out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_conv2d_shapes(x, w, b, stride, pad);
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co_n = w.dim(0), kh_n = w.dim(2), kw_n = w.dim(3);
    const int oh_n = out_extent(h, kh_n, stride, pad);
    const int ow_n = out_extent(wd, kw_n, stride, pad);
    const bool has_bias = b.numel() > 0;

    Tensor out({co_n, oh_n, ow_n});
    for (int co = 0; co < co_n; ++co) {
        for (int oh = 0; oh < oh_n; ++oh) {
            double* orow = &out.values[static_cast<size_t>((co * oh_n + oh) * ow_n)];
            if (has_bias) {
                for (int ow = 0; ow < ow_n; ++ow) orow[ow] = b.values[static_cast<size_t>(co)];
            }
            for (int ci = 0; ci < ci_n; ++ci) {
                for (int kh = 0; kh < kh_n; ++kh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= h) continue;
                    const double* xrow = &x.values[static_cast<size_t>((ci * h + ih) * wd)];
                    const double* wrow =
                        &w.values[static_cast<size_t>(((co * ci_n + ci) * kh_n + kh) * kw_n)];
                    for (int kw = 0; kw < kw_n; ++kw) {
                        const double wv = wrow[kw];
                        // ow range where iw = ow*stride - pad + kw stays in frame
                        int ow_lo = 0;
                        while (ow_lo < ow_n && ow_lo * stride - pad + kw < 0) ++ow_lo;
                        for (int ow = ow_lo; ow < ow_n; ++ow) {
                            const int iw = ow * stride - pad + kw;
                            if (iw >= wd) break;
                            orow[ow] += wv * xrow[iw];
                        }
                    }
                }
            }
        }
    }
    apply_precision(out);
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, bool has_bias, int stride, int pad,
                            const Tensor& gout) {
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co_n = w.dim(0), kh_n = w.dim(2), kw_n = w.dim(3);
    const int oh_n = gout.dim(1), ow_n = gout.dim(2);

    Conv2dGrads g;
    g.input = Tensor({ci_n, h, wd});
    g.weights = Tensor({co_n, ci_n, kh_n, kw_n});
    if (has_bias) g.bias = Tensor({co_n});

    if (has_bias) {
        for (int co = 0; co < co_n; ++co) {
            double acc = 0.0;
            const double* grow = &gout.values[static_cast<size_t>(co * oh_n * ow_n)];
            for (int i = 0; i < oh_n * ow_n; ++i) acc += grow[i];
            g.bias.values[static_cast<size_t>(co)] = acc;
        }
    }

    // dW[co,ci,kh,kw] = sum_{oh,ow} gout[co,oh,ow] * x[ci, oh*s-pad+kh, ow*s-pad+kw]
    for (int co = 0; co < co_n; ++co) {
        for (int ci = 0; ci < ci_n; ++ci) {
            for (int kh = 0; kh < kh_n; ++kh) {
                for (int kw = 0; kw < kw_n; ++kw) {
                    double acc = 0.0;
                    for (int oh = 0; oh < oh_n; ++oh) {
                        const int ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= h) continue;
                        const double* grow =
                            &gout.values[static_cast<size_t>((co * oh_n + oh) * ow_n)];
                        const double* xrow = &x.values[static_cast<size_t>((ci * h + ih) * wd)];
                        for (int ow = 0; ow < ow_n; ++ow) {
                            const int iw = ow * stride - pad + kw;
                            if (iw < 0 || iw >= wd) continue;
                            acc += grow[ow] * xrow[iw];
                        }
                    }
                    g.weights.values[static_cast<size_t>(((co * ci_n + ci) * kh_n + kh) * kw_n +
                                                         kw)] = acc;
                }
            }
        }
    }

    // dX[ci,ih,iw] = sum_{co,kh,kw} gout[co,oh,ow] * w[co,ci,kh,kw] at valid (oh,ow)
    for (int ci = 0; ci < ci_n; ++ci) {
        for (int ih = 0; ih < h; ++ih) {
            for (int iw = 0; iw < wd; ++iw) {
                double acc = 0.0;
                for (int co = 0; co < co_n; ++co) {
                    for (int kh = 0; kh < kh_n; ++kh) {
                        const int oh_num = ih + pad - kh;
                        if (oh_num < 0 || oh_num % stride != 0) continue;
                        const int oh = oh_num / stride;
                        if (oh >= oh_n) continue;
                        for (int kw = 0; kw < kw_n; ++kw) {
                            const int ow_num = iw + pad - kw;
                            if (ow_num < 0 || ow_num % stride != 0) continue;
                            const int ow = ow_num / stride;
                            if (ow >= ow_n) continue;
                            acc += gout.values[static_cast<size_t>((co * oh_n + oh) * ow_n + ow)] *
                                   w.values[static_cast<size_t>(((co * ci_n + ci) * kh_n + kh) *
                                                                    kw_n +
                                                                kw)];
                        }
                    }
                }
                g.input.values[static_cast<size_t>((ci * h + ih) * wd + iw)] = acc;
            }
        }
    }
    return g;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_conv3d_shapes(x, w, b, stride, pad);
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2), d = x.dim(3);
    const int co_n = w.dim(0), kh_n = w.dim(2), kw_n = w.dim(3), kd_n = w.dim(4);
    const int oh_n = out_extent(h, kh_n, stride, pad);
    const int ow_n = out_extent(wd, kw_n, stride, pad);
    const int od_n = out_extent(d, kd_n, stride, pad);
    const bool has_bias = b.numel() > 0;

    Tensor out({co_n, oh_n, ow_n, od_n});
    for (int co = 0; co < co_n; ++co) {
        for (int oh = 0; oh < oh_n; ++oh) {
            for (int ow = 0; ow < ow_n; ++ow) {
                double* acc =
                    &out.values[static_cast<size_t>(((co * oh_n + oh) * ow_n + ow) * od_n)];
                if (has_bias) {
                    const double bv = b.values[static_cast<size_t>(co)];
                    for (int od = 0; od < od_n; ++od) acc[od] = bv;
                }
                for (int ci = 0; ci < ci_n; ++ci) {
                    for (int kh = 0; kh < kh_n; ++kh) {
                        const int ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= h) continue;
                        for (int kw = 0; kw < kw_n; ++kw) {
                            const int iw = ow * stride - pad + kw;
                            if (iw < 0 || iw >= wd) continue;
                            const double* xrow =
                                &x.values[static_cast<size_t>(((ci * h + ih) * wd + iw) * d)];
                            const double* wrow = &w.values[static_cast<size_t>(
                                (((co * ci_n + ci) * kh_n + kh) * kw_n + kw) * kd_n)];
                            for (int kd = 0; kd < kd_n; ++kd) {
                                const double wv = wrow[kd];
                                int od_lo = 0;
                                while (od_lo < od_n && od_lo * stride - pad + kd < 0) ++od_lo;
                                for (int od = od_lo; od < od_n; ++od) {
                                    const int id = od * stride - pad + kd;
                                    if (id >= d) break;
                                    acc[od] += wv * xrow[id];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    apply_precision(out);
    return out;
}

Conv3dGrads conv3d_backward(const Tensor& x, const Tensor& w, bool has_bias, int stride, int pad,
                            const Tensor& gout) {
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2), d = x.dim(3);
    const int co_n = w.dim(0), kh_n = w.dim(2), kw_n = w.dim(3), kd_n = w.dim(4);
    const int oh_n = gout.dim(1), ow_n = gout.dim(2), od_n = gout.dim(3);

    Conv3dGrads g;
    g.input = Tensor({ci_n, h, wd, d});
    g.weights = Tensor({co_n, ci_n, kh_n, kw_n, kd_n});
    if (has_bias) g.bias = Tensor({co_n});

    if (has_bias) {
        for (int co = 0; co < co_n; ++co) {
            double acc = 0.0;
            const double* grow = &gout.values[static_cast<size_t>(co) * oh_n * ow_n * od_n];
            const int64_t n = static_cast<int64_t>(oh_n) * ow_n * od_n;
            for (int64_t i = 0; i < n; ++i) acc += grow[i];
            g.bias.values[static_cast<size_t>(co)] = acc;
        }
    }

    for (int co = 0; co < co_n; ++co) {
        for (int ci = 0; ci < ci_n; ++ci) {
            for (int kh = 0; kh < kh_n; ++kh) {
                for (int kw = 0; kw < kw_n; ++kw) {
                    double* wgrow = &g.weights.values[static_cast<size_t>(
                        (((co * ci_n + ci) * kh_n + kh) * kw_n + kw) * kd_n)];
                    for (int oh = 0; oh < oh_n; ++oh) {
                        const int ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= h) continue;
                        for (int ow = 0; ow < ow_n; ++ow) {
                            const int iw = ow * stride - pad + kw;
                            if (iw < 0 || iw >= wd) continue;
                            const double* grow = &gout.values[static_cast<size_t>(
                                ((co * oh_n + oh) * ow_n + ow) * od_n)];
                            const double* xrow =
                                &x.values[static_cast<size_t>(((ci * h + ih) * wd + iw) * d)];
                            for (int kd = 0; kd < kd_n; ++kd) {
                                double acc = 0.0;
                                int od_lo = 0;
                                while (od_lo < od_n && od_lo * stride - pad + kd < 0) ++od_lo;
                                for (int od = od_lo; od < od_n; ++od) {
                                    const int id = od * stride - pad + kd;
                                    if (id >= d) break;
                                    acc += grow[od] * xrow[id];
                                }
                                wgrow[kd] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    // Gather form of the input gradient: deterministic without atomics.
    for (int ci = 0; ci < ci_n; ++ci) {
        for (int ih = 0; ih < h; ++ih) {
            for (int iw = 0; iw < wd; ++iw) {
                double* xg = &g.input.values[static_cast<size_t>(((ci * h + ih) * wd + iw) * d)];
                for (int co = 0; co < co_n; ++co) {
                    for (int kh = 0; kh < kh_n; ++kh) {
                        const int oh_num = ih + pad - kh;
                        if (oh_num < 0 || oh_num % stride != 0) continue;
                        const int oh = oh_num / stride;
                        if (oh >= oh_n) continue;
                        for (int kw = 0; kw < kw_n; ++kw) {
                            const int ow_num = iw + pad - kw;
                            if (ow_num < 0 || ow_num % stride != 0) continue;
                            const int ow = ow_num / stride;
                            if (ow >= ow_n) continue;
                            const double* grow = &gout.values[static_cast<size_t>(
                                ((co * oh_n + oh) * ow_n + ow) * od_n)];
                            const double* wrow = &w.values[static_cast<size_t>(
                                (((co * ci_n + ci) * kh_n + kh) * kw_n + kw) * kd_n)];
                            for (int id = 0; id < d; ++id) {
                                double acc = 0.0;
                                for (int kd = 0; kd < kd_n; ++kd) {
                                    const int od_num = id + pad - kd;
                                    if (od_num < 0 || od_num % stride != 0) continue;
                                    const int od = od_num / stride;
                                    if (od >= od_n) continue;
                                    acc += grow[od] * wrow[kd];
                                }
                                xg[id] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

BatchStats batch_stats(const Tensor& x, const std::vector<int>& reduce_axes) {
    if (reduce_axes.empty()) throw ShapeError("batch_stats: reduction axis set is empty");
    std::vector<bool> reduced(static_cast<size_t>(x.ndim()), false);
    for (int a : reduce_axes) {
        if (a < 0 || a >= x.ndim())
            throw ShapeError("batch_stats: axis " + std::to_string(a) + " out of range for " +
                             x.shape_str());
        if (reduced[static_cast<size_t>(a)])
            throw ShapeError("batch_stats: duplicate axis " + std::to_string(a));
        reduced[static_cast<size_t>(a)] = true;
    }

    std::vector<int> out_shape(x.shape());
    int64_t count = 1;
    for (int a = 0; a < x.ndim(); ++a) {
        if (reduced[static_cast<size_t>(a)]) {
            count *= out_shape[static_cast<size_t>(a)];
            out_shape[static_cast<size_t>(a)] = 1;
        }
    }

    // Row-major odometer scan; each input element maps onto its collapsed
    // output slot so accumulation order is fixed.
    const int nd = x.ndim();
    std::vector<int64_t> out_stride(static_cast<size_t>(nd), 0);
    {
        int64_t s = 1;
        for (int a = nd - 1; a >= 0; --a) {
            out_stride[static_cast<size_t>(a)] = reduced[static_cast<size_t>(a)] ? 0 : s;
            s *= out_shape[static_cast<size_t>(a)];
        }
    }

    BatchStats st{Tensor(out_shape), Tensor(out_shape)};
    std::vector<int> idx(static_cast<size_t>(nd), 0);

    auto scan = [&](auto&& fn) {
        std::fill(idx.begin(), idx.end(), 0);
        int64_t out_flat = 0;
        const int64_t n = x.numel();
        for (int64_t flat = 0; flat < n; ++flat) {
            fn(flat, out_flat);
            for (int a = nd - 1; a >= 0; --a) {
                idx[static_cast<size_t>(a)]++;
                out_flat += out_stride[static_cast<size_t>(a)];
                if (idx[static_cast<size_t>(a)] < x.dim(a)) break;
                out_flat -= out_stride[static_cast<size_t>(a)] * x.dim(a);
                idx[static_cast<size_t>(a)] = 0;
            }
        }
    };

    scan([&](int64_t flat, int64_t out_flat) {
        st.mean.values[static_cast<size_t>(out_flat)] += x.values[static_cast<size_t>(flat)];
    });
    for (double& m : st.mean.values) m /= static_cast<double>(count);
    scan([&](int64_t flat, int64_t out_flat) {
        const double dev =
            x.values[static_cast<size_t>(flat)] - st.mean.values[static_cast<size_t>(out_flat)];
        st.var.values[static_cast<size_t>(out_flat)] += dev * dev;
    });
    for (double& v : st.var.values) v /= static_cast<double>(count);
    return st;
}

void softmax_neg_span(const double* cost, double* weights, int n) {
    double m = -cost[0];
    for (int i = 1; i < n; ++i) m = std::max(m, -cost[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        weights[i] = std::exp(-cost[i] - m);
        sum += weights[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) weights[i] *= inv;
}

std::vector<double> softmax_neg(const std::vector<double>& cost) {
    if (cost.empty()) throw ConfigError("softmax_neg: empty cost vector");
    std::vector<double> w(cost.size());
    softmax_neg_span(cost.data(), w.data(), static_cast<int>(cost.size()));
    return w;
}

double relu_scalar(double v) { return v > 0.0 ? v : 0.0; }

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (size_t i = 0; i < x.values.size(); ++i) out.values[i] = relu_scalar(x.values[i]);
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
    Tensor g(x.shape());
    for (size_t i = 0; i < x.values.size(); ++i) g.values[i] = x.values[i] > 0.0 ? gout.values[i] : 0.0;
    return g;
}

double l1_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    check_same_shape(pred, target, "l1_loss pred/target");
    check_same_shape(pred, mask, "l1_loss pred/mask");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double m = mask.values[i];
        if (m != 0.0 && m != 1.0)
            throw ConfigError("l1_loss: mask entries must be 0 or 1");
        num += m * std::abs(pred.values[i] - target.values[i]);
        den += m;
    }
    if (den == 0.0) throw ConfigError("l1_loss: no supervised pixels");
    return num / den;
}

Tensor l1_loss_backward(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    double den = 0.0;
    for (double m : mask.values) den += m;
    if (den == 0.0) throw ConfigError("l1_loss: no supervised pixels");
    Tensor g(pred.shape());
    for (size_t i = 0; i < pred.values.size(); ++i) {
        if (mask.values[i] == 0.0) continue;
        const double diff = pred.values[i] - target.values[i];
        g.values[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / den;
    }
    return g;
}

namespace {
struct LinCoord {
    int lo, hi;
    double w_hi;  // weight of hi; lo gets 1 - w_hi
};

LinCoord lin_coord(int out_i, int in_n, int out_n) {
    if (out_n == 1 || in_n == 1) return {0, 0, 0.0};
    const double src = static_cast<double>(out_i) * (in_n - 1) / (out_n - 1);
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_n - 2) lo = in_n - 2;
    const double f = src - lo;
    return {lo, lo + 1, f};
}
}  // namespace

Tensor upsample_trilinear(const Tensor& vol, int out_h, int out_w, int out_d) {
    if (vol.ndim() != 4) throw ShapeError("upsample_trilinear: expected [C,h,w,d], got " + vol.shape_str());
    const int c_n = vol.dim(0), h = vol.dim(1), w = vol.dim(2), d = vol.dim(3);
    Tensor out({c_n, out_h, out_w, out_d});
    for (int c = 0; c < c_n; ++c) {
        for (int oh = 0; oh < out_h; ++oh) {
            const LinCoord ch = lin_coord(oh, h, out_h);
            for (int ow = 0; ow < out_w; ++ow) {
                const LinCoord cw = lin_coord(ow, w, out_w);
                for (int od = 0; od < out_d; ++od) {
                    const LinCoord cd = lin_coord(od, d, out_d);
                    double acc = 0.0;
                    for (int ah = 0; ah < 2; ++ah) {
                        const int ih = ah ? ch.hi : ch.lo;
                        const double wh = ah ? ch.w_hi : 1.0 - ch.w_hi;
                        if (wh == 0.0) continue;
                        for (int aw = 0; aw < 2; ++aw) {
                            const int iw = aw ? cw.hi : cw.lo;
                            const double ww = aw ? cw.w_hi : 1.0 - cw.w_hi;
                            if (ww == 0.0) continue;
                            for (int ad = 0; ad < 2; ++ad) {
                                const int id = ad ? cd.hi : cd.lo;
                                const double wv = ad ? cd.w_hi : 1.0 - cd.w_hi;
                                if (wv == 0.0) continue;
                                acc += wh * ww * wv *
                                       vol.values[static_cast<size_t>(((c * h + ih) * w + iw) * d +
                                                                      id)];
                            }
                        }
                    }
                    out.values[static_cast<size_t>(((c * out_h + oh) * out_w + ow) * out_d + od)] =
                        acc;
                }
            }
        }
    }
    apply_precision(out);
    return out;
}

Tensor upsample_trilinear_backward(const Tensor& vol_in, int out_h, int out_w, int out_d,
                                   const Tensor& gout) {
    const int c_n = vol_in.dim(0), h = vol_in.dim(1), w = vol_in.dim(2), d = vol_in.dim(3);
    Tensor g({c_n, h, w, d});
    for (int c = 0; c < c_n; ++c) {
        for (int oh = 0; oh < out_h; ++oh) {
            const LinCoord ch = lin_coord(oh, h, out_h);
            for (int ow = 0; ow < out_w; ++ow) {
                const LinCoord cw = lin_coord(ow, w, out_w);
                for (int od = 0; od < out_d; ++od) {
                    const LinCoord cd = lin_coord(od, d, out_d);
                    const double go = gout.values[static_cast<size_t>(
                        ((c * out_h + oh) * out_w + ow) * out_d + od)];
                    if (go == 0.0) continue;
                    for (int ah = 0; ah < 2; ++ah) {
                        const int ih = ah ? ch.hi : ch.lo;
                        const double wh = ah ? ch.w_hi : 1.0 - ch.w_hi;
                        if (wh == 0.0) continue;
                        for (int aw = 0; aw < 2; ++aw) {
                            const int iw = aw ? cw.hi : cw.lo;
                            const double ww = aw ? cw.w_hi : 1.0 - cw.w_hi;
                            if (ww == 0.0) continue;
                            for (int ad = 0; ad < 2; ++ad) {
                                const int id = ad ? cd.hi : cd.lo;
                                const double wv = ad ? cd.w_hi : 1.0 - cd.w_hi;
                                if (wv == 0.0) continue;
                                g.values[static_cast<size_t>(((c * h + ih) * w + iw) * d + id)] +=
                                    go * wh * ww * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.ndim() != b.ndim())
        throw ShapeError("concat_channels: rank mismatch " + a.shape_str() + " vs " + b.shape_str());
    for (int i = 1; i < a.ndim(); ++i) {
        if (a.dim(i) != b.dim(i))
            throw ShapeError("concat_channels: dimension " + std::to_string(i) + " mismatch, " +
                             std::to_string(a.dim(i)) + " vs " + std::to_string(b.dim(i)));
    }
    std::vector<int> shape = a.shape();
    shape[0] = a.dim(0) + b.dim(0);
    Tensor out(shape);
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.numel());
    return out;
}

void split_channels_backward(const Tensor& gout, int ca, Tensor& ga, Tensor& gb) {
    std::vector<int> sa = gout.shape(), sb = gout.shape();
    sa[0] = ca;
    sb[0] = gout.dim(0) - ca;
    ga = Tensor(sa);
    gb = Tensor(sb);
    std::copy(gout.values.begin(), gout.values.begin() + ga.numel(), ga.values.begin());
    std::copy(gout.values.begin() + ga.numel(), gout.values.end(), gb.values.begin());
}

}  // namespace fstereo
