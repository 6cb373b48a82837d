#include "fusion_stereo/scene.hpp"

#include <algorithm>
#include <cmath>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

namespace {

constexpr int kNoise = 0;
constexpr int kChecker = 1;
constexpr int kGradient = 2;

// Front-most plane covering left-image position (x, y); nullptr when none.
const ScenePlane* front_plane_left(const std::vector<ScenePlane>& planes, double x, int y,
                                   double* disparity) {
    const ScenePlane* best = nullptr;
    double best_d = -1.0;
    for (const ScenePlane& p : planes) {
        if (!p.covers(x, y)) continue;
        const double d = p.disparity_at(x, y);
        if (d > best_d) {
            best_d = d;
            best = &p;
        }
    }
    if (best && disparity) *disparity = best_d;
    return best;
}

// Surface visible from the right camera at (u, y): solve x - d(x, y) = u per
// plane and keep the nearest hit.  Returns the left-image x of the hit.
const ScenePlane* front_plane_right(const std::vector<ScenePlane>& planes, double u, int y,
                                    double* x_hit, double* disparity) {
    const ScenePlane* best = nullptr;
    double best_d = -1.0, best_x = 0.0;
    for (const ScenePlane& p : planes) {
        const double denom = 1.0 - p.b;
        if (denom <= 1e-6) continue;
        const double x = (u + p.a - p.b * p.xc + p.c * (static_cast<double>(y) - p.yc)) / denom;
        if (!p.covers(x, y)) continue;
        const double d = x - u;
        if (d > best_d) {
            best_d = d;
            best_x = x;
            best = &p;
        }
    }
    if (best) {
        if (x_hit) *x_hit = best_x;
        if (disparity) *disparity = best_d;
    }
    return best;
}

int texture_margin(const SceneConfig& cfg) {
    return static_cast<int>(std::ceil(cfg.disp_hi())) + 2;
}

}  // namespace

void SceneConfig::validate() const {
    if (width < 8 || height < 8) throw ConfigError("scene: image must be at least 8x8");
    if (d_max < 2) throw ConfigError("scene: d_max must be >= 2");
    if (d_lo < 0.0 || disp_hi() <= d_lo)
        throw ConfigError("scene: need 0 <= d_lo < d_hi");
    if (disp_hi() >= static_cast<double>(width))
        throw ConfigError("scene: disparity range exceeds image width");
    if (n_planes < 0) throw ConfigError("scene: n_planes must be >= 0");
    if (texture != "noise" && texture != "checker" && texture != "gradient" && texture != "mixed")
        throw ConfigError("scene: texture must be noise, checker, gradient or mixed, got '" +
                          texture + "'");
    if (lidar_coverage < 0.0 || lidar_coverage > 1.0)
        throw ConfigError("scene: lidar_coverage must lie in [0,1]");
    if (lidar_noise < 0.0) throw ConfigError("scene: lidar_noise must be >= 0");
    if (focal_px <= 0.0 || baseline_m <= 0.0)
        throw ConfigError("scene: focal_px and baseline_m must be positive");
}

double ScenePlane::texture_at(int channel, double x, int y, int img_w) const {
    (void)img_w;
    switch (texture_kind) {
        case kNoise: {
            const std::vector<double>& lat = lattice[static_cast<size_t>(channel)];
            double xl = std::max(x, 0.0);
            int i0 = static_cast<int>(std::floor(xl));
            if (i0 > lattice_w - 2) i0 = lattice_w - 2;
            const double f = xl - static_cast<double>(i0);
            const size_t row = static_cast<size_t>(y) * static_cast<size_t>(lattice_w);
            const double v0 = lat[row + static_cast<size_t>(i0)];
            const double v1 = lat[row + static_cast<size_t>(i0) + 1];
            return v0 + f * (v1 - v0);
        }
        case kChecker: {
            const int ix = static_cast<int>(std::floor(x / cell));
            const int iy = static_cast<int>(std::floor(static_cast<double>(y) / cell));
            const int par = ((ix + iy) % 2 + 2) % 2;
            return palette[par][channel];
        }
        case kGradient: {
            const double v = g0[channel] + gx[channel] * (x - xc) + gy[channel] * (y - yc);
            return std::clamp(v, 0.0, 1.0);
        }
        default: throw ConfigError("scene: unknown texture kind");
    }
}

std::vector<ScenePlane> sample_planes(const SceneConfig& cfg, Rng& rng) {
    cfg.validate();
    const double w = cfg.width, h = cfg.height;
    const double d_lo = cfg.d_lo, d_hi = cfg.disp_hi();
    const int margin = texture_margin(cfg);

    auto pick_texture = [&](ScenePlane& p) {
        if (cfg.texture == "noise") p.texture_kind = kNoise;
        else if (cfg.texture == "checker") p.texture_kind = kChecker;
        else if (cfg.texture == "gradient") p.texture_kind = kGradient;
        else p.texture_kind = static_cast<int>(rng.uniform_below(3));

        if (p.texture_kind == kNoise) {
            p.lattice_w = cfg.width + margin;
            p.lattice.assign(3, {});
            for (int c = 0; c < 3; ++c) {
                std::vector<double>& lat = p.lattice[static_cast<size_t>(c)];
                lat.resize(static_cast<size_t>(cfg.height) * static_cast<size_t>(p.lattice_w));
                for (double& v : lat) v = rng.uniform();
            }
        } else if (p.texture_kind == kChecker) {
            p.cell = 2.0 + rng.uniform() * 4.0;
            for (int s = 0; s < 2; ++s)
                for (int c = 0; c < 3; ++c) p.palette[s][c] = 0.1 + 0.8 * rng.uniform();
        } else {
            for (int c = 0; c < 3; ++c) {
                p.g0[c] = 0.2 + 0.6 * rng.uniform();
                p.gx[c] = rng.uniform(-0.5, 0.5) / w;
                p.gy[c] = rng.uniform(-0.5, 0.5) / h;
            }
        }
    };

    // Caps the slopes so the disparity stays inside [d_lo, d_hi] over the
    // whole footprint and the row solve x - d(x) = u stays invertible.
    auto bound_slopes = [&](ScenePlane& p) {
        const double half_w = (p.x1 - p.x0) / 2.0, half_h = (p.y1 - p.y0) / 2.0;
        const double room = std::min(p.a - d_lo, d_hi - p.a);
        const double reach = std::abs(p.b) * half_w + std::abs(p.c) * half_h;
        if (reach > room && reach > 0.0) {
            const double scale = room / reach;
            p.b *= scale;
            p.c *= scale;
        }
    };

    std::vector<ScenePlane> planes;
    ScenePlane bg;
    bg.x0 = 0.0;
    bg.x1 = w + static_cast<double>(margin);
    bg.y0 = 0.0;
    bg.y1 = h;
    bg.xc = (bg.x0 + bg.x1) / 2.0;
    bg.yc = (bg.y0 + bg.y1) / 2.0;
    bg.a = d_lo + (0.05 + 0.25 * rng.uniform()) * (d_hi - d_lo);
    if (cfg.slanted) {
        bg.b = rng.uniform(-0.04, 0.04);
        bg.c = rng.uniform(-0.04, 0.04);
    }
    bound_slopes(bg);
    pick_texture(bg);
    planes.push_back(std::move(bg));

    for (int i = 0; i < cfg.n_planes; ++i) {
        ScenePlane p;
        const double pw = (0.2 + 0.3 * rng.uniform()) * w;
        const double ph = (0.25 + 0.35 * rng.uniform()) * h;
        p.x0 = rng.uniform() * (w - pw);
        p.x1 = p.x0 + pw;
        p.y0 = rng.uniform() * (h - ph);
        p.y1 = p.y0 + ph;
        p.xc = (p.x0 + p.x1) / 2.0;
        p.yc = (p.y0 + p.y1) / 2.0;
        p.a = d_lo + (0.45 + 0.5 * rng.uniform()) * (d_hi - d_lo);
        if (cfg.slanted) {
            p.b = rng.uniform(-0.08, 0.08);
            p.c = rng.uniform(-0.08, 0.08);
        }
        bound_slopes(p);
        pick_texture(p);
        planes.push_back(std::move(p));
    }
    return planes;
}

StereoSample render_scene(const std::vector<ScenePlane>& planes, const SceneConfig& cfg,
                          Rng& lidar_rng) {
    cfg.validate();
    if (planes.empty()) throw ConfigError("render_scene: no planes");
    const int w = cfg.width, h = cfg.height;

    StereoSample s;
    s.left = Tensor({3, h, w});
    s.right = Tensor({3, h, w});
    s.gt = SparseDisparityMap(h, w);
    s.lidar_left = SparseDisparityMap(h, w);
    s.lidar_right = SparseDisparityMap(h, w);
    s.calib.focal_px = cfg.focal_px;
    s.calib.baseline_m = cfg.baseline_m;
    s.calib.cx = static_cast<double>(w) / 2.0;
    s.calib.cy = static_cast<double>(h) / 2.0;
    s.calib.width = w;
    s.calib.height = h;

    const size_t plane_px = static_cast<size_t>(h) * static_cast<size_t>(w);
    // true surface disparity per left pixel, before visibility filtering
    std::vector<double> surf(plane_px, 0.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double d = 0.0;
            const ScenePlane* p = front_plane_left(planes, static_cast<double>(x), y, &d);
            if (!p)
                throw DataError("render_scene: left pixel not covered by any plane");
            for (int c = 0; c < 3; ++c) {
                s.left.values[static_cast<size_t>((c * h + y) * w + x)] =
                    p->texture_at(c, static_cast<double>(x), y, w);
            }
            surf[static_cast<size_t>(y) * w + static_cast<size_t>(x)] = d;

            // visible in the right view iff the match column is in frame and
            // nothing nearer covers it there
            const double u = static_cast<double>(x) - d;
            if (u >= 0.0) {
                double d_front = -1.0;
                front_plane_right(planes, u, y, nullptr, &d_front);
                if (d_front <= d + 1e-9) s.gt.set(y, x, d);
            }
        }
        for (int u = 0; u < w; ++u) {
            double xh = 0.0, d = 0.0;
            const ScenePlane* p = front_plane_right(planes, static_cast<double>(u), y, &xh, &d);
            if (!p)
                throw DataError("render_scene: right pixel not covered by any plane");
            for (int c = 0; c < 3; ++c) {
                s.right.values[static_cast<size_t>((c * h + y) * w + u)] =
                    p->texture_at(c, xh, y, w);
            }
        }
    }

    // LiDAR: a uniform pixel subset of the surface disparity with additive
    // noise; the right map is those measurements shifted by their own value.
    const int64_t n_meas = static_cast<int64_t>(
        std::llround(cfg.lidar_coverage * static_cast<double>(plane_px)));
    std::vector<size_t> order(plane_px);
    for (size_t i = 0; i < plane_px; ++i) order[i] = i;
    for (int64_t i = 0; i < n_meas; ++i) {
        const int64_t j =
            i + static_cast<int64_t>(lidar_rng.uniform_below(static_cast<uint64_t>(
                    static_cast<int64_t>(plane_px) - i)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int64_t i = 0; i < n_meas; ++i) {
        const size_t pix = order[static_cast<size_t>(i)];
        const int y = static_cast<int>(pix / static_cast<size_t>(w));
        const int x = static_cast<int>(pix % static_cast<size_t>(w));
        double d = surf[pix];
        if (cfg.lidar_noise > 0.0) d += lidar_rng.gaussian(0.0, cfg.lidar_noise);
        d = std::max(d, 0.0);
        s.lidar_left.set(y, x, d);
        const int u = x - static_cast<int>(std::lround(d));
        if (u >= 0 && u < w) {
            if (!s.lidar_right.is_valid(y, u) || d > s.lidar_right.at(y, u))
                s.lidar_right.set(y, u, d);
        }
    }
    return s;
}

StereoSample gen_scene(const SceneConfig& cfg, uint64_t seed) {
    Rng root(seed);
    Rng plane_rng = root.fork(1);
    Rng lidar_rng = root.fork(2);
    const std::vector<ScenePlane> planes = sample_planes(cfg, plane_rng);
    return render_scene(planes, cfg, lidar_rng);
}

}  // namespace fstereo
