#include <algorithm>
#include <cmath>

#include "s3net/data.hpp"

namespace s3net {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Wave {
    double kx = 0.0, ky = 0.0, amp = 0.0;
    double phase[3] = {0.0, 0.0, 0.0};
};

struct Layer {
    bool is_ground = false;
    int shape = 0;  // 0 rectangle, 1 ellipse
    double cx = 0.0, cy = 0.0, rx = 1.0, ry = 1.0;
    int32_t cls = 0;
    double disp = 0.0;  // objects: constant integer disparity
    // Ground disparity field: base + ax sin(kgx x + pgx) + ay sin(kgy y + pgy).
    double base = 0.0, ax = 0.0, kgx = 0.0, pgx = 0.0, ay = 0.0, kgy = 0.0, pgy = 0.0;
    std::vector<Wave> waves;
    double base_color[3] = {0.5, 0.5, 0.5};

    bool covers(double x, double y) const {
        if (is_ground) return true;
        const double dx = x - cx, dy = y - cy;
        if (shape == 0) return std::abs(dx) <= rx && std::abs(dy) <= ry;
        const double ex = dx / rx, ey = dy / ry;
        return ex * ex + ey * ey <= 1.0;
    }

    double disparity_at(double x, double y) const {
        if (!is_ground) return disp;
        return base + ax * std::sin(kgx * x + pgx) + ay * std::sin(kgy * y + pgy);
    }

    double texture(int c, double x, double y) const {
        double v = base_color[c];
        for (const Wave& w : waves) v += w.amp * std::cos(w.kx * x + w.ky * y + w.phase[c]);
        return v;
    }
};

// Band-limited texture. The amplitude budget on horizontal frequency keeps
// bilinear resampling error well below the 2/255 photometric tolerance.
std::vector<Wave> make_waves(Rng& rng, int64_t w, int64_t h) {
    std::vector<Wave> waves;
    for (int i = 0; i < 2; ++i) {  // low-frequency base undulation
        Wave wv;
        const double mag = rng.uniform(kTwoPi / static_cast<double>(w), 0.12);
        const double theta = rng.uniform(0.0, kTwoPi);
        wv.kx = mag * std::cos(theta);
        wv.ky = mag * std::sin(theta) * static_cast<double>(w) / static_cast<double>(h);
        wv.amp = rng.uniform(0.05, 0.09);
        for (double& p : wv.phase) p = rng.uniform(0.0, kTwoPi);
        waves.push_back(wv);
    }
    for (int i = 0; i < 3; ++i) {  // mid-frequency detail for matchability
        Wave wv;
        wv.kx = rng.uniform(0.15, 0.45) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        wv.ky = rng.uniform(0.2, 0.7) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        wv.amp = rng.uniform(0.03, 0.05);
        for (double& p : wv.phase) p = rng.uniform(0.0, kTwoPi);
        waves.push_back(wv);
    }
    double budget = 0.0;
    for (const Wave& wv : waves) budget += wv.amp * wv.kx * wv.kx / 8.0;
    if (budget > 0.0035) {
        const double s = 0.0035 / budget;
        for (Wave& wv : waves) wv.amp *= s;
    }
    return waves;
}

struct Scene {
    std::vector<Layer> objects;  // sorted by disparity, nearest first
    Layer ground;
    int64_t w = 0, h = 0;

    const Layer& at_left(double x, double y) const {
        for (const Layer& o : objects)
            if (o.covers(x, y)) return o;
        return ground;
    }

    // Visible layer at real right-view column u: nearest layer whose surface
    // point u + d lands inside its region.
    const Layer& at_right(double u, double y) const {
        for (const Layer& o : objects)
            if (o.covers(u + o.disp, y)) return o;
        return ground;
    }

    // Ground surface coordinate seen at right-view column u: fixed point of
    // x = u + d_g(x, y); the field slope is well below 1 so this contracts.
    double ground_x_at_right(double u, double y) const {
        double x = u + ground.base;
        for (int it = 0; it < 12; ++it) x = u + ground.disparity_at(x, y);
        return x;
    }
};

}  // namespace

float sample_row_bilinear(const Tensor<float>& img, int64_t channel, int64_t y, double x) {
    const int64_t w = img.size(img.dim() - 1);
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const double f = x - static_cast<double>(x0);
    const float v0 = img.dim() == 3 ? img.at({channel, y, x0}) : img.at({y, x0});
    if (f == 0.0) return v0;
    const float v1 = img.dim() == 3 ? img.at({channel, y, x1}) : img.at({y, x1});
    return static_cast<float>((1.0 - f) * v0 + f * v1);
}

StereoSample synth_scene(uint64_t seed, const SynthConfig& cfg) {
    const int64_t h = cfg.height, w = cfg.width;
    S3NET_CHECK(h % 16 == 0 && w % 16 == 0, "synth_scene: size must be divisible by 16, got ",
                h, "x", w);
    S3NET_CHECK(cfg.num_objects >= 0, "synth_scene: num_objects must be >= 0");
    S3NET_CHECK(cfg.num_classes >= 2, "synth_scene: need at least 2 classes");
    S3NET_CHECK(cfg.d_min < cfg.d_max, "synth_scene: empty disparity range");
    const double span = static_cast<double>(cfg.d_max - cfg.d_min);
    S3NET_CHECK(span <= static_cast<double>(w) / 2.0,
                "synth_scene: degenerate warp, disparity range wider than W/2");

    Rng rng(seed * 0x9e3779b9u + 0x7f4a7c15u);
    Scene scene;
    scene.w = w;
    scene.h = h;

    Layer& g = scene.ground;
    g.is_ground = true;
    g.cls = 0;
    if (cfg.num_objects == 0) {
        g.base = 0.0;  // flat plane: left and right views coincide
    } else {
        g.base = static_cast<double>(cfg.d_min) + span * rng.uniform(0.30, 0.42);
        g.ax = std::min(1.2, span * 0.05) * rng.uniform(0.6, 1.0);
        g.kgx = kTwoPi / static_cast<double>(w) * rng.uniform(0.5, 1.2);
        g.pgx = rng.uniform(0.0, kTwoPi);
        g.ay = std::min(1.2, span * 0.05) * rng.uniform(0.6, 1.0);
        g.kgy = kTwoPi / static_cast<double>(h) * rng.uniform(0.5, 1.2);
        g.pgy = rng.uniform(0.0, kTwoPi);
    }
    g.waves = make_waves(rng, w, h);
    for (double& c : g.base_color) c = rng.uniform(0.38, 0.62);

    const double ground_top = g.base + g.ax + g.ay;
    const int64_t obj_lo = static_cast<int64_t>(std::ceil(ground_top + 2.0));
    const int64_t obj_hi = cfg.d_max - 2;
    S3NET_CHECK(cfg.num_objects == 0 || obj_lo <= obj_hi,
                "synth_scene: disparity range too narrow to place objects above the ground");
    for (int64_t i = 0; i < cfg.num_objects; ++i) {
        Layer o;
        o.shape = rng.uniform() < 0.5 ? 0 : 1;
        o.cx = rng.uniform(0.10, 0.90) * static_cast<double>(w);
        o.cy = rng.uniform(0.10, 0.90) * static_cast<double>(h);
        o.rx = rng.uniform(0.06, 0.16) * static_cast<double>(w);
        o.ry = rng.uniform(0.06, 0.16) * static_cast<double>(h);
        o.cls = 1 + static_cast<int32_t>(rng.uniform_int(0, cfg.num_classes - 2));
        o.disp = static_cast<double>(rng.uniform_int(obj_lo, obj_hi));
        o.waves = make_waves(rng, w, h);
        for (double& c : o.base_color) c = rng.uniform(0.38, 0.62);
        scene.objects.push_back(std::move(o));
    }
    std::stable_sort(scene.objects.begin(), scene.objects.end(),
                     [](const Layer& a, const Layer& b) { return a.disp > b.disp; });

    StereoSample out;
    out.left = Tensor<float>({3, h, w});
    out.right = Tensor<float>({3, h, w});
    out.gt_disp = Tensor<float>({h, w});
    out.gt_class = Tensor<int32_t>({h, w});
    out.valid_mask = Tensor<uint8_t>({h, w});
    out.id = "synth-" + std::to_string(seed);

#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double xd = static_cast<double>(x), yd = static_cast<double>(y);
            const Layer& li = scene.at_left(xd, yd);
            const double d = li.disparity_at(xd, yd);
            out.gt_disp.at({y, x}) = static_cast<float>(d);
            out.gt_class.at({y, x}) = li.cls;
            for (int c = 0; c < 3; ++c)
                out.left.at({c, y, x}) = static_cast<float>(li.texture(c, xd, yd));

            // Right-view visibility of this surface point, including both
            // integer columns a bilinear lookup at x - d would touch.
            const double xr = xd - d;
            uint8_t valid = 0;
            if (xr >= 0.0 && xr <= static_cast<double>(w - 1)) {
                const double u0 = std::floor(xr);
                const double u1 = std::ceil(xr);
                if (&scene.at_right(u0, yd) == &li && &scene.at_right(u1, yd) == &li) valid = 1;
            }
            out.valid_mask.at({y, x}) = valid;
        }
        for (int64_t u = 0; u < w; ++u) {
            const double ud = static_cast<double>(u), yd = static_cast<double>(y);
            const Layer& ri = scene.at_right(ud, yd);
            const double xs = ri.is_ground ? scene.ground_x_at_right(ud, yd) : ud + ri.disp;
            for (int c = 0; c < 3; ++c)
                out.right.at({c, y, u}) = static_cast<float>(ri.texture(c, xs, yd));
        }
    }
    return out;
}

}  // namespace s3net
