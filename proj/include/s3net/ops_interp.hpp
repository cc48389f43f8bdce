#pragma once

#include "s3net/autograd.hpp"

namespace s3net::ag {

// Average pooling with kernel == stride == k; extents must divide evenly.
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int64_t k) {
    const auto& s = x->value.shape();
    S3NET_CHECK(s.size() == 4, "avg_pool2d: expected [N, C, H, W], got ", shape_str(s));
    S3NET_CHECK(k >= 1 && s[2] % k == 0 && s[3] % k == 0, "avg_pool2d: extents ", s[2], "x",
                s[3], " not divisible by ", k);
    const int64_t nc = s[0] * s[1], h = s[2], w = s[3], oh = h / k, ow = w / k;
    const T inv = T(1) / static_cast<T>(k * k);
    Tensor<T> out({s[0], s[1], oh, ow});
    const T* px = x->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (nc * oh * ow > (1 << 14))
    for (int64_t p = 0; p < nc; ++p)
        for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j) {
                T acc = T(0);
                for (int64_t a = 0; a < k; ++a)
                    for (int64_t b = 0; b < k; ++b)
                        acc += px[p * h * w + (i * k + a) * w + (j * k + b)];
                po[p * oh * ow + i * ow + j] = acc * inv;
            }
    return make_op<T>(std::move(out), {x}, [x, nc, h, w, oh, ow, k, inv](Node<T>& self) {
        if (!x->requires_grad) return;
        const T* g = self.grad.data();
        T* dx = grad_buf(x).data();
#pragma omp parallel for schedule(static) if (nc * oh * ow > (1 << 14))
        for (int64_t p = 0; p < nc; ++p)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    const T gv = g[p * oh * ow + i * ow + j] * inv;
                    for (int64_t a = 0; a < k; ++a)
                        for (int64_t b = 0; b < k; ++b)
                            dx[p * h * w + (i * k + a) * w + (j * k + b)] += gv;
                }
    });
}

namespace detail {
// Source position for output index o at integer scale s: in = o / s, clamped.
// Anchoring at the grid origin keeps feature cell (i, j) aligned with full-res
// pixel (s*i, s*j), matching the stride-s convolutions on the way down.
template <typename T>
inline void lerp_coord(int64_t o, int64_t scale, int64_t in_extent, int64_t& i0, int64_t& i1,
                       T& f) {
    i0 = o / scale;
    const int64_t r = o % scale;
    f = static_cast<T>(r) / static_cast<T>(scale);
    i1 = i0 + 1 < in_extent ? i0 + 1 : in_extent - 1;
    if (i0 >= in_extent) {  // cannot happen for o < scale*in_extent
        i0 = in_extent - 1;
        f = T(0);
    }
}
}  // namespace detail

template <typename T>
Var<T> upsample_bilinear2d(const Var<T>& x, int64_t scale) {
    const auto& s = x->value.shape();
    S3NET_CHECK(s.size() == 4, "upsample_bilinear2d: expected [N, C, H, W], got ", shape_str(s));
    const int64_t nc = s[0] * s[1], h = s[2], w = s[3], oh = h * scale, ow = w * scale;
    Tensor<T> out({s[0], s[1], oh, ow});
    const T* px = x->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (nc > 1)
    for (int64_t p = 0; p < nc; ++p) {
        const T* xp = px + p * h * w;
        T* op = po + p * oh * ow;
        for (int64_t i = 0; i < oh; ++i) {
            int64_t i0, i1;
            T fy;
            detail::lerp_coord(i, scale, h, i0, i1, fy);
            for (int64_t j = 0; j < ow; ++j) {
                int64_t j0, j1;
                T fx;
                detail::lerp_coord(j, scale, w, j0, j1, fx);
                const T v00 = xp[i0 * w + j0], v01 = xp[i0 * w + j1];
                const T v10 = xp[i1 * w + j0], v11 = xp[i1 * w + j1];
                op[i * ow + j] = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                                 fy * ((T(1) - fx) * v10 + fx * v11);
            }
        }
    }
    return make_op<T>(std::move(out), {x}, [x, nc, h, w, oh, ow, scale](Node<T>& self) {
        if (!x->requires_grad) return;
        const T* g = self.grad.data();
        T* dx = grad_buf(x).data();
#pragma omp parallel for schedule(static) if (nc > 1)
        for (int64_t p = 0; p < nc; ++p) {
            const T* gp = g + p * oh * ow;
            T* dp = dx + p * h * w;
            for (int64_t i = 0; i < oh; ++i) {
                int64_t i0, i1;
                T fy;
                detail::lerp_coord(i, scale, h, i0, i1, fy);
                for (int64_t j = 0; j < ow; ++j) {
                    int64_t j0, j1;
                    T fx;
                    detail::lerp_coord(j, scale, w, j0, j1, fx);
                    const T gv = gp[i * ow + j];
                    dp[i0 * w + j0] += gv * (T(1) - fy) * (T(1) - fx);
                    dp[i0 * w + j1] += gv * (T(1) - fy) * fx;
                    dp[i1 * w + j0] += gv * fy * (T(1) - fx);
                    dp[i1 * w + j1] += gv * fy * fx;
                }
            }
        }
    });
}

template <typename T>
Var<T> upsample_trilinear3d(const Var<T>& x, int64_t scale) {
    const auto& s = x->value.shape();
    S3NET_CHECK(s.size() == 5, "upsample_trilinear3d: expected [N, C, D, H, W], got ",
                shape_str(s));
    const int64_t nc = s[0] * s[1], d = s[2], h = s[3], w = s[4];
    const int64_t od = d * scale, oh = h * scale, ow = w * scale;
    Tensor<T> out({s[0], s[1], od, oh, ow});
    const T* px = x->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) collapse(2) if (nc * od > 1)
    for (int64_t p = 0; p < nc; ++p)
        for (int64_t z = 0; z < od; ++z) {
            const T* xp = px + p * d * h * w;
            T* op = po + (p * od + z) * oh * ow;
            int64_t z0, z1;
            T fz;
            detail::lerp_coord(z, scale, d, z0, z1, fz);
            for (int64_t i = 0; i < oh; ++i) {
                int64_t i0, i1;
                T fy;
                detail::lerp_coord(i, scale, h, i0, i1, fy);
                for (int64_t j = 0; j < ow; ++j) {
                    int64_t j0, j1;
                    T fx;
                    detail::lerp_coord(j, scale, w, j0, j1, fx);
                    const T c00 = (T(1) - fx) * xp[(z0 * h + i0) * w + j0] +
                                  fx * xp[(z0 * h + i0) * w + j1];
                    const T c01 = (T(1) - fx) * xp[(z0 * h + i1) * w + j0] +
                                  fx * xp[(z0 * h + i1) * w + j1];
                    const T c10 = (T(1) - fx) * xp[(z1 * h + i0) * w + j0] +
                                  fx * xp[(z1 * h + i0) * w + j1];
                    const T c11 = (T(1) - fx) * xp[(z1 * h + i1) * w + j0] +
                                  fx * xp[(z1 * h + i1) * w + j1];
                    op[i * ow + j] = (T(1) - fz) * ((T(1) - fy) * c00 + fy * c01) +
                                     fz * ((T(1) - fy) * c10 + fy * c11);
                }
            }
        }
    return make_op<T>(std::move(out), {x}, [x, nc, d, h, w, od, oh, ow, scale](Node<T>& self) {
        if (!x->requires_grad) return;
        const T* g = self.grad.data();
        T* dx = grad_buf(x).data();
#pragma omp parallel for schedule(static) if (nc > 1)
        for (int64_t p = 0; p < nc; ++p) {
            T* dp = dx + p * d * h * w;
            for (int64_t z = 0; z < od; ++z) {
                int64_t z0, z1;
                T fz;
                detail::lerp_coord(z, scale, d, z0, z1, fz);
                const T* gp = g + (p * od + z) * oh * ow;
                for (int64_t i = 0; i < oh; ++i) {
                    int64_t i0, i1;
                    T fy;
                    detail::lerp_coord(i, scale, h, i0, i1, fy);
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t j0, j1;
                        T fx;
                        detail::lerp_coord(j, scale, w, j0, j1, fx);
                        const T gv = gp[i * ow + j];
                        dp[(z0 * h + i0) * w + j0] += gv * (T(1) - fz) * (T(1) - fy) * (T(1) - fx);
                        dp[(z0 * h + i0) * w + j1] += gv * (T(1) - fz) * (T(1) - fy) * fx;
                        dp[(z0 * h + i1) * w + j0] += gv * (T(1) - fz) * fy * (T(1) - fx);
                        dp[(z0 * h + i1) * w + j1] += gv * (T(1) - fz) * fy * fx;
                        dp[(z1 * h + i0) * w + j0] += gv * fz * (T(1) - fy) * (T(1) - fx);
                        dp[(z1 * h + i0) * w + j1] += gv * fz * (T(1) - fy) * fx;
                        dp[(z1 * h + i1) * w + j0] += gv * fz * fy * (T(1) - fx);
                        dp[(z1 * h + i1) * w + j1] += gv * fz * fy * fx;
                    }
                }
            }
        }
    });
}

// Disparity-shifted channel concatenation for cost volume slices:
//   out[n, c,      k, y, x] = left[n, c, y, x]
//   out[n, C + c,  k, y, x] = right[n, c, y, x - delta[k]]   (0 outside)
template <typename T>
Var<T> shift_concat(const Var<T>& left, const Var<T>& right,
                    const std::vector<int64_t>& deltas) {
    const auto& ls = left->value.shape();
    S3NET_CHECK(ls.size() == 4, "shift_concat: expected [N, C, H, W], got ", shape_str(ls));
    S3NET_CHECK(left->value.same_shape(right->value), "shift_concat: left/right shape mismatch ",
                shape_str(ls), " vs ", shape_str(right->value.shape()));
    S3NET_CHECK(!deltas.empty(), "shift_concat: empty disparity range");
    const int64_t n = ls[0], c = ls[1], h = ls[2], w = ls[3];
    const int64_t nd = static_cast<int64_t>(deltas.size());
    Tensor<T> out({n, 2 * c, nd, h, w});
    const T* pl = left->value.data();
    const T* pr = right->value.data();
    T* po = out.data();
    auto ds = std::make_shared<std::vector<int64_t>>(deltas);
#pragma omp parallel for schedule(static) collapse(2) if (n * c > 1)
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* lp = pl + (s * c + ch) * h * w;
            const T* rp = pr + (s * c + ch) * h * w;
            for (int64_t k = 0; k < nd; ++k) {
                const int64_t delta = (*ds)[static_cast<size_t>(k)];
                T* ol = po + (((s * 2 * c + ch) * nd + k) * h) * w;
                T* orr = po + (((s * 2 * c + c + ch) * nd + k) * h) * w;
                for (int64_t y = 0; y < h; ++y) {
                    std::copy(lp + y * w, lp + (y + 1) * w, ol + y * w);
                    for (int64_t x = 0; x < w; ++x) {
                        const int64_t xs = x - delta;
                        orr[y * w + x] = (xs >= 0 && xs < w) ? rp[y * w + xs] : T(0);
                    }
                }
            }
        }
    return make_op<T>(std::move(out), {left, right}, [left, right, ds, n, c, h, w,
                                                      nd](Node<T>& self) {
        const T* g = self.grad.data();
        if (left->requires_grad) {
            T* dl = grad_buf(left).data();
#pragma omp parallel for schedule(static) collapse(2) if (n * c > 1)
            for (int64_t s = 0; s < n; ++s)
                for (int64_t ch = 0; ch < c; ++ch) {
                    T* dp = dl + (s * c + ch) * h * w;
                    for (int64_t k = 0; k < nd; ++k) {
                        const T* gp = g + (((s * 2 * c + ch) * nd + k) * h) * w;
                        for (int64_t i = 0; i < h * w; ++i) dp[i] += gp[i];
                    }
                }
        }
        if (right->requires_grad) {
            T* dr = grad_buf(right).data();
#pragma omp parallel for schedule(static) collapse(2) if (n * c > 1)
            for (int64_t s = 0; s < n; ++s)
                for (int64_t ch = 0; ch < c; ++ch) {
                    T* dp = dr + (s * c + ch) * h * w;
                    for (int64_t k = 0; k < nd; ++k) {
                        const int64_t delta = (*ds)[static_cast<size_t>(k)];
                        const T* gp = g + (((s * 2 * c + c + ch) * nd + k) * h) * w;
                        for (int64_t y = 0; y < h; ++y)
                            for (int64_t x = 0; x < w; ++x) {
                                const int64_t xs = x - delta;
                                if (xs >= 0 && xs < w) dp[y * w + xs] += gp[y * w + x];
                            }
                    }
                }
        }
    });
}

}  // namespace s3net::ag
