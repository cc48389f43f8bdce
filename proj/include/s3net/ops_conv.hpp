#pragma once

#include <cblas.h>

#include <algorithm>
#include <vector>

#include "s3net/autograd.hpp"

namespace s3net::ag {

namespace blas {

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
                 const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
                 int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

}  // namespace blas

namespace detail {

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad, int64_t dil) {
    const int64_t eff = dil * (k - 1) + 1;
    S3NET_CHECK(in + 2 * pad >= eff, "conv: input extent ", in, " too small for kernel ", k,
                " (dilation ", dil, ", pad ", pad, ")");
    return (in + 2 * pad - eff) / stride + 1;
}

// Column buffers are processed in blocks of output cells to bound memory.
inline int64_t col_block(int64_t rows, int64_t total_cols) {
    const int64_t budget = int64_t(1) << 22;  // elements per cols buffer
    return std::clamp(budget / std::max<int64_t>(rows, 1), int64_t(64), total_cols);
}

// 2D geometry. cols is [ci*kh*kw, count] row-major, columns j0..j0+count-1 of
// the full [rows, oh*ow] matrix.
template <typename T>
void im2col_2d(const T* x, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
               int64_t stride, int64_t pad, int64_t dil, int64_t ow, int64_t j0, int64_t count,
               T* cols) {
    const int64_t rows = ci * kh * kw;
#pragma omp parallel for schedule(static) if (rows * count > (1 << 14))
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t kj = r % kw;
        const int64_t ki = (r / kw) % kh;
        const int64_t c = r / (kw * kh);
        const T* xc = x + c * h * w;
        T* dst = cols + r * count;
        for (int64_t j = 0; j < count; ++j) {
            const int64_t cell = j0 + j;
            const int64_t oh = cell / ow;
            const int64_t owx = cell % ow;
            const int64_t ih = oh * stride - pad + ki * dil;
            const int64_t iw = owx * stride - pad + kj * dil;
            dst[j] = (ih >= 0 && ih < h && iw >= 0 && iw < w) ? xc[ih * w + iw] : T(0);
        }
    }
}

template <typename T>
void col2im_2d(const T* cols, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
               int64_t stride, int64_t pad, int64_t dil, int64_t ow, int64_t j0, int64_t count,
               T* dx) {
    // Parallel over channels only: rows of one channel overlap in dx.
#pragma omp parallel for schedule(static) if (ci > 1 && count > (1 << 12))
    for (int64_t c = 0; c < ci; ++c) {
        T* xc = dx + c * h * w;
        for (int64_t ki = 0; ki < kh; ++ki)
            for (int64_t kj = 0; kj < kw; ++kj) {
                const T* src = cols + ((c * kh + ki) * kw + kj) * count;
                for (int64_t j = 0; j < count; ++j) {
                    const int64_t cell = j0 + j;
                    const int64_t oh = cell / ow;
                    const int64_t owx = cell % ow;
                    const int64_t ih = oh * stride - pad + ki * dil;
                    const int64_t iw = owx * stride - pad + kj * dil;
                    if (ih >= 0 && ih < h && iw >= 0 && iw < w) xc[ih * w + iw] += src[j];
                }
            }
    }
}

// 3D geometry (dilation fixed at 1).
template <typename T>
void vol2col_3d(const T* x, int64_t ci, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow, int64_t j0,
                int64_t count, T* cols) {
    const int64_t rows = ci * kd * kh * kw;
#pragma omp parallel for schedule(static) if (rows * count > (1 << 14))
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t kj = r % kw;
        const int64_t ki = (r / kw) % kh;
        const int64_t kz = (r / (kw * kh)) % kd;
        const int64_t c = r / (kw * kh * kd);
        const T* xc = x + c * d * h * w;
        T* dst = cols + r * count;
        for (int64_t j = 0; j < count; ++j) {
            const int64_t cell = j0 + j;
            const int64_t od = cell / (oh * ow);
            const int64_t rem = cell % (oh * ow);
            const int64_t ohx = rem / ow;
            const int64_t owx = rem % ow;
            const int64_t id = od * stride - pad + kz;
            const int64_t ih = ohx * stride - pad + ki;
            const int64_t iw = owx * stride - pad + kj;
            dst[j] = (id >= 0 && id < d && ih >= 0 && ih < h && iw >= 0 && iw < w)
                         ? xc[(id * h + ih) * w + iw]
                         : T(0);
        }
    }
}

template <typename T>
void col2vol_3d(const T* cols, int64_t ci, int64_t d, int64_t h, int64_t w, int64_t kd,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
                int64_t j0, int64_t count, T* dx) {
#pragma omp parallel for schedule(static) if (ci > 1 && count > (1 << 12))
    for (int64_t c = 0; c < ci; ++c) {
        T* xc = dx + c * d * h * w;
        for (int64_t kz = 0; kz < kd; ++kz)
            for (int64_t ki = 0; ki < kh; ++ki)
                for (int64_t kj = 0; kj < kw; ++kj) {
                    const T* src = cols + (((c * kd + kz) * kh + ki) * kw + kj) * count;
                    for (int64_t j = 0; j < count; ++j) {
                        const int64_t cell = j0 + j;
                        const int64_t od = cell / (oh * ow);
                        const int64_t rem = cell % (oh * ow);
                        const int64_t ohx = rem / ow;
                        const int64_t owx = rem % ow;
                        const int64_t id = od * stride - pad + kz;
                        const int64_t ih = ohx * stride - pad + ki;
                        const int64_t iw = owx * stride - pad + kj;
                        if (id >= 0 && id < d && ih >= 0 && ih < h && iw >= 0 && iw < w)
                            xc[(id * h + ih) * w + iw] += src[j];
                    }
                }
    }
}

template <typename T>
void add_channel_bias(T* y, const T* b, int64_t co, int64_t cells) {
#pragma omp parallel for schedule(static) if (co * cells > (1 << 15))
    for (int64_t c = 0; c < co; ++c) {
        T* row = y + c * cells;
        const T bv = b[c];
        for (int64_t j = 0; j < cells; ++j) row[j] += bv;
    }
}

template <typename T>
void bias_grad(const T* dy, T* db, int64_t co, int64_t cells) {
    for (int64_t c = 0; c < co; ++c) {
        T acc = T(0);
        const T* row = dy + c * cells;
        for (int64_t j = 0; j < cells; ++j) acc += row[j];
        db[c] += acc;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x [N, Ci, H, W], w [Co, Ci, kh, kw], b [Co] (optional)
// ---------------------------------------------------------------------------
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad,
              int64_t dil = 1) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    S3NET_CHECK(xs.size() == 4, "conv2d: input must be [N, C, H, W], got ", shape_str(xs));
    S3NET_CHECK(ws.size() == 4, "conv2d: weight must be [Co, Ci, kh, kw], got ", shape_str(ws));
    S3NET_CHECK(xs[1] == ws[1], "conv2d: channel mismatch, input has ", xs[1], " weight expects ",
                ws[1]);
    const int64_t n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
    const int64_t co = ws[0], kh = ws[2], kw = ws[3];
    const int64_t oh = detail::conv_out_extent(h, kh, stride, pad, dil);
    const int64_t ow = detail::conv_out_extent(wd, kw, stride, pad, dil);
    const int64_t cells = oh * ow, rows = ci * kh * kw;
    const int64_t blk = detail::col_block(rows, cells);
    const bool has_bias = b && b->value.numel() > 0;
    if (has_bias)
        S3NET_CHECK(b->value.numel() == co, "conv2d: bias size ", b->value.numel(),
                    " != out channels ", co);

    Tensor<T> out({n, co, oh, ow});
    std::vector<T> cols(static_cast<size_t>(rows * blk));
    for (int64_t s = 0; s < n; ++s) {
        const T* xn = x->value.data() + s * ci * h * wd;
        T* yn = out.data() + s * co * cells;
        for (int64_t j0 = 0; j0 < cells; j0 += blk) {
            const int64_t count = std::min(blk, cells - j0);
            detail::im2col_2d(xn, ci, h, wd, kh, kw, stride, pad, dil, ow, j0, count, cols.data());
            blas::gemm(false, false, co, count, rows, T(1), w->value.data(), rows, cols.data(),
                       count, T(0), yn + j0, cells);
        }
        if (has_bias) detail::add_channel_bias(yn, b->value.data(), co, cells);
    }

    std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, b}
                                           : std::vector<Var<T>>{x, w};
    return make_op<T>(
        std::move(out), parents,
        [x, w, b, has_bias, n, ci, h, wd, co, kh, kw, oh, ow, stride, pad, dil, cells, rows,
         blk](Node<T>& self) {
            const T* dy = self.grad.data();
            std::vector<T> cols(static_cast<size_t>(rows * blk));
            T* dwp = w->requires_grad ? grad_buf(w).data() : nullptr;
            T* dxp = x->requires_grad ? grad_buf(x).data() : nullptr;
            for (int64_t s = 0; s < n; ++s) {
                const T* xn = x->value.data() + s * ci * h * wd;
                const T* dyn = dy + s * co * cells;
                for (int64_t j0 = 0; j0 < cells; j0 += blk) {
                    const int64_t count = std::min(blk, cells - j0);
                    if (dwp) {
                        detail::im2col_2d(xn, ci, h, wd, kh, kw, stride, pad, dil, ow, j0, count,
                                          cols.data());
                        blas::gemm(false, true, co, rows, count, T(1), dyn + j0, cells,
                                   cols.data(), count, T(1), dwp, rows);
                    }
                    if (dxp) {
                        blas::gemm(true, false, rows, count, co, T(1), w->value.data(), rows,
                                   dyn + j0, cells, T(0), cols.data(), count);
                        detail::col2im_2d(cols.data(), ci, h, wd, kh, kw, stride, pad, dil, ow,
                                          j0, count, dxp + s * ci * h * wd);
                    }
                }
                if (has_bias && b->requires_grad)
                    detail::bias_grad(dyn, grad_buf(b).data(), co, cells);
            }
        });
}

// ---------------------------------------------------------------------------
// conv3d: x [N, Ci, D, H, W], w [Co, Ci, kd, kh, kw], b [Co] (optional)
// ---------------------------------------------------------------------------
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    S3NET_CHECK(xs.size() == 5, "conv3d: input must be [N, C, D, H, W], got ", shape_str(xs));
    S3NET_CHECK(ws.size() == 5, "conv3d: weight must be [Co, Ci, kd, kh, kw], got ",
                shape_str(ws));
    S3NET_CHECK(xs[1] == ws[1], "conv3d: channel mismatch, input has ", xs[1], " weight expects ",
                ws[1]);
    const int64_t n = xs[0], ci = xs[1], d = xs[2], h = xs[3], wd = xs[4];
    const int64_t co = ws[0], kd = ws[2], kh = ws[3], kw = ws[4];
    const int64_t od = detail::conv_out_extent(d, kd, stride, pad, 1);
    const int64_t oh = detail::conv_out_extent(h, kh, stride, pad, 1);
    const int64_t ow = detail::conv_out_extent(wd, kw, stride, pad, 1);
    const int64_t cells = od * oh * ow, rows = ci * kd * kh * kw;
    const int64_t blk = detail::col_block(rows, cells);
    const bool has_bias = b && b->value.numel() > 0;
    if (has_bias)
        S3NET_CHECK(b->value.numel() == co, "conv3d: bias size ", b->value.numel(),
                    " != out channels ", co);

    Tensor<T> out({n, co, od, oh, ow});
    std::vector<T> cols(static_cast<size_t>(rows * blk));
    for (int64_t s = 0; s < n; ++s) {
        const T* xn = x->value.data() + s * ci * d * h * wd;
        T* yn = out.data() + s * co * cells;
        for (int64_t j0 = 0; j0 < cells; j0 += blk) {
            const int64_t count = std::min(blk, cells - j0);
            detail::vol2col_3d(xn, ci, d, h, wd, kd, kh, kw, stride, pad, oh, ow, j0, count,
                               cols.data());
            blas::gemm(false, false, co, count, rows, T(1), w->value.data(), rows, cols.data(),
                       count, T(0), yn + j0, cells);
        }
        if (has_bias) detail::add_channel_bias(yn, b->value.data(), co, cells);
    }

    std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, b}
                                           : std::vector<Var<T>>{x, w};
    return make_op<T>(
        std::move(out), parents,
        [x, w, b, has_bias, n, ci, d, h, wd, co, kd, kh, kw, oh, ow, stride, pad, cells, rows,
         blk](Node<T>& self) {
            const T* dy = self.grad.data();
            std::vector<T> cols(static_cast<size_t>(rows * blk));
            T* dwp = w->requires_grad ? grad_buf(w).data() : nullptr;
            T* dxp = x->requires_grad ? grad_buf(x).data() : nullptr;
            for (int64_t s = 0; s < n; ++s) {
                const T* xn = x->value.data() + s * ci * d * h * wd;
                const T* dyn = dy + s * co * cells;
                for (int64_t j0 = 0; j0 < cells; j0 += blk) {
                    const int64_t count = std::min(blk, cells - j0);
                    if (dwp) {
                        detail::vol2col_3d(xn, ci, d, h, wd, kd, kh, kw, stride, pad, oh, ow, j0,
                                           count, cols.data());
                        blas::gemm(false, true, co, rows, count, T(1), dyn + j0, cells,
                                   cols.data(), count, T(1), dwp, rows);
                    }
                    if (dxp) {
                        blas::gemm(true, false, rows, count, co, T(1), w->value.data(), rows,
                                   dyn + j0, cells, T(0), cols.data(), count);
                        detail::col2vol_3d(cols.data(), ci, d, h, wd, kd, kh, kw, stride, pad, oh,
                                           ow, j0, count, dxp + s * ci * d * h * wd);
                    }
                }
                if (has_bias && b->requires_grad)
                    detail::bias_grad(dyn, grad_buf(b).data(), co, cells);
            }
        });
}

// ---------------------------------------------------------------------------
// conv_transpose3d: x [N, Ci, D, H, W], w [Ci, Co, kd, kh, kw], b [Co]
// out extent = (in - 1) * stride - 2 * pad + k
// ---------------------------------------------------------------------------
template <typename T>
Var<T> conv_transpose3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    S3NET_CHECK(xs.size() == 5, "conv_transpose3d: input must be [N, C, D, H, W], got ",
                shape_str(xs));
    S3NET_CHECK(ws.size() == 5, "conv_transpose3d: weight must be [Ci, Co, kd, kh, kw], got ",
                shape_str(ws));
    S3NET_CHECK(xs[1] == ws[0], "conv_transpose3d: channel mismatch, input has ", xs[1],
                " weight expects ", ws[0]);
    const int64_t n = xs[0], ci = xs[1], d = xs[2], h = xs[3], wd = xs[4];
    const int64_t co = ws[1], kd = ws[2], kh = ws[3], kw = ws[4];
    const int64_t od = (d - 1) * stride - 2 * pad + kd;
    const int64_t oh = (h - 1) * stride - 2 * pad + kh;
    const int64_t ow = (wd - 1) * stride - 2 * pad + kw;
    S3NET_CHECK(od > 0 && oh > 0 && ow > 0, "conv_transpose3d: degenerate output shape");
    const int64_t in_cells = d * h * wd, out_cells = od * oh * ow;
    const int64_t rows = co * kd * kh * kw;  // vol2col rows on the *output* geometry
    const int64_t blk = detail::col_block(rows, in_cells);
    const bool has_bias = b && b->value.numel() > 0;
    if (has_bias)
        S3NET_CHECK(b->value.numel() == co, "conv_transpose3d: bias size ", b->value.numel(),
                    " != out channels ", co);

    Tensor<T> out({n, co, od, oh, ow});
    std::vector<T> cols(static_cast<size_t>(rows * blk));
    for (int64_t s = 0; s < n; ++s) {
        const T* xn = x->value.data() + s * ci * in_cells;
        T* yn = out.data() + s * co * out_cells;
        for (int64_t j0 = 0; j0 < in_cells; j0 += blk) {
            const int64_t count = std::min(blk, in_cells - j0);
            // cols = W^T (CoK x Ci) * X_block (Ci x count)
            blas::gemm(true, false, rows, count, ci, T(1), w->value.data(), rows, xn + j0,
                       in_cells, T(0), cols.data(), count);
            detail::col2vol_3d(cols.data(), co, od, oh, ow, kd, kh, kw, stride, pad, h, wd, j0,
                               count, yn);
        }
        if (has_bias) detail::add_channel_bias(yn, b->value.data(), co, out_cells);
    }

    std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, b}
                                           : std::vector<Var<T>>{x, w};
    return make_op<T>(
        std::move(out), parents,
        [x, w, b, has_bias, n, ci, d, h, wd, co, kd, kh, kw, od, oh, ow, stride, pad, in_cells,
         out_cells, rows, blk](Node<T>& self) {
            const T* dy = self.grad.data();
            std::vector<T> cols(static_cast<size_t>(rows * blk));
            T* dwp = w->requires_grad ? grad_buf(w).data() : nullptr;
            T* dxp = x->requires_grad ? grad_buf(x).data() : nullptr;
            for (int64_t s = 0; s < n; ++s) {
                const T* xn = x->value.data() + s * ci * in_cells;
                const T* dyn = dy + s * co * out_cells;
                for (int64_t j0 = 0; j0 < in_cells; j0 += blk) {
                    const int64_t count = std::min(blk, in_cells - j0);
                    detail::vol2col_3d(dyn, co, od, oh, ow, kd, kh, kw, stride, pad, h, wd, j0,
                                       count, cols.data());
                    if (dxp)
                        blas::gemm(false, false, ci, count, rows, T(1), w->value.data(), rows,
                                   cols.data(), count, T(1), dxp + s * ci * in_cells + j0,
                                   in_cells);
                    if (dwp)
                        blas::gemm(false, true, ci, rows, count, T(1), xn + j0, in_cells,
                                   cols.data(), count, T(1), dwp, rows);
                }
                if (has_bias && b->requires_grad)
                    detail::bias_grad(dyn, grad_buf(b).data(), co, out_cells);
            }
        });
}

}  // namespace s3net::ag
