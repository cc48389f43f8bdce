#pragma once

#include <cmath>

#include "s3net/autograd.hpp"

namespace s3net::ag {

template <typename T>
struct MaskedLoss {
    Var<T> loss;          // scalar; 0 when count == 0
    int64_t count = 0;    // number of supervised elements
};

// Mean smooth-L1 over elements where mask != 0. Huber form:
//   f(e) = 0.5 e^2 / beta       for |e| < beta
//   f(e) = |e| - 0.5 beta       otherwise
template <typename T>
MaskedLoss<T> smooth_l1_masked(const Var<T>& pred, const Tensor<T>& target,
                               const Tensor<uint8_t>& mask, T beta) {
    S3NET_CHECK(pred->value.same_shape(target), "smooth_l1: pred/target shape mismatch ",
                shape_str(pred->value.shape()), " vs ", shape_str(target.shape()));
    S3NET_CHECK(pred->value.numel() == mask.numel(), "smooth_l1: mask size mismatch");
    S3NET_CHECK(beta > T(0), "smooth_l1: beta must be positive");
    const int64_t n = pred->value.numel();
    const T* pp = pred->value.data();
    const T* pt = target.data();
    const uint8_t* pm = mask.data();
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (!pm[i]) continue;
        const double e = static_cast<double>(pp[i]) - static_cast<double>(pt[i]);
        const double ae = std::abs(e);
        acc += ae < static_cast<double>(beta) ? 0.5 * e * e / static_cast<double>(beta)
                                              : ae - 0.5 * static_cast<double>(beta);
        ++count;
    }
    Tensor<T> out({1});
    out[0] = count > 0 ? static_cast<T>(acc / static_cast<double>(count)) : T(0);
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto msk = std::make_shared<Tensor<uint8_t>>(mask);
    Var<T> loss = make_op<T>(std::move(out), {pred},
                             [pred, tgt, msk, beta, n, count](Node<T>& self) {
                                 if (!pred->requires_grad || count == 0) return;
                                 const T g = self.grad[0] / static_cast<T>(count);
                                 const T* pp2 = pred->value.data();
                                 const T* pt2 = tgt->data();
                                 const uint8_t* pm2 = msk->data();
                                 T* dp = grad_buf(pred).data();
                                 for (int64_t i = 0; i < n; ++i) {
                                     if (!pm2[i]) continue;
                                     const T e = pp2[i] - pt2[i];
                                     T d;
                                     if (e > beta)
                                         d = T(1);
                                     else if (e < -beta)
                                         d = T(-1);
                                     else
                                         d = e / beta;
                                     dp[i] += g * d;
                                 }
                             });
    return {loss, count};
}

// Mean cross-entropy with logits over pixels whose label != ignore_label.
// logits [N, K, H, W], labels [N, H, W] with values in [0, K) or ignore_label.
template <typename T>
MaskedLoss<T> cross_entropy_masked(const Var<T>& logits, const Tensor<int32_t>& labels,
                                   int32_t ignore_label) {
    const auto& s = logits->value.shape();
    S3NET_CHECK(s.size() == 4, "cross_entropy: logits must be [N, K, H, W], got ", shape_str(s));
    const int64_t n = s[0], k = s[1], hw = s[2] * s[3];
    S3NET_CHECK(labels.numel() == n * hw, "cross_entropy: labels size mismatch");
    const T* pl = logits->value.data();
    const int32_t* py = labels.data();

    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, k, s[2], s[3]});
    T* pq = probs->data();
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t o = 0; o < n; ++o)
        for (int64_t i = 0; i < hw; ++i) {
            const int32_t y = py[o * hw + i];
            if (y == ignore_label) continue;
            S3NET_CHECK(y >= 0 && y < k, "cross_entropy: label ", y, " out of range [0, ", k,
                        ")");
            const T* x = pl + o * k * hw + i;
            T mx = x[0];
            for (int64_t c = 1; c < k; ++c) mx = std::max(mx, x[c * hw]);
            double sum = 0.0;
            for (int64_t c = 0; c < k; ++c) sum += std::exp(static_cast<double>(x[c * hw] - mx));
            const double lse = static_cast<double>(mx) + std::log(sum);
            acc += lse - static_cast<double>(x[y * hw]);
            T* q = pq + o * k * hw + i;
            for (int64_t c = 0; c < k; ++c)
                q[c * hw] = static_cast<T>(std::exp(static_cast<double>(x[c * hw]) - lse));
            ++count;
        }
    Tensor<T> out({1});
    out[0] = count > 0 ? static_cast<T>(acc / static_cast<double>(count)) : T(0);
    auto lab = std::make_shared<Tensor<int32_t>>(labels);
    Var<T> loss = make_op<T>(
        std::move(out), {logits},
        [logits, probs, lab, ignore_label, n, k, hw, count](Node<T>& self) {
            if (!logits->requires_grad || count == 0) return;
            const T g = self.grad[0] / static_cast<T>(count);
            const int32_t* py2 = lab->data();
            const T* pq2 = probs->data();
            T* dl = grad_buf(logits).data();
            for (int64_t o = 0; o < n; ++o)
                for (int64_t i = 0; i < hw; ++i) {
                    const int32_t y = py2[o * hw + i];
                    if (y == ignore_label) continue;
                    const T* q = pq2 + o * k * hw + i;
                    T* d = dl + o * k * hw + i;
                    for (int64_t c = 0; c < k; ++c)
                        d[c * hw] += g * (q[c * hw] - (c == y ? T(1) : T(0)));
                }
        });
    return {loss, count};
}

}  // namespace s3net::ag
