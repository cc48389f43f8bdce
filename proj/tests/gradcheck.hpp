#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "s3net/autograd.hpp"
#include "s3net/random.hpp"

namespace s3net::testing {

// Central finite-difference check in double precision. `forward` must rebuild
// the graph from the given leaves and return a scalar loss. Returns the
// norm-relative error ||ga - gn|| / max(||ga||, ||gn||) over all leaf
// coordinates (subsampled by `stride` when a leaf is large).
inline double gradcheck(const std::vector<ag::Var<double>>& leaves,
                        const std::function<ag::Var<double>()>& forward, double h = 1e-5,
                        int64_t stride = 1) {
    for (const auto& leaf : leaves) leaf->grad = Tensor<double>();
    auto loss = forward();
    ag::backward(loss);
    std::vector<Tensor<double>> analytic;
    for (const auto& leaf : leaves)
        analytic.push_back(leaf->grad.numel() > 0 ? leaf->grad
                                                  : Tensor<double>::zeros(leaf->value.shape()));

    double dot_aa = 0.0, dot_nn = 0.0, dot_diff = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (int64_t i = 0; i < leaf->value.numel(); i += stride) {
            const double keep = leaf->value[i];
            leaf->value[i] = keep + h;
            const double up = forward()->value[0];
            leaf->value[i] = keep - h;
            const double down = forward()->value[0];
            leaf->value[i] = keep;
            const double gn = (up - down) / (2.0 * h);
            const double ga = analytic[li][i];
            dot_aa += ga * ga;
            dot_nn += gn * gn;
            dot_diff += (ga - gn) * (ga - gn);
        }
    }
    const double denom = std::max({std::sqrt(dot_aa), std::sqrt(dot_nn), 1e-12});
    return std::sqrt(dot_diff) / denom;
}

// Scalar probe: fixed pseudo-random projection so every output coordinate
// contributes to the loss.
inline ag::Var<double> sum_to_scalar(const ag::Var<double>& v, uint64_t salt = 12345) {
    Rng rng(salt);
    Tensor<double> weights(v->value.shape());
    for (int64_t i = 0; i < weights.numel(); ++i) weights[i] = rng.uniform(-1.0, 1.0);
    auto w = ag::constant(std::move(weights));
    auto prod = ag::mul(v, w);
    const int64_t n = prod->value.numel();
    Tensor<double> out({1});
    const double* p = prod->value.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    out[0] = acc;
    return ag::make_op<double>(std::move(out), {prod}, [prod, n](ag::Node<double>& self) {
        if (!prod->requires_grad) return;
        const double g = self.grad[0];
        double* dp = ag::grad_buf(prod).data();
        for (int64_t i = 0; i < n; ++i) dp[i] += g;
    });
}

}  // namespace s3net::testing
