#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "s3net/ops_conv.hpp"
#include "s3net/random.hpp"

namespace s3net::nn {

// Ordered, named parameter list. Order is construction order and is what the
// optimizer and checkpoint format key off.
template <typename T>
struct ParamSet {
    std::vector<std::pair<std::string, ag::Var<T>>> items;

    void add(const std::string& name, const ag::Var<T>& v) {
        if (v && v->value.numel() > 0) items.emplace_back(name, v);
    }
    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& [name, v] : items) n += v->value.numel();
        return n;
    }
    ag::Var<T> find(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return v;
        return nullptr;
    }
    void zero_grad() {
        for (auto& [name, v] : items)
            if (v->grad.numel() > 0) v->grad.fill(T(0));
    }
};

template <typename T>
Tensor<T> normal_tensor(std::vector<int64_t> shape, double mean, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(mean, stddev));
    return t;
}

// Weight init styles. fan_in scaling keeps activations in range; the gate
// branch of SFM starts near-identity (tiny weights, bias one).
enum class Init { he_relu, fan_in, gate_near_identity };

template <typename T>
struct Conv2d {
    ag::Var<T> w, b;
    int64_t stride = 1, pad = 0, dil = 1;

    Conv2d() = default;
    Conv2d(int64_t ci, int64_t co, int64_t k, int64_t stride_, int64_t pad_, int64_t dil_,
           Init init, Rng& rng)
        : stride(stride_), pad(pad_), dil(dil_) {
        const double fan_in = static_cast<double>(ci * k * k);
        double std = 0.0, bias = 0.0;
        switch (init) {
            case Init::he_relu: std = std::sqrt(2.0 / fan_in); break;
            case Init::fan_in: std = std::sqrt(1.0 / fan_in); break;
            case Init::gate_near_identity:
                std = 0.01;
                bias = 1.0;
                break;
        }
        w = ag::leaf<T>(normal_tensor<T>({co, ci, k, k}, 0.0, std, rng), true);
        b = ag::leaf<T>(Tensor<T>::full({co}, static_cast<T>(bias)), true);
    }

    ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::conv2d(x, w, b, stride, pad, dil); }

    void collect(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <typename T>
struct Conv3d {
    ag::Var<T> w, b;
    int64_t stride = 1, pad = 0;

    Conv3d() = default;
    Conv3d(int64_t ci, int64_t co, int64_t k, int64_t stride_, int64_t pad_, Init init, Rng& rng)
        : stride(stride_), pad(pad_) {
        const double fan_in = static_cast<double>(ci * k * k * k);
        double std = 0.0, bias = 0.0;
        switch (init) {
            case Init::he_relu: std = std::sqrt(2.0 / fan_in); break;
            case Init::fan_in: std = std::sqrt(1.0 / fan_in); break;
            case Init::gate_near_identity:
                std = 0.01;
                bias = 1.0;
                break;
        }
        w = ag::leaf<T>(normal_tensor<T>({co, ci, k, k, k}, 0.0, std, rng), true);
        b = ag::leaf<T>(Tensor<T>::full({co}, static_cast<T>(bias)), true);
    }

    ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::conv3d(x, w, b, stride, pad); }

    void collect(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <typename T>
struct ConvTranspose3d {
    ag::Var<T> w, b;
    int64_t stride = 2, pad = 1;

    ConvTranspose3d() = default;
    ConvTranspose3d(int64_t ci, int64_t co, int64_t k, int64_t stride_, int64_t pad_, Init init,
                    Rng& rng)
        : stride(stride_), pad(pad_) {
        const double fan_in = static_cast<double>(ci * k * k * k) /
                              static_cast<double>(stride_ * stride_ * stride_);
        const double std = init == Init::he_relu ? std::sqrt(2.0 / fan_in)
                                                 : std::sqrt(1.0 / fan_in);
        w = ag::leaf<T>(normal_tensor<T>({ci, co, k, k, k}, 0.0, std, rng), true);
        b = ag::leaf<T>(Tensor<T>::zeros({co}), true);
    }

    ag::Var<T> operator()(const ag::Var<T>& x) const {
        return ag::conv_transpose3d(x, w, b, stride, pad);
    }

    void collect(ParamSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

// First-order adaptive-moment optimizer with bias correction.
template <typename T>
class Adam {
public:
    Adam(ParamSet<T>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& [name, v] : params.items) {
            m_.push_back(Tensor<T>::zeros(v->value.shape()));
            v_.push_back(Tensor<T>::zeros(v->value.shape()));
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params_->items.size(); ++i) {
            auto& var = params_->items[i].second;
            if (var->grad.numel() == 0) continue;
            T* p = var->value.data();
            const T* g = var->grad.data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const int64_t n = var->value.numel();
            for (int64_t j = 0; j < n; ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
                const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                p[j] -= static_cast<T>(lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
            }
        }
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::vector<Tensor<T>>& moment1() { return m_; }
    std::vector<Tensor<T>>& moment2() { return v_; }

private:
    ParamSet<T>* params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace s3net::nn
