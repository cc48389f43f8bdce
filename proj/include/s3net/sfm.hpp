#pragma once

#include "s3net/nn.hpp"

namespace s3net {

enum class SfmRank { r2d, r3d };

struct SfmConfig {
    int64_t channels_in = 0;
    int64_t channels_out = 0;
    int64_t kernel_size = 3;
    SfmRank rank = SfmRank::r2d;

    void validate() const {
        S3NET_CHECK(channels_in >= 1 && channels_out >= 1, "SfmConfig: channels must be >= 1 (",
                    channels_in, " -> ", channels_out, ")");
        S3NET_CHECK(kernel_size >= 1 && kernel_size % 2 == 1,
                    "SfmConfig: kernel_size must be odd, got ", kernel_size);
    }
};

// Dual-branch gated convolution block: out = G(A(x) * B(x)), with A and B
// independently parameterized convolutions and an element-wise product gate.
// With `gated` off (ablation) the block degrades to G(A(x)).
template <typename T>
class Sfm2d {
public:
    Sfm2d() = default;
    Sfm2d(SfmConfig cfg, Rng& rng, bool gated = true) : cfg_(cfg), gated_(gated) {
        cfg_.rank = SfmRank::r2d;
        cfg_.validate();
        const int64_t k = cfg_.kernel_size, p = k / 2;
        a_ = nn::Conv2d<T>(cfg_.channels_in, cfg_.channels_out, k, 1, p, 1, nn::Init::fan_in, rng);
        if (gated_)
            b_ = nn::Conv2d<T>(cfg_.channels_in, cfg_.channels_out, k, 1, p, 1,
                               nn::Init::gate_near_identity, rng);
        g_ = nn::Conv2d<T>(cfg_.channels_out, cfg_.channels_out, k, 1, p, 1, nn::Init::fan_in,
                           rng);
    }

    ag::Var<T> operator()(const ag::Var<T>& x) const {
        S3NET_CHECK(x->value.dim() == 4, "sfm_forward: rank 2D expects [N, C, H, W] input, got ",
                    shape_str(x->value.shape()));
        S3NET_CHECK(x->value.size(1) == cfg_.channels_in, "sfm_forward: input has ",
                    x->value.size(1), " channels, config expects ", cfg_.channels_in);
        if (!gated_) return g_(a_(x));
        return g_(ag::mul(a_(x), b_(x)));
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        a_.collect(ps, prefix + ".a");
        if (gated_) b_.collect(ps, prefix + ".b");
        g_.collect(ps, prefix + ".g");
    }

    const SfmConfig& config() const { return cfg_; }
    nn::Conv2d<T>& branch_a() { return a_; }
    nn::Conv2d<T>& branch_b() { return b_; }
    nn::Conv2d<T>& branch_g() { return g_; }

private:
    SfmConfig cfg_;
    bool gated_ = true;
    nn::Conv2d<T> a_, b_, g_;
};

template <typename T>
class Sfm3d {
public:
    Sfm3d() = default;
    Sfm3d(SfmConfig cfg, Rng& rng, bool gated = true) : cfg_(cfg), gated_(gated) {
        cfg_.rank = SfmRank::r3d;
        cfg_.validate();
        const int64_t k = cfg_.kernel_size, p = k / 2;
        a_ = nn::Conv3d<T>(cfg_.channels_in, cfg_.channels_out, k, 1, p, nn::Init::fan_in, rng);
        if (gated_)
            b_ = nn::Conv3d<T>(cfg_.channels_in, cfg_.channels_out, k, 1, p,
                               nn::Init::gate_near_identity, rng);
        g_ = nn::Conv3d<T>(cfg_.channels_out, cfg_.channels_out, k, 1, p, nn::Init::fan_in, rng);
    }

    ag::Var<T> operator()(const ag::Var<T>& x) const {
        S3NET_CHECK(x->value.dim() == 5,
                    "sfm_forward: rank 3D expects [N, C, D, H, W] input, got ",
                    shape_str(x->value.shape()));
        S3NET_CHECK(x->value.size(1) == cfg_.channels_in, "sfm_forward: input has ",
                    x->value.size(1), " channels, config expects ", cfg_.channels_in);
        if (!gated_) return g_(a_(x));
        return g_(ag::mul(a_(x), b_(x)));
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        a_.collect(ps, prefix + ".a");
        if (gated_) b_.collect(ps, prefix + ".b");
        g_.collect(ps, prefix + ".g");
    }

    const SfmConfig& config() const { return cfg_; }
    nn::Conv3d<T>& branch_a() { return a_; }
    nn::Conv3d<T>& branch_b() { return b_; }
    nn::Conv3d<T>& branch_g() { return g_; }

private:
    SfmConfig cfg_;
    bool gated_ = true;
    nn::Conv3d<T> a_, b_, g_;
};

}  // namespace s3net
