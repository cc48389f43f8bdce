#pragma once

#include "s3net/sfm.hpp"

namespace s3net {

struct DcsfemConfig {
    int64_t base_channels = 32;
    int64_t f_d = 64;   // disparity feature channels (split across scale branches)
    int64_t f_s = 32;   // semantic feature channels
    int64_t num_scales = 3;
    bool disable_dm = false;   // ablation: zero-filled disparity features
    bool disable_sm = false;   // ablation: zero-filled semantic features
    bool use_sfm = true;       // ablation: plain convolutions instead of SFM

    void validate() const {
        S3NET_CHECK(base_channels >= 1 && f_d >= 1 && f_s >= 1, "DcsfemConfig: channels >= 1");
        S3NET_CHECK(num_scales >= 1, "DcsfemConfig: num_scales >= 1");
        S3NET_CHECK(f_d >= num_scales, "DcsfemConfig: f_d (", f_d, ") must be >= num_scales (",
                    num_scales, ")");
        S3NET_CHECK(!(disable_dm && disable_sm),
                    "DcsfemConfig: cannot disable both feature paths");
    }

    // Per-branch channel budget, split as evenly as the remainder allows.
    std::vector<int64_t> branch_channels() const {
        std::vector<int64_t> out(static_cast<size_t>(num_scales), f_d / num_scales);
        for (int64_t i = 0; i < f_d % num_scales; ++i) out[static_cast<size_t>(i)] += 1;
        return out;
    }
};

template <typename T>
struct FeaturePair {
    ag::Var<T> disp;    // [N, F_d, H/4, W/4]
    ag::Var<T> sem;     // [N, F_s, H/4, W/4]
    ag::Var<T> fused;   // [N, F_d + F_s, H/4, W/4], disparity channels first
};

// Disparity-Classification Spatial Feature Extraction Module. One parameter
// set serves both images of a pair; callers invoke the same instance on left
// and right. Two stride-2 stages take the input to 1/4 resolution, then the
// disparity path runs parallel dilated branches (each closed by a 2D SFM)
// while the semantic path runs a sequential residual stack.
template <typename T>
class Dcsfem {
public:
    Dcsfem() = default;
    Dcsfem(DcsfemConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int64_t bc = cfg_.base_channels;
        stem1_ = nn::Conv2d<T>(3, bc, 3, 2, 1, 1, nn::Init::he_relu, rng);
        stem2_ = nn::Conv2d<T>(bc, bc, 3, 2, 1, 1, nn::Init::he_relu, rng);
        if (!cfg_.disable_dm) {
            const auto widths = cfg_.branch_channels();
            for (int64_t i = 0; i < cfg_.num_scales; ++i) {
                Branch br;
                br.dilation = int64_t(1) << i;
                br.conv = nn::Conv2d<T>(bc, widths[static_cast<size_t>(i)], 3, 1, br.dilation,
                                        br.dilation, nn::Init::he_relu, rng);
                br.sfm = Sfm2d<T>({widths[static_cast<size_t>(i)], widths[static_cast<size_t>(i)],
                                   3, SfmRank::r2d},
                                  rng, cfg_.use_sfm);
                branches_.push_back(std::move(br));
            }
        }
        if (!cfg_.disable_sm) {
            sem_in_ = nn::Conv2d<T>(bc, cfg_.f_s, 3, 1, 1, 1, nn::Init::he_relu, rng);
            for (int i = 0; i < kSemBlocks; ++i) {
                ResBlock rb;
                rb.c1 = nn::Conv2d<T>(cfg_.f_s, cfg_.f_s, 3, 1, 1, 1, nn::Init::he_relu, rng);
                rb.c2 = nn::Conv2d<T>(cfg_.f_s, cfg_.f_s, 3, 1, 1, 1, nn::Init::fan_in, rng);
                sem_blocks_.push_back(std::move(rb));
            }
        }
    }

    FeaturePair<T> operator()(const ag::Var<T>& image) const {
        const auto& s = image->value.shape();
        S3NET_CHECK(s.size() == 4 && s[1] == 3, "extract_features: expected [N, 3, H, W], got ",
                    shape_str(s));
        S3NET_CHECK(s[2] % 16 == 0 && s[3] % 16 == 0,
                    "extract_features: H and W must be divisible by 16, got ", s[2], "x", s[3]);
        const int64_t n = s[0], h4 = s[2] / 4, w4 = s[3] / 4;

        auto trunk = ag::relu(stem2_(ag::relu(stem1_(image))));

        ag::Var<T> disp;
        if (cfg_.disable_dm) {
            disp = ag::constant(Tensor<T>::zeros({n, cfg_.f_d, h4, w4}));
        } else {
            std::vector<ag::Var<T>> parts;
            for (const auto& br : branches_) parts.push_back(br.sfm(ag::relu(br.conv(trunk))));
            disp = parts.size() == 1 ? parts[0] : ag::concat<T>(1, parts);
        }

        ag::Var<T> sem;
        if (cfg_.disable_sm) {
            sem = ag::constant(Tensor<T>::zeros({n, cfg_.f_s, h4, w4}));
        } else {
            sem = ag::relu(sem_in_(trunk));
            for (const auto& rb : sem_blocks_)
                sem = ag::relu(ag::add(sem, rb.c2(ag::relu(rb.c1(sem)))));
        }

        return {disp, sem, ag::concat<T>(1, {disp, sem})};
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        stem1_.collect(ps, prefix + ".stem1");
        stem2_.collect(ps, prefix + ".stem2");
        for (size_t i = 0; i < branches_.size(); ++i) {
            const std::string bp = prefix + ".branch" + std::to_string(i);
            branches_[i].conv.collect(ps, bp + ".conv");
            branches_[i].sfm.collect(ps, bp + ".sfm");
        }
        if (!cfg_.disable_sm) {
            sem_in_.collect(ps, prefix + ".sem_in");
            for (size_t i = 0; i < sem_blocks_.size(); ++i) {
                const std::string bp = prefix + ".sem_block" + std::to_string(i);
                sem_blocks_[i].c1.collect(ps, bp + ".c1");
                sem_blocks_[i].c2.collect(ps, bp + ".c2");
            }
        }
    }

    const DcsfemConfig& config() const { return cfg_; }

private:
    static constexpr int kSemBlocks = 4;

    struct Branch {
        int64_t dilation = 1;
        nn::Conv2d<T> conv;
        Sfm2d<T> sfm;
    };
    struct ResBlock {
        nn::Conv2d<T> c1, c2;
    };

    DcsfemConfig cfg_;
    nn::Conv2d<T> stem1_, stem2_;
    std::vector<Branch> branches_;
    nn::Conv2d<T> sem_in_;
    std::vector<ResBlock> sem_blocks_;
};

}  // namespace s3net
