#pragma once

#include <array>

#include "s3net/cost_volume.hpp"

namespace s3net {

struct MfmConfig {
    int64_t channels = 0;      // C of the incoming cost volume
    bool use_dcv = true;       // ablation: disparity encoder/decoder path
    bool use_scv = true;       // ablation: semantic fusion into the encoder
    bool use_sfm = true;       // ablation: plain convolutions inside SFM
    bool intra_round_skip = true;  // classic hourglass skip inside a round

    void validate() const { S3NET_CHECK(channels >= 1, "MfmConfig: channels >= 1"); }
};

template <typename T>
struct MfmState {
    ag::Var<T> cost1;           // [N, C, D'+1, H', W']
    ag::Var<T> cost2;           // [N, 2C, D'/2, H'/2, W'/2] or null (round 0)
    ag::Var<T> cost3;           // [N, 4C, D'/4, H'/4, W'/4] or null (round 0)
    int round_index = 0;
};

// One round: 3D SFM on cost1, split off the semantic slice, run the disparity
// slices through a two-level 3D encoder-decoder (adding the previous round's
// cost2/cost3 and the pooled semantic slice at each encoder stage), then
// re-attach the semantic slice at disparity index 0.
template <typename T>
class MfmRound {
public:
    MfmRound() = default;
    MfmRound(MfmConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int64_t c = cfg_.channels;
        sfm_ = Sfm3d<T>({c, c, 3, SfmRank::r3d}, rng, cfg_.use_sfm);
        if (cfg_.use_dcv) {
            enc1_ = nn::Conv3d<T>(c, 2 * c, 3, 2, 1, nn::Init::he_relu, rng);
            enc2_ = nn::Conv3d<T>(2 * c, 4 * c, 3, 2, 1, nn::Init::he_relu, rng);
            dec1_ = nn::ConvTranspose3d<T>(4 * c, 2 * c, 4, 2, 1, nn::Init::he_relu, rng);
            dec2_ = nn::ConvTranspose3d<T>(2 * c, c, 4, 2, 1, nn::Init::fan_in, rng);
            if (cfg_.use_scv) {
                sem_proj2_ = nn::Conv2d<T>(c, 2 * c, 1, 1, 0, 1, nn::Init::fan_in, rng);
                sem_proj3_ = nn::Conv2d<T>(c, 4 * c, 1, 1, 0, 1, nn::Init::fan_in, rng);
            }
        }
    }

    std::pair<MfmState<T>, ag::Var<T>> operator()(const MfmState<T>& state) const {
        const auto& s = state.cost1->value.shape();
        S3NET_CHECK(s.size() == 5, "mfm_round: cost1 must be [N, C, D'+1, H', W'], got ",
                    shape_str(s));
        S3NET_CHECK(s[1] == cfg_.channels, "mfm_round: cost1 has ", s[1],
                    " channels, config expects ", cfg_.channels);
        const int64_t n = s[0], c = s[1], nd = s[2] - 1, h = s[3], w = s[4];
        S3NET_CHECK(nd >= 4 && nd % 4 == 0 && h % 4 == 0 && w % 4 == 0,
                    "mfm_round: D' (", nd, "), H' (", h, ") and W' (", w,
                    ") must be divisible by 4");
        S3NET_CHECK(state.round_index >= 0 && state.round_index <= 2,
                    "mfm_round: round_index ", state.round_index, " out of range [0, 2]");
        if (state.round_index == 0 || !cfg_.use_dcv)
            S3NET_CHECK(!state.cost2 && !state.cost3,
                        "mfm_round: round 0 must not carry cost2/cost3");
        else
            S3NET_CHECK(state.cost2 && state.cost3,
                        "mfm_round: rounds 1 and 2 require cost2/cost3 from the previous round");

        auto fused = sfm_(state.cost1);
        auto sem = ag::reshape(ag::narrow(fused, 2, 0, 1), {n, c, h, w});
        auto disp = ag::narrow(fused, 2, 1, nd);
        auto sem_slice = ag::reshape(sem, {n, c, 1, h, w});

        if (!cfg_.use_dcv) {
            // Disparity path ablated: slices pass through untouched.
            auto out = ag::concat<T>(2, {sem_slice, disp});
            return {{out, nullptr, nullptr, state.round_index + 1}, out};
        }

        auto e2 = enc1_(disp);
        if (state.cost2) e2 = ag::add(e2, state.cost2);
        if (cfg_.use_scv) e2 = ag::broadcast_add_depth(e2, sem_proj2_(ag::avg_pool2d(sem, 2)));
        auto a2 = ag::relu(e2);

        auto e3 = enc2_(a2);
        if (state.cost3) e3 = ag::add(e3, state.cost3);
        if (cfg_.use_scv) e3 = ag::broadcast_add_depth(e3, sem_proj3_(ag::avg_pool2d(sem, 4)));
        auto a3 = ag::relu(e3);

        auto d2 = dec1_(a3);
        if (cfg_.intra_round_skip) d2 = ag::add(d2, e2);
        auto d1 = dec2_(ag::relu(d2));

        auto out = ag::concat<T>(2, {sem_slice, d1});
        return {{out, e2, e3, state.round_index + 1}, out};
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        sfm_.collect(ps, prefix + ".sfm");
        if (cfg_.use_dcv) {
            enc1_.collect(ps, prefix + ".enc1");
            enc2_.collect(ps, prefix + ".enc2");
            dec1_.collect(ps, prefix + ".dec1");
            dec2_.collect(ps, prefix + ".dec2");
            if (cfg_.use_scv) {
                sem_proj2_.collect(ps, prefix + ".sem_proj2");
                sem_proj3_.collect(ps, prefix + ".sem_proj3");
            }
        }
    }

    const MfmConfig& config() const { return cfg_; }

private:
    MfmConfig cfg_;
    Sfm3d<T> sfm_;
    nn::Conv3d<T> enc1_, enc2_;
    nn::ConvTranspose3d<T> dec1_, dec2_;
    nn::Conv2d<T> sem_proj2_, sem_proj3_;
};

// Three rounds with distinct parameters, threading cost2/cost3 between them.
template <typename T>
class Mfm {
public:
    static constexpr int kRounds = 3;

    Mfm() = default;
    Mfm(MfmConfig cfg, Rng& rng) {
        for (int r = 0; r < kRounds; ++r) rounds_[static_cast<size_t>(r)] = MfmRound<T>(cfg, rng);
    }

    std::array<ag::Var<T>, kRounds> operator()(const CostVolume<T>& cost) const {
        MfmState<T> state{cost.data, nullptr, nullptr, 0};
        std::array<ag::Var<T>, kRounds> outputs;
        for (int r = 0; r < kRounds; ++r) {
            auto [next, out] = rounds_[static_cast<size_t>(r)](state);
            outputs[static_cast<size_t>(r)] = out;
            state = std::move(next);
        }
        return outputs;
    }

    MfmRound<T>& round(int r) { return rounds_.at(static_cast<size_t>(r)); }
    const MfmRound<T>& round(int r) const { return rounds_.at(static_cast<size_t>(r)); }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        for (int r = 0; r < kRounds; ++r)
            rounds_[static_cast<size_t>(r)].collect(ps, prefix + ".round" + std::to_string(r));
    }

private:
    std::array<MfmRound<T>, kRounds> rounds_;
};

}  // namespace s3net
