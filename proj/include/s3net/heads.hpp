#pragma once

#include "s3net/mfm.hpp"

namespace s3net {

// Soft-argmax disparity regression over a full-resolution score volume
// [N, D, H, W]: softmax over the NEGATED scores (low score = good match),
// then the probability-weighted sum of candidates d_min, d_min+1, ...
template <typename T>
ag::Var<T> soft_argmax(const ag::Var<T>& scores, int64_t d_min) {
    S3NET_CHECK(scores->value.dim() == 4, "soft_argmax: expected [N, D, H, W], got ",
                shape_str(scores->value.shape()));
    auto probs = ag::softmax(ag::scale(scores, T(-1)), 1);
    return ag::expectation_axis1(probs, static_cast<T>(d_min));
}

template <typename T>
struct Prediction {
    ag::Var<T> disparity;      // [N, H, W] in pixels
    ag::Var<T> class_logits;   // [N, K, H, W]
    int round_id = 0;          // 1..3
};

// Converts a round output into full-resolution predictions. The disparity
// path drops the semantic slot, projects channels to a scalar matching score,
// upsamples trilinearly and regresses by soft-argmax; the segmentation path
// reads the semantic slot alone through a 2D SFM and a classifier convolution.
template <typename T>
class Heads {
public:
    Heads() = default;
    Heads(int64_t channels, int64_t num_classes, bool use_sfm, Rng& rng)
        : channels_(channels), num_classes_(num_classes) {
        if (num_classes_ < 2)
            throw config_error(format_msg("segmentation head needs at least 2 classes, got ",
                                          num_classes_));
        score_proj_ = nn::Conv3d<T>(channels, 1, 3, 1, 1, nn::Init::fan_in, rng);
        sem_sfm_ = Sfm2d<T>({channels, channels, 3, SfmRank::r2d}, rng, use_sfm);
        sem_out_ = nn::Conv2d<T>(channels, num_classes, 3, 1, 1, 1, nn::Init::fan_in, rng);
    }

    ag::Var<T> disparity(const ag::Var<T>& round_output, int64_t d_min, int64_t d_max) const {
        const auto& s = round_output->value.shape();
        S3NET_CHECK(s.size() == 5, "disparity_head: expected [N, C, D'+1, H', W'], got ",
                    shape_str(s));
        const int64_t n = s[0], nd = s[2] - 1, h = s[3], w = s[4];
        S3NET_CHECK(4 * nd == d_max - d_min, "disparity_head: volume has ", nd,
                    " disparity slices but range [", d_min, ", ", d_max, ") needs ",
                    (d_max - d_min) / 4);
        auto disp_slices = ag::narrow(round_output, 2, 1, nd);
        auto scores = score_proj_(disp_slices);                    // [N, 1, D', H', W']
        auto up = ag::upsample_trilinear3d(scores, 4);             // [N, 1, D, H, W]
        auto flat = ag::reshape(up, {n, 4 * nd, 4 * h, 4 * w});
        return soft_argmax(flat, d_min);
    }

    ag::Var<T> segmentation(const ag::Var<T>& round_output) const {
        const auto& s = round_output->value.shape();
        S3NET_CHECK(s.size() == 5, "segmentation_head: expected [N, C, D'+1, H', W'], got ",
                    shape_str(s));
        const int64_t n = s[0], c = s[1], h = s[3], w = s[4];
        auto slot = ag::reshape(ag::narrow(round_output, 2, 0, 1), {n, c, h, w});
        auto logits = sem_out_(sem_sfm_(slot));                    // [N, K, H', W']
        return ag::upsample_bilinear2d(logits, 4);
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        score_proj_.collect(ps, prefix + ".score_proj");
        sem_sfm_.collect(ps, prefix + ".sem_sfm");
        sem_out_.collect(ps, prefix + ".sem_out");
    }

    int64_t num_classes() const { return num_classes_; }

private:
    int64_t channels_ = 0, num_classes_ = 0;
    nn::Conv3d<T> score_proj_;
    Sfm2d<T> sem_sfm_;
    nn::Conv2d<T> sem_out_;
};

// ---------------------------------------------------------------------------
// Full model configuration and assembly
// ---------------------------------------------------------------------------

struct ModelConfig {
    int64_t base_channels = 32;
    int64_t f_d = 64;
    int64_t f_s = 32;
    int64_t num_scales = 3;
    int64_t d_min = -64;
    int64_t d_max = 64;
    int64_t num_classes = 5;
    bool disable_dm = false;    // DCSFEM disparity module
    bool disable_sm = false;    // DCSFEM semantic module
    bool disable_sfm = false;   // all SFM gates -> plain convolutions
    bool disable_dcv = false;   // MFM disparity cost volume path
    bool disable_scv = false;   // semantic cost volume slot + MFM fusion
    bool semantic_left_only = false;
    bool intra_round_skip = true;

    int64_t cost_channels() const { return 2 * f_d; }

    DcsfemConfig dcsfem_config() const {
        return {base_channels, f_d, f_s, num_scales, disable_dm, disable_sm, !disable_sfm};
    }
    CostVolumeConfig cost_config() const {
        return {d_min, d_max, semantic_left_only, disable_scv};
    }
    MfmConfig mfm_config() const {
        return {cost_channels(), !disable_dcv, !disable_scv, !disable_sfm, intra_round_skip};
    }

    void validate() const {
        dcsfem_config().validate();
        cost_config().validate();
        mfm_config().validate();
        if (num_classes < 2)
            throw config_error(format_msg("model.classes must be >= 2, got ", num_classes));
        const int64_t nd = (d_max - d_min) / 4;
        S3NET_CHECK(nd >= 4 && nd % 4 == 0, "model: disparity range must span a multiple of "
                    "16 px (got span ", d_max - d_min, ", D' = ", nd, ")");
    }
};

// Single-branch semantic stereo network: shared feature extraction on both
// images, one cost volume with a semantic slot, three MFM rounds, shared
// prediction heads on every round output.
template <typename T>
class S3Net {
public:
    S3Net() = default;
    explicit S3Net(ModelConfig cfg, uint64_t seed = 1) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        dcsfem_ = Dcsfem<T>(cfg_.dcsfem_config(), rng);
        cost_ = CostVolumeBuilder<T>(cfg_.f_d, cfg_.f_s, cfg_.cost_config(), rng);
        mfm_ = Mfm<T>(cfg_.mfm_config(), rng);
        heads_ = Heads<T>(cfg_.cost_channels(), cfg_.num_classes, !cfg_.disable_sfm, rng);
    }

    std::vector<Prediction<T>> operator()(const ag::Var<T>& left, const ag::Var<T>& right) const {
        S3NET_CHECK(left->value.same_shape(right->value),
                    "s3net_forward: left/right shapes differ: ", shape_str(left->value.shape()),
                    " vs ", shape_str(right->value.shape()));
        auto feat_left = dcsfem_(left);
        auto feat_right = dcsfem_(right);
        auto volume = cost_(feat_left, feat_right);
        auto round_outputs = mfm_(volume);
        std::vector<Prediction<T>> preds;
        for (int r = 0; r < Mfm<T>::kRounds; ++r) {
            const auto& out = round_outputs[static_cast<size_t>(r)];
            preds.push_back({heads_.disparity(out, cfg_.d_min, cfg_.d_max),
                             heads_.segmentation(out), r + 1});
        }
        return preds;
    }

    nn::ParamSet<T> params() const {
        nn::ParamSet<T> ps;
        dcsfem_.collect(ps, "dcsfem");
        cost_.collect(ps, "cost");
        mfm_.collect(ps, "mfm");
        heads_.collect(ps, "heads");
        return ps;
    }

    const ModelConfig& config() const { return cfg_; }
    Dcsfem<T>& dcsfem() { return dcsfem_; }
    CostVolumeBuilder<T>& cost_builder() { return cost_; }
    Mfm<T>& mfm() { return mfm_; }
    Heads<T>& heads() { return heads_; }
    const Dcsfem<T>& dcsfem() const { return dcsfem_; }
    const Heads<T>& heads() const { return heads_; }

private:
    ModelConfig cfg_;
    Dcsfem<T> dcsfem_;
    CostVolumeBuilder<T> cost_;
    Mfm<T> mfm_;
    Heads<T> heads_;
};

}  // namespace s3net
