#pragma once

#include "s3net/dcsfem.hpp"
#include "s3net/ops_interp.hpp"

namespace s3net {

struct CostVolumeConfig {
    int64_t d_min = -64;            // full-resolution pixels, inclusive
    int64_t d_max = 64;             // full-resolution pixels, exclusive
    bool semantic_left_only = false;  // default: semantic slot uses both images
    bool disable_scv = false;         // ablation: semantic slot zeroed, no projection

    void validate() const {
        S3NET_CHECK(d_min != d_max, "empty disparity range: d_min == d_max == ", d_min);
        S3NET_CHECK(d_min < d_max, "cost volume: d_min (", d_min, ") must be < d_max (", d_max,
                    ")");
        S3NET_CHECK((d_max - d_min) % 4 == 0, "cost volume: (d_max - d_min) must be divisible "
                    "by 4, got ", d_max - d_min);
        S3NET_CHECK(d_min % 4 == 0, "cost volume: d_min must be divisible by 4 (whole-cell "
                    "shifts at 1/4 resolution), got ", d_min);
    }

    int64_t num_slices() const { return (d_max - d_min) / 4; }  // D'

    // Cell shift for disparity index k in [1, D']: candidate d_min + 4(k-1) px.
    std::vector<int64_t> cell_deltas() const {
        std::vector<int64_t> out;
        for (int64_t k = 0; k < num_slices(); ++k) out.push_back(d_min / 4 + k);
        return out;
    }
};

template <typename T>
struct CostVolume {
    ag::Var<T> data;   // [N, C, D'+1, H', W'], disparity index 0 is the semantic slot
    int64_t d_min = 0;
    int64_t d_max = 0;
    static constexpr int64_t stride = 4;
};

// Stacks left features against horizontally shifted right features, one slice
// per candidate disparity, and projects the two images' semantic features into
// the reserved index-0 slot. A positive full-resolution disparity d aligns
// right column x - d/4 with left column x.
template <typename T>
class CostVolumeBuilder {
public:
    CostVolumeBuilder() = default;
    CostVolumeBuilder(int64_t f_d, int64_t f_s, CostVolumeConfig cfg, Rng& rng)
        : f_d_(f_d), f_s_(f_s), cfg_(cfg) {
        cfg_.validate();
        if (!cfg_.disable_scv) {
            const int64_t in = cfg_.semantic_left_only ? f_s_ : 2 * f_s_;
            sem_proj_ = nn::Conv2d<T>(in, 2 * f_d_, 1, 1, 0, 1, nn::Init::fan_in, rng);
        }
    }

    CostVolume<T> operator()(const FeaturePair<T>& left, const FeaturePair<T>& right) const {
        S3NET_CHECK(left.disp->value.same_shape(right.disp->value),
                    "build_cost_volume: left/right disparity feature shapes differ: ",
                    shape_str(left.disp->value.shape()), " vs ",
                    shape_str(right.disp->value.shape()));
        S3NET_CHECK(left.sem->value.same_shape(right.sem->value),
                    "build_cost_volume: left/right semantic feature shapes differ");
        S3NET_CHECK(left.disp->value.size(1) == f_d_, "build_cost_volume: expected F_d = ", f_d_,
                    ", got ", left.disp->value.size(1));
        S3NET_CHECK(left.sem->value.size(1) == f_s_, "build_cost_volume: expected F_s = ", f_s_,
                    ", got ", left.sem->value.size(1));

        // Disparity slices 1..D'.
        auto slices = ag::shift_concat(left.disp, right.disp, cfg_.cell_deltas());

        // Semantic slot (index 0), independent of the disparity range.
        const auto& fs = left.sem->value.shape();
        const int64_t n = fs[0], h = fs[2], w = fs[3], c = 2 * f_d_;
        ag::Var<T> slot;
        if (cfg_.disable_scv) {
            slot = ag::constant(Tensor<T>::zeros({n, c, 1, h, w}));
        } else {
            auto sem_in = cfg_.semantic_left_only ? left.sem
                                                  : ag::concat<T>(1, {left.sem, right.sem});
            slot = ag::reshape(sem_proj_(sem_in), {n, c, 1, h, w});
        }
        return {ag::concat<T>(2, {slot, slices}), cfg_.d_min, cfg_.d_max};
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix) const {
        if (!cfg_.disable_scv) sem_proj_.collect(ps, prefix + ".sem_proj");
    }

    const CostVolumeConfig& config() const { return cfg_; }

private:
    int64_t f_d_ = 0, f_s_ = 0;
    CostVolumeConfig cfg_;
    nn::Conv2d<T> sem_proj_;
};

}  // namespace s3net
