#include <doctest.h>

#include "gradcheck.hpp"
#include "s3net/cost_volume.hpp"

using namespace s3net;

namespace {

template <typename T>
FeaturePair<T> random_features(int64_t n, int64_t f_d, int64_t f_s, int64_t h, int64_t w,
                               Rng& rng, bool requires_grad = false) {
    Tensor<T> disp({n, f_d, h, w}), sem({n, f_s, h, w});
    for (int64_t i = 0; i < disp.numel(); ++i) disp[i] = static_cast<T>(rng.normal(0, 1));
    for (int64_t i = 0; i < sem.numel(); ++i) sem[i] = static_cast<T>(rng.normal(0, 1));
    FeaturePair<T> fp;
    fp.disp = ag::leaf<T>(std::move(disp), requires_grad);
    fp.sem = ag::leaf<T>(std::move(sem), requires_grad);
    fp.fused = ag::concat<T>(1, {fp.disp, fp.sem});
    return fp;
}

// Scalar reference builder for the disparity slices.
template <typename T>
Tensor<T> slices_naive(const Tensor<T>& left, const Tensor<T>& right, int64_t d_min,
                       int64_t d_max) {
    const int64_t n = left.size(0), f = left.size(1), h = left.size(2), w = left.size(3);
    const int64_t nd = (d_max - d_min) / 4;
    Tensor<T> out({n, 2 * f, nd, h, w});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t c = 0; c < f; ++c)
            for (int64_t k = 0; k < nd; ++k) {
                const int64_t delta = d_min / 4 + k;
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        out.at({s, c, k, y, x}) = left.at({s, c, y, x});
                        const int64_t xs = x - delta;
                        out.at({s, f + c, k, y, x}) =
                            xs >= 0 && xs < w ? right.at({s, c, y, xs}) : T(0);
                    }
            }
    return out;
}

}  // namespace

TEST_CASE("cost volume shape arithmetic for the default range") {
    Rng rng(3);
    CostVolumeBuilder<float> builder(64, 32, {-64, 64}, rng);
    auto left = random_features<float>(1, 64, 32, 8, 8, rng);
    auto right = random_features<float>(1, 64, 32, 8, 8, rng);
    auto cv = builder(left, right);
    CHECK(cv.data->value.shape() == std::vector<int64_t>{1, 128, 33, 8, 8});
    CHECK(cv.d_min == -64);
    CHECK(cv.d_max == 64);
}

TEST_CASE("cost volume zero-shift symmetry for identical inputs") {
    Rng rng(5);
    CostVolumeBuilder<float> builder(4, 3, {0, 16}, rng);
    auto left = random_features<float>(1, 4, 3, 6, 6, rng);
    auto cv = builder(left, left);
    // Disparity index 1 holds delta = 0: left-half channels equal right-half.
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t y = 0; y < 6; ++y)
            for (int64_t x = 0; x < 6; ++x)
                CHECK(cv.data->value.at({0, c, 1, y, x}) ==
                      cv.data->value.at({0, 4 + c, 1, y, x}));
}

TEST_CASE("cost volume row shift oracle") {
    Rng rng(7);
    CostVolumeBuilder<float> builder(1, 1, {0, 16}, rng);
    Tensor<float> row({1, 1, 1, 8});
    for (int64_t i = 0; i < 8; ++i) row[i] = static_cast<float>(i + 1);
    FeaturePair<float> fp;
    fp.disp = ag::constant(row);
    fp.sem = ag::constant(Tensor<float>::zeros({1, 1, 1, 8}));
    fp.fused = ag::concat<float>(1, {fp.disp, fp.sem});
    auto cv = builder(fp, fp);
    // Slice k = 3 shifts by delta = 2: [0, 0, 1, 2, 3, 4, 5, 6].
    const float expect[8] = {0, 0, 1, 2, 3, 4, 5, 6};
    for (int64_t x = 0; x < 8; ++x)
        CHECK(cv.data->value.at({0, 1, 3, 0, x}) == expect[x]);
}

TEST_CASE("cost volume equals the scalar loop bit-exactly on random instances") {
    Rng rng(11);
    const std::vector<std::pair<int64_t, int64_t>> ranges = {{-8, 8}, {0, 16}, {-16, 0},
                                                             {-4, 12}};
    for (int trial = 0; trial < 25; ++trial) {
        const auto [d_min, d_max] = ranges[static_cast<size_t>(trial) % ranges.size()];
        CostVolumeBuilder<float> builder(4, 2, {d_min, d_max}, rng);
        auto left = random_features<float>(1, 4, 2, 6, 6, rng);
        auto right = random_features<float>(1, 4, 2, 6, 6, rng);
        auto cv = builder(left, right);
        const auto ref = slices_naive(left.disp->value, right.disp->value, d_min, d_max);
        const int64_t nd = (d_max - d_min) / 4;
        for (int64_t c = 0; c < 8; ++c)
            for (int64_t k = 0; k < nd; ++k)
                for (int64_t y = 0; y < 6; ++y)
                    for (int64_t x = 0; x < 6; ++x)
                        REQUIRE(cv.data->value.at({0, c, k + 1, y, x}) ==
                                ref.at({0, c, k, y, x}));
    }
}

TEST_CASE("semantic slot is independent of the disparity range") {
    Rng rng(13);
    Rng rng_copy = rng;
    CostVolumeBuilder<float> narrow_range(4, 3, {-8, 8}, rng);
    CostVolumeBuilder<float> wide_range(4, 3, {-16, 16}, rng_copy);  // same projection params
    auto left = random_features<float>(1, 4, 3, 6, 6, rng);
    auto right = random_features<float>(1, 4, 3, 6, 6, rng);
    auto a = narrow_range(left, right);
    auto b = wide_range(left, right);
    for (int64_t c = 0; c < 8; ++c)
        for (int64_t y = 0; y < 6; ++y)
            for (int64_t x = 0; x < 6; ++x)
                CHECK(a.data->value.at({0, c, 0, y, x}) == b.data->value.at({0, c, 0, y, x}));
}

TEST_CASE("cost volume zero padding outside the frame") {
    Rng rng(17);
    CostVolumeBuilder<float> builder(2, 2, {-8, 8}, rng);
    auto left = random_features<float>(1, 2, 2, 4, 4, rng);
    auto right = random_features<float>(1, 2, 2, 4, 4, rng);
    auto cv = builder(left, right);
    const auto deltas = builder.config().cell_deltas();
    for (size_t k = 0; k < deltas.size(); ++k)
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t y = 0; y < 4; ++y)
                for (int64_t x = 0; x < 4; ++x) {
                    const int64_t xs = x - deltas[k];
                    if (xs < 0 || xs >= 4)
                        CHECK(cv.data->value.at({0, 2 + c, static_cast<int64_t>(k) + 1, y, x}) ==
                              0.0f);
                }
}

TEST_CASE("cost volume contract errors") {
    Rng rng(19);
    CHECK_THROWS_WITH_AS(CostVolumeBuilder<float>(4, 2, {8, 8}, rng),
                         doctest::Contains("empty disparity range"), contract_error);
    CHECK_THROWS_AS(CostVolumeBuilder<float>(4, 2, {8, 0}, rng), contract_error);
    CHECK_THROWS_AS(CostVolumeBuilder<float>(4, 2, {0, 10}, rng), contract_error);

    CostVolumeBuilder<float> builder(4, 2, {0, 16}, rng);
    auto left = random_features<float>(1, 4, 2, 6, 6, rng);
    auto right = random_features<float>(1, 4, 2, 6, 8, rng);
    CHECK_THROWS_AS(builder(left, right), contract_error);
}

TEST_CASE("cost volume gradients reach both feature pairs and the projection") {
    Rng rng(23);
    CostVolumeBuilder<double> builder(2, 2, {-8, 8}, rng);
    auto left = random_features<double>(1, 2, 2, 6, 6, rng, true);
    auto right = random_features<double>(1, 2, 2, 6, 6, rng, true);
    nn::ParamSet<double> ps;
    builder.collect(ps, "cv");
    std::vector<ag::Var<double>> leaves = {left.disp, left.sem, right.disp, right.sem};
    for (auto& [name, v] : ps.items) leaves.push_back(v);
    const double err = testing::gradcheck(
        leaves, [&] { return testing::sum_to_scalar(builder(left, right).data); });
    CHECK(err < 1e-6);
}
