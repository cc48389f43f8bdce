#include <doctest.h>

#include "gradcheck.hpp"
#include "s3net/dcsfem.hpp"

using namespace s3net;

namespace {

template <typename T>
ag::Var<T> random_image(int64_t n, int64_t h, int64_t w, Rng& rng) {
    Tensor<T> t({n, 3, h, w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
    return ag::leaf<T>(std::move(t), false);
}

}  // namespace

TEST_CASE("dcsfem shape contract with default channels") {
    Rng rng(3);
    Dcsfem<float> extractor(DcsfemConfig{}, rng);  // defaults: 64 + 32 channels
    auto img = random_image<float>(2, 64, 64, rng);
    auto fp = extractor(img);
    CHECK(fp.disp->value.shape() == std::vector<int64_t>{2, 64, 16, 16});
    CHECK(fp.sem->value.shape() == std::vector<int64_t>{2, 32, 16, 16});
    CHECK(fp.fused->value.shape() == std::vector<int64_t>{2, 96, 16, 16});

    // fused = [disparity channels | semantic channels]
    CHECK(fp.fused->value.at({1, 10, 3, 4}) == fp.disp->value.at({1, 10, 3, 4}));
    CHECK(fp.fused->value.at({1, 70, 3, 4}) == fp.sem->value.at({1, 6, 3, 4}));
}

TEST_CASE("dcsfem rejects sizes not divisible by 16") {
    Rng rng(5);
    Dcsfem<float> extractor({8, 6, 4, 3}, rng);
    auto img = random_image<float>(1, 24, 32, rng);
    try {
        extractor(img);
        FAIL("expected a precondition error");
    } catch (const contract_error& e) {
        CHECK(std::string(e.what()).find("16") != std::string::npos);
    }
}

TEST_CASE("dcsfem weight sharing: identical images give identical features") {
    Rng rng(7);
    Dcsfem<float> extractor({8, 6, 4, 3}, rng);
    auto img = random_image<float>(1, 32, 32, rng);
    auto a = extractor(img);
    auto b = extractor(img);
    for (int64_t i = 0; i < a.fused->value.numel(); ++i)
        CHECK(a.fused->value[i] == b.fused->value[i]);

    // Same parameter objects serve both calls (single shared extractor).
    nn::ParamSet<float> ps1, ps2;
    extractor.collect(ps1, "d");
    extractor.collect(ps2, "d");
    REQUIRE(ps1.items.size() == ps2.items.size());
    for (size_t i = 0; i < ps1.items.size(); ++i)
        CHECK(ps1.items[i].second.get() == ps2.items[i].second.get());
}

TEST_CASE("dcsfem parameter count strictly increases with f_d") {
    Rng rng(11);
    Dcsfem<float> small({16, 64, 32, 3}, rng);
    Dcsfem<float> big({16, 128, 32, 3}, rng);
    nn::ParamSet<float> ps_small, ps_big;
    small.collect(ps_small, "d");
    big.collect(ps_big, "d");
    CHECK(ps_big.total_count() > ps_small.total_count());

    // Doubling f_d doubles the fused channel count contract: 128 + 32 = 160.
    auto img = random_image<float>(1, 32, 32, rng);
    CHECK(big(img).fused->value.size(1) == 160);
}

TEST_CASE("dcsfem uneven branch budgets still sum to f_d") {
    DcsfemConfig cfg{8, 64, 32, 3};
    const auto widths = cfg.branch_channels();
    REQUIRE(widths.size() == 3);
    CHECK(widths[0] + widths[1] + widths[2] == 64);
    CHECK(widths[0] - widths[2] <= 1);
    CHECK_THROWS_AS((DcsfemConfig{8, 2, 4, 3}.validate()), contract_error);
}

TEST_CASE("dcsfem translation covariance: 4 px shift moves features one cell") {
    Rng rng(13);
    Dcsfem<float> extractor({8, 6, 4, 2}, rng);
    const int64_t h = 48, w = 48;
    Tensor<float> base({1, 3, h, w});
    for (int64_t i = 0; i < base.numel(); ++i) base[i] = static_cast<float>(rng.uniform(0, 1));
    Tensor<float> shifted({1, 3, h, w});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                shifted.at({0, c, y, x}) =
                    x >= 4 ? base.at({0, c, y, x - 4}) : base.at({0, c, y, 0});

    auto fa = extractor(ag::constant(base));
    auto fb = extractor(ag::constant(shifted));
    const auto& va = fa.fused->value;
    const auto& vb = fb.fused->value;
    // Interior comparison: generous margin for the receptive field.
    double max_dev = 0.0;
    for (int64_t c = 0; c < va.size(1); ++c)
        for (int64_t y = 4; y < va.size(2) - 4; ++y)
            for (int64_t x = 4; x < va.size(3) - 4; ++x)
                max_dev = std::max(max_dev, std::abs(static_cast<double>(
                                                va.at({0, c, y, x}) - vb.at({0, c, y, x + 1}))));
    CHECK(max_dev < 1e-4);
}

TEST_CASE("dcsfem gradient flows to every parameter") {
    Rng rng(17);
    Dcsfem<double> extractor({6, 6, 4, 3}, rng);
    auto img = random_image<double>(1, 32, 32, rng);
    auto fp = extractor(img);
    auto loss = testing::sum_to_scalar(fp.fused);
    ag::backward(loss);
    nn::ParamSet<double> ps;
    extractor.collect(ps, "d");
    for (auto& [name, v] : ps.items) {
        REQUIRE_MESSAGE(v->grad.numel() > 0, name);
        double norm = 0.0;
        for (int64_t i = 0; i < v->grad.numel(); ++i) norm += std::abs(v->grad[i]);
        CHECK_MESSAGE(norm > 0.0, name);
    }
}

TEST_CASE("dcsfem ablation switches zero one path") {
    Rng rng(19);
    DcsfemConfig cfg{8, 6, 4, 3};
    cfg.disable_dm = true;
    Dcsfem<float> extractor(cfg, rng);
    auto img = random_image<float>(1, 32, 32, rng);
    auto fp = extractor(img);
    for (int64_t i = 0; i < fp.disp->value.numel(); ++i) CHECK(fp.disp->value[i] == 0.0f);
    double sem_norm = 0.0;
    for (int64_t i = 0; i < fp.sem->value.numel(); ++i)
        sem_norm += std::abs(fp.sem->value[i]);
    CHECK(sem_norm > 0.0);

    DcsfemConfig both = cfg;
    both.disable_sm = true;
    CHECK_THROWS_AS(both.validate(), contract_error);
}
