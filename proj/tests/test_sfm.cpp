#include <doctest.h>

#include "gradcheck.hpp"
#include "s3net/sfm.hpp"

using namespace s3net;

namespace {

template <typename T>
ag::Var<T> random_input(std::vector<int64_t> shape, Rng& rng, bool requires_grad = false) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, 1.0));
    return ag::leaf<T>(std::move(t), requires_grad);
}

}  // namespace

TEST_CASE("sfm shape contract and config validation") {
    Rng rng(3);
    Sfm2d<float> block({8, 16, 3, SfmRank::r2d}, rng);
    auto x = random_input<float>({2, 8, 32, 32}, rng);
    auto y = block(x);
    CHECK(y->value.shape() == std::vector<int64_t>{2, 16, 32, 32});

    CHECK_THROWS_AS(Sfm2d<float>({8, 16, 4, SfmRank::r2d}, rng), contract_error);  // even kernel
    CHECK_THROWS_AS(Sfm2d<float>({0, 16, 3, SfmRank::r2d}, rng), contract_error);

    // Rank mismatch: feeding a 5D volume to the 2D block.
    auto vol = random_input<float>({1, 8, 4, 8, 8}, rng);
    CHECK_THROWS_AS(block(vol), contract_error);

    Sfm3d<float> block3({4, 4, 3, SfmRank::r3d}, rng);
    auto v = random_input<float>({1, 4, 4, 6, 6}, rng);
    CHECK(block3(v)->value.shape() == std::vector<int64_t>{1, 4, 4, 6, 6});
    CHECK_THROWS_AS(block3(x), contract_error);
}

TEST_CASE("sfm gating identity: forcing B(x) = 1 reduces to G(A(x)) bit-exactly") {
    Rng rng(7);
    Sfm2d<float> block({3, 5, 3, SfmRank::r2d}, rng);
    block.branch_b().w->value.fill(0.0f);
    block.branch_b().b->value.fill(1.0f);
    auto x = random_input<float>({2, 3, 9, 9}, rng);

    auto gated = block(x);
    auto plain = block.branch_g()(block.branch_a()(x));
    REQUIRE(gated->value.numel() == plain->value.numel());
    for (int64_t i = 0; i < gated->value.numel(); ++i)
        CHECK(gated->value[i] == plain->value[i]);  // exact, same precision

    Sfm3d<float> block3({2, 3, 3, SfmRank::r3d}, rng);
    block3.branch_b().w->value.fill(0.0f);
    block3.branch_b().b->value.fill(1.0f);
    auto v = random_input<float>({1, 2, 4, 5, 5}, rng);
    auto g3 = block3(v);
    auto p3 = block3.branch_g()(block3.branch_a()(v));
    for (int64_t i = 0; i < g3->value.numel(); ++i) CHECK(g3->value[i] == p3->value[i]);
}

TEST_CASE("sfm zero input with zero biases stays zero") {
    Rng rng(9);
    Sfm2d<float> block({4, 4, 3, SfmRank::r2d}, rng);
    block.branch_a().b->value.fill(0.0f);
    block.branch_b().b->value.fill(0.0f);
    block.branch_g().b->value.fill(0.0f);
    auto x = ag::constant(Tensor<float>::zeros({1, 4, 6, 6}));
    auto y = block(x);
    for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == 0.0f);
}

TEST_CASE("sfm hand oracle: scalar 1x1 weights give 2v(3v + 1)") {
    Rng rng(13);
    Sfm2d<double> block({1, 1, 1, SfmRank::r2d}, rng);
    block.branch_a().w->value[0] = 2.0;
    block.branch_a().b->value[0] = 0.0;
    block.branch_b().w->value[0] = 3.0;
    block.branch_b().b->value[0] = 1.0;
    block.branch_g().w->value[0] = 1.0;
    block.branch_g().b->value[0] = 0.0;
    auto x = random_input<double>({1, 1, 4, 4}, rng);
    auto y = block(x);
    for (int64_t i = 0; i < 16; ++i) {
        const double v = x->value[i];
        CHECK(y->value[i] == doctest::Approx(2.0 * v * (3.0 * v + 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("sfm determinism: identical params and input give identical bits") {
    Rng rng(17);
    Sfm3d<float> block({3, 3, 3, SfmRank::r3d}, rng);
    auto x = random_input<float>({1, 3, 4, 8, 8}, rng);
    auto y1 = block(x);
    auto y2 = block(x);
    for (int64_t i = 0; i < y1->value.numel(); ++i) CHECK(y1->value[i] == y2->value[i]);
}

TEST_CASE("sfm gradients match finite differences in double precision") {
    Rng rng(19);
    Sfm2d<double> block({2, 3, 3, SfmRank::r2d}, rng);
    auto x = random_input<double>({1, 2, 5, 5}, rng, true);
    nn::ParamSet<double> ps;
    block.collect(ps, "sfm");
    std::vector<ag::Var<double>> leaves = {x};
    for (auto& [name, v] : ps.items) leaves.push_back(v);
    const double err =
        testing::gradcheck(leaves, [&] { return testing::sum_to_scalar(block(x)); });
    CHECK(err < 1e-5);

    Sfm3d<double> block3({2, 2, 3, SfmRank::r3d}, rng);
    auto v = random_input<double>({1, 2, 3, 4, 4}, rng, true);
    nn::ParamSet<double> ps3;
    block3.collect(ps3, "sfm3");
    std::vector<ag::Var<double>> leaves3 = {v};
    for (auto& [name, p] : ps3.items) leaves3.push_back(p);
    const double err3 =
        testing::gradcheck(leaves3, [&] { return testing::sum_to_scalar(block3(v)); });
    CHECK(err3 < 1e-5);
}

TEST_CASE("sfm ungated fallback drops the B branch") {
    Rng rng(23);
    Sfm2d<float> gated({4, 4, 3, SfmRank::r2d}, rng, true);
    Rng rng2(23);
    Sfm2d<float> plain({4, 4, 3, SfmRank::r2d}, rng2, false);
    nn::ParamSet<float> ps_gated, ps_plain;
    gated.collect(ps_gated, "m");
    plain.collect(ps_plain, "m");
    CHECK(ps_gated.items.size() == 6);
    CHECK(ps_plain.items.size() == 4);
}
