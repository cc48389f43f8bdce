#include <doctest.h>

#include "gradcheck.hpp"
#include "s3net/ops_conv.hpp"
#include "s3net/ops_interp.hpp"
#include "s3net/ops_loss.hpp"

using namespace s3net;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

// Naive direct convolutions used as oracles against the GEMM path.
Tensor<double> conv2d_naive(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int64_t stride, int64_t pad, int64_t dil) {
    const int64_t n = x.size(0), ci = x.size(1), h = x.size(2), wd = x.size(3);
    const int64_t co = w.size(0), kh = w.size(2), kw = w.size(3);
    const int64_t oh = (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
    const int64_t ow = (wd + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
    Tensor<double> y({n, co, oh, ow});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < co; ++o)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    double acc = b.numel() > 0 ? b[o] : 0.0;
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t a = 0; a < kh; ++a)
                            for (int64_t e = 0; e < kw; ++e) {
                                const int64_t ih = i * stride - pad + a * dil;
                                const int64_t iw = j * stride - pad + e * dil;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wd) continue;
                                acc += x.at({s, c, ih, iw}) * w.at({o, c, a, e});
                            }
                    y.at({s, o, i, j}) = acc;
                }
    return y;
}

Tensor<double> conv3d_naive(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int64_t stride, int64_t pad) {
    const int64_t n = x.size(0), ci = x.size(1), d = x.size(2), h = x.size(3), wd = x.size(4);
    const int64_t co = w.size(0), kd = w.size(2), kh = w.size(3), kw = w.size(4);
    const int64_t od = (d + 2 * pad - kd) / stride + 1;
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor<double> y({n, co, od, oh, ow});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < co; ++o)
            for (int64_t z = 0; z < od; ++z)
                for (int64_t i = 0; i < oh; ++i)
                    for (int64_t j = 0; j < ow; ++j) {
                        double acc = b.numel() > 0 ? b[o] : 0.0;
                        for (int64_t c = 0; c < ci; ++c)
                            for (int64_t f = 0; f < kd; ++f)
                                for (int64_t a = 0; a < kh; ++a)
                                    for (int64_t e = 0; e < kw; ++e) {
                                        const int64_t id = z * stride - pad + f;
                                        const int64_t ih = i * stride - pad + a;
                                        const int64_t iw = j * stride - pad + e;
                                        if (id < 0 || id >= d || ih < 0 || ih >= h || iw < 0 ||
                                            iw >= wd)
                                            continue;
                                        acc += x.at({s, c, id, ih, iw}) * w.at({o, c, f, a, e});
                                    }
                        y.at({s, o, z, i, j}) = acc;
                    }
    return y;
}

Tensor<double> conv_transpose3d_naive(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>& b, int64_t stride, int64_t pad) {
    const int64_t n = x.size(0), ci = x.size(1), d = x.size(2), h = x.size(3), wd = x.size(4);
    const int64_t co = w.size(1), kd = w.size(2), kh = w.size(3), kw = w.size(4);
    const int64_t od = (d - 1) * stride - 2 * pad + kd;
    const int64_t oh = (h - 1) * stride - 2 * pad + kh;
    const int64_t ow = (wd - 1) * stride - 2 * pad + kw;
    Tensor<double> y({n, co, od, oh, ow});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < co; ++o)
            for (int64_t i = 0; i < od * oh * ow; ++i) y.at({s, o, i / (oh * ow),
                                                             (i / ow) % oh, i % ow}) =
                b.numel() > 0 ? b[o] : 0.0;
    for (int64_t s = 0; s < n; ++s)
        for (int64_t c = 0; c < ci; ++c)
            for (int64_t z = 0; z < d; ++z)
                for (int64_t i = 0; i < h; ++i)
                    for (int64_t j = 0; j < wd; ++j)
                        for (int64_t o = 0; o < co; ++o)
                            for (int64_t f = 0; f < kd; ++f)
                                for (int64_t a = 0; a < kh; ++a)
                                    for (int64_t e = 0; e < kw; ++e) {
                                        const int64_t oz = z * stride - pad + f;
                                        const int64_t oi = i * stride - pad + a;
                                        const int64_t oj = j * stride - pad + e;
                                        if (oz < 0 || oz >= od || oi < 0 || oi >= oh || oj < 0 ||
                                            oj >= ow)
                                            continue;
                                        y.at({s, o, oz, oi, oj}) +=
                                            x.at({s, c, z, i, j}) * w.at({c, o, f, a, e});
                                    }
    return y;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor<float> t({2, 3});
    CHECK(t.numel() == 6);
    t.at({1, 2}) = 5.0f;
    CHECK(t[5] == 5.0f);
    CHECK_THROWS_AS((void)t.at({2, 0}), contract_error);
    CHECK_THROWS_AS(t.reshaped({4}), contract_error);
    auto r = t.reshaped({3, 2});
    CHECK(r.at({2, 1}) == 5.0f);
}

TEST_CASE("elementwise ops forward and gradients") {
    Rng rng(11);
    auto a = ag::leaf(random_tensor({2, 3, 4}, rng), true);
    auto b = ag::leaf(random_tensor({2, 3, 4}, rng), true);

    auto sum = ag::add(a, b);
    for (int64_t i = 0; i < sum->value.numel(); ++i)
        CHECK(sum->value[i] == doctest::Approx(a->value[i] + b->value[i]));

    const double err = testing::gradcheck({a, b}, [&] {
        return testing::sum_to_scalar(ag::relu(ag::mul(ag::add(a, b), ag::scale(a, 0.7))));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("concat narrow reshape round trips with gradients") {
    Rng rng(5);
    auto a = ag::leaf(random_tensor({2, 3, 2, 2}, rng), true);
    auto b = ag::leaf(random_tensor({2, 1, 2, 2}, rng), true);
    auto cat = ag::concat<double>(1, {a, b});
    CHECK(cat->value.shape() == std::vector<int64_t>{2, 4, 2, 2});
    CHECK(cat->value.at({1, 3, 0, 1}) == b->value.at({1, 0, 0, 1}));
    auto sliced = ag::narrow(cat, 1, 1, 2);
    CHECK(sliced->value.at({0, 0, 1, 1}) == a->value.at({0, 1, 1, 1}));

    const double err = testing::gradcheck({a, b}, [&] {
        auto c = ag::concat<double>(1, {a, b});
        auto n = ag::narrow(c, 1, 1, 3);
        return testing::sum_to_scalar(ag::reshape(n, {2, 12}));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("conv2d matches the naive oracle") {
    Rng rng(23);
    for (auto [stride, pad, dil] : {std::tuple<int64_t, int64_t, int64_t>{1, 1, 1},
                                    {2, 1, 1},
                                    {1, 2, 2},
                                    {1, 0, 1}}) {
        auto x = ag::leaf(random_tensor({2, 3, 9, 7}, rng), true);
        auto w = ag::leaf(random_tensor({4, 3, 3, 3}, rng, 0.5), true);
        auto b = ag::leaf(random_tensor({4}, rng, 0.1), true);
        auto y = ag::conv2d(x, w, b, stride, pad, dil);
        const auto ref = conv2d_naive(x->value, w->value, b->value, stride, pad, dil);
        REQUIRE(y->value.shape() == ref.shape());
        for (int64_t i = 0; i < ref.numel(); ++i)
            CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d gradcheck") {
    Rng rng(31);
    auto x = ag::leaf(random_tensor({1, 2, 6, 5}, rng), true);
    auto w = ag::leaf(random_tensor({3, 2, 3, 3}, rng, 0.5), true);
    auto b = ag::leaf(random_tensor({3}, rng, 0.1), true);
    const double err = testing::gradcheck(
        {x, w, b}, [&] { return testing::sum_to_scalar(ag::conv2d(x, w, b, 2, 1, int64_t(1))); });
    CHECK(err < 1e-7);
}

TEST_CASE("conv3d matches the naive oracle and gradcheck") {
    Rng rng(37);
    auto x = ag::leaf(random_tensor({1, 2, 5, 6, 4}, rng), true);
    auto w = ag::leaf(random_tensor({3, 2, 3, 3, 3}, rng, 0.4), true);
    auto b = ag::leaf(random_tensor({3}, rng, 0.1), true);
    for (int64_t stride : {1, 2}) {
        auto y = ag::conv3d(x, w, b, stride, 1);
        const auto ref = conv3d_naive(x->value, w->value, b->value, stride, 1);
        REQUIRE(y->value.shape() == ref.shape());
        for (int64_t i = 0; i < ref.numel(); ++i)
            CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    const double err = testing::gradcheck(
        {x, w, b}, [&] { return testing::sum_to_scalar(ag::conv3d(x, w, b, 2, 1)); });
    CHECK(err < 1e-7);
}

TEST_CASE("conv_transpose3d matches the naive oracle and gradcheck") {
    Rng rng(41);
    auto x = ag::leaf(random_tensor({1, 3, 2, 3, 4}, rng), true);
    auto w = ag::leaf(random_tensor({3, 2, 4, 4, 4}, rng, 0.3), true);
    auto b = ag::leaf(random_tensor({2}, rng, 0.1), true);
    auto y = ag::conv_transpose3d(x, w, b, 2, 1);
    const auto ref = conv_transpose3d_naive(x->value, w->value, b->value, 2, 1);
    REQUIRE(y->value.shape() == ref.shape());
    CHECK(y->value.shape() == std::vector<int64_t>{1, 2, 4, 6, 8});
    for (int64_t i = 0; i < ref.numel(); ++i)
        CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    const double err = testing::gradcheck(
        {x, w, b}, [&] { return testing::sum_to_scalar(ag::conv_transpose3d(x, w, b, 2, 1)); });
    CHECK(err < 1e-7);
}

TEST_CASE("avg_pool2d and upsampling") {
    Rng rng(43);
    auto x = ag::leaf(random_tensor({1, 2, 4, 4}, rng), true);
    auto pooled = ag::avg_pool2d(x, 2);
    CHECK(pooled->value.shape() == std::vector<int64_t>{1, 2, 2, 2});
    CHECK(pooled->value.at({0, 0, 0, 0}) ==
          doctest::Approx((x->value.at({0, 0, 0, 0}) + x->value.at({0, 0, 0, 1}) +
                           x->value.at({0, 0, 1, 0}) + x->value.at({0, 0, 1, 1})) /
                          4.0));

    // Upsample anchoring: output (4i, 4j) reproduces input (i, j) exactly.
    auto up = ag::upsample_bilinear2d(x, 4);
    CHECK(up->value.shape() == std::vector<int64_t>{1, 2, 16, 16});
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j)
            CHECK(up->value.at({0, 1, 4 * i, 4 * j}) ==
                  doctest::Approx(x->value.at({0, 1, i, j})));

    auto v = ag::leaf(random_tensor({1, 1, 2, 3, 3}, rng), true);
    auto up3 = ag::upsample_trilinear3d(v, 2);
    CHECK(up3->value.shape() == std::vector<int64_t>{1, 1, 4, 6, 6});
    CHECK(up3->value.at({0, 0, 2, 4, 2}) == doctest::Approx(v->value.at({0, 0, 1, 2, 1})));

    double err = testing::gradcheck(
        {x}, [&] { return testing::sum_to_scalar(ag::upsample_bilinear2d(x, 4)); });
    CHECK(err < 1e-7);
    err = testing::gradcheck(
        {v}, [&] { return testing::sum_to_scalar(ag::upsample_trilinear3d(v, 4)); });
    CHECK(err < 1e-7);
    err = testing::gradcheck({x}, [&] { return testing::sum_to_scalar(ag::avg_pool2d(x, 2)); });
    CHECK(err < 1e-7);
}

TEST_CASE("softmax expectation and broadcast add") {
    Rng rng(47);
    auto x = ag::leaf(random_tensor({2, 5, 3, 2}, rng), true);
    auto p = ag::softmax(x, 1);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 2; ++j) {
                double sum = 0.0;
                for (int64_t k = 0; k < 5; ++k) sum += p->value.at({n, k, i, j});
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }

    double err = testing::gradcheck({x}, [&] {
        return testing::sum_to_scalar(ag::expectation_axis1(ag::softmax(x, 1), -2.0));
    });
    CHECK(err < 1e-6);

    auto vol = ag::leaf(random_tensor({1, 3, 4, 2, 2}, rng), true);
    auto slice = ag::leaf(random_tensor({1, 3, 2, 2}, rng), true);
    auto out = ag::broadcast_add_depth(vol, slice);
    CHECK(out->value.at({0, 2, 3, 1, 0}) ==
          doctest::Approx(vol->value.at({0, 2, 3, 1, 0}) + slice->value.at({0, 2, 1, 0})));
    err = testing::gradcheck({vol, slice}, [&] {
        return testing::sum_to_scalar(ag::broadcast_add_depth(vol, slice));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("shift_concat matches a scalar shift and propagates gradients") {
    Rng rng(53);
    auto left = ag::leaf(random_tensor({1, 2, 3, 8}, rng), true);
    auto right = ag::leaf(random_tensor({1, 2, 3, 8}, rng), true);
    const std::vector<int64_t> deltas = {-2, 0, 3};
    auto vol = ag::shift_concat(left, right, deltas);
    REQUIRE(vol->value.shape() == std::vector<int64_t>{1, 4, 3, 3, 8});
    for (int64_t c = 0; c < 2; ++c)
        for (size_t k = 0; k < deltas.size(); ++k)
            for (int64_t y = 0; y < 3; ++y)
                for (int64_t x = 0; x < 8; ++x) {
                    CHECK(vol->value.at({0, c, static_cast<int64_t>(k), y, x}) ==
                          left->value.at({0, c, y, x}));
                    const int64_t xs = x - deltas[k];
                    const double expect =
                        xs >= 0 && xs < 8 ? right->value.at({0, c, y, xs}) : 0.0;
                    CHECK(vol->value.at({0, 2 + c, static_cast<int64_t>(k), y, x}) == expect);
                }
    const double err = testing::gradcheck({left, right}, [&] {
        return testing::sum_to_scalar(ag::shift_concat(left, right, deltas));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("smooth_l1 hand case and gradcheck") {
    // Errors {0.5, 2.0} with beta = 1: mean of 0.125 and 1.5.
    auto pred = ag::leaf(Tensor<double>({4}, {0.5, 2.0, 9.0, 9.0}), true);
    Tensor<double> gt({4}, {0.0, 0.0, 0.0, 0.0});
    Tensor<uint8_t> mask({4}, {1, 1, 0, 0});
    auto loss = ag::smooth_l1_masked(pred, gt, mask, 1.0);
    CHECK(loss.count == 2);
    CHECK(loss.loss->value[0] == doctest::Approx(0.8125));

    const double err = testing::gradcheck(
        {pred}, [&] { return ag::smooth_l1_masked(pred, gt, mask, 1.0).loss; });
    CHECK(err < 1e-7);

    // Masked-out pixels receive no gradient.
    pred->grad = Tensor<double>();
    auto l2 = ag::smooth_l1_masked(pred, gt, mask, 1.0);
    ag::backward(l2.loss);
    CHECK(pred->grad[2] == 0.0);
    CHECK(pred->grad[3] == 0.0);

    Tensor<uint8_t> empty({4}, {0, 0, 0, 0});
    auto l3 = ag::smooth_l1_masked(pred, gt, empty, 1.0);
    CHECK(l3.count == 0);
    CHECK(l3.loss->value[0] == 0.0);
}

TEST_CASE("cross_entropy hand case and gradcheck") {
    // Two pixels, K = 2: logits (0, 0) -> ln 2; a confident correct pixel.
    auto logits = ag::leaf(Tensor<double>({1, 2, 1, 2}, {0.0, 0.0, 0.0, 20.0}), true);
    Tensor<int32_t> labels({1, 1, 2}, {0, 1});
    auto loss = ag::cross_entropy_masked(logits, labels, 255);
    CHECK(loss.count == 2);
    CHECK(loss.loss->value[0] == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-6));

    Rng rng(59);
    auto big = ag::leaf(random_tensor({2, 4, 3, 3}, rng), true);
    Tensor<int32_t> lab({2, 3, 3});
    for (int64_t i = 0; i < lab.numel(); ++i)
        lab[i] = static_cast<int32_t>(rng.uniform_int(0, 4));  // 4 == ignored here
    for (int64_t i = 0; i < lab.numel(); ++i)
        if (lab[i] == 4) lab[i] = 255;
    const double err = testing::gradcheck(
        {big}, [&] { return ag::cross_entropy_masked(big, lab, 255).loss; });
    CHECK(err < 1e-6);
}

TEST_CASE("weighted_sum composes scalar losses") {
    auto a = ag::leaf(Tensor<double>({1}, {2.0}), true);
    auto b = ag::leaf(Tensor<double>({1}, {3.0}), true);
    auto s = ag::weighted_sum<double>({{0.5, a}, {2.0, b}});
    CHECK(s->value[0] == doctest::Approx(7.0));
    ag::backward(s);
    CHECK(a->grad[0] == doctest::Approx(0.5));
    CHECK(b->grad[0] == doctest::Approx(2.0));
}
