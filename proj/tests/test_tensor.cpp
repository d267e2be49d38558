#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "glf/errors.hpp"
#include "glf/tensor.hpp"

using namespace glf;

TEST_CASE("tensor construction and access") {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.shape() == std::vector<std::size_t>{2, 3});
    CHECK(t.at(0, 0) == 1);
    CHECK(t.at(1, 2) == 6);
    CHECK(t.size() == 6);

    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);

    Tensor u;
    CHECK(!u.defined());
    CHECK_THROWS_AS(u.shape(), Error);

    Tensor c = t.clone();
    CHECK(!c.same_storage(t));
    c.at(0, 0) = 99;
    CHECK(t.at(0, 0) == 1);

    Tensor alias = t;
    CHECK(alias.same_storage(t));
}

TEST_CASE("matmul identity and hand-checked product") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from({2, 2}, {3, -1, 2, 7});
    Tensor out = matmul(eye, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == b.data()[i]);

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor ones = Tensor::from({2, 1}, {1, 1});
    Tensor p = matmul(a, ones);
    CHECK(p.at(0, 0) == 3);
    CHECK(p.at(1, 0) == 7);

    CHECK_THROWS_WITH_AS(matmul(a, Tensor::from({3, 1}, {1, 1, 1})),
                         doctest::Contains("2x2"), ShapeError);
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
    Rng rng(5);
    Tensor a = Tensor::randn({5, 4}, rng);
    Tensor b = Tensor::randn({4, 3}, rng);
    a.set_requires_grad(true);

    Tape tape;
    Tensor loss = sum(matmul(a, b, &tape), &tape);
    tape.backward(loss);

    // d sum(a*b) / da = ones(5,3) * b^T
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double want = 0;
            for (std::size_t c = 0; c < 3; ++c) want += b.at(j, c);
            CHECK(a.grad()[i * 4 + j] == doctest::Approx(want).epsilon(1e-12));
        }

    // and agrees with central differences
    double err = check_gradient(
        [&](const Tensor& x, Tape& t) { return sum(matmul(x, b, &t), &t); }, a);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax_rows oracle values") {
    Tensor z = softmax_rows(Tensor::zeros({1, 4}));
    for (std::size_t j = 0; j < 4; ++j) CHECK(z.at(0, j) == doctest::Approx(0.25).epsilon(1e-15));

    Tensor big = softmax_rows(Tensor::from({1, 2}, {1000.0, 0.0}));
    CHECK(big.at(0, 0) == doctest::Approx(1.0));
    CHECK(big.at(0, 1) == doctest::Approx(0.0));

    Tensor ln = softmax_rows(Tensor::from({1, 2}, {std::log(2.0), 0.0}));
    CHECK(ln.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(ln.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax_rows rows sum to one for random finite inputs") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t m = 1 + rng.below(6), n = 1 + rng.below(9);
        Tensor x = Tensor::randn({m, n}, rng, 10.0);
        Tensor y = softmax_rows(x);
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(y.at(i, j) >= 0.0);
                s += y.at(i, j);
            }
            CHECK(std::fabs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("elu values") {
    Tensor x = Tensor::from({3}, {0.0, 1.0, -1.0});
    Tensor y = elu(x);
    CHECK(y.at(0) == 0.0);
    CHECK(y.at(1) == 1.0);
    CHECK(y.at(2) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("conv1d identity, hand case, gradient") {
    // K=1 kernel [1] is the identity per channel
    Tensor x = Tensor::from({1, 3}, {1, 2, 3});
    Tensor k1 = Tensor::from({1, 1, 1}, {1});
    Tensor out = conv1d_causal(x, k1, Tensor());
    CHECK(out.data() == x.data());

    // causal [1,1]: out[t] = x[t-1] + x[t]
    Tensor k2 = Tensor::from({1, 1, 2}, {1, 1});
    Tensor out2 = conv1d_causal(x, k2, Tensor());
    CHECK(out2.at(0, 0) == 1);
    CHECK(out2.at(0, 1) == 3);
    CHECK(out2.at(0, 2) == 5);

    Rng rng(3);
    Tensor xr = Tensor::randn({3, 16}, rng);
    Tensor kr = Tensor::randn({4, 3, 3}, rng);
    Tensor br = Tensor::randn({4}, rng);

    double ek = check_gradient(
        [&](const Tensor& w, Tape& t) { return sum(conv1d_causal(xr, w, br, &t), &t); }, kr);
    CHECK(ek < 1e-6);
    double ex = check_gradient(
        [&](const Tensor& v, Tape& t) { return sum(conv1d_causal(v, kr, br, &t), &t); }, xr);
    CHECK(ex < 1e-6);
    double eb = check_gradient(
        [&](const Tensor& bb, Tape& t) { return sum(conv1d_causal(xr, kr, bb, &t), &t); }, br);
    CHECK(eb < 1e-6);

    CHECK_THROWS_AS(conv1d_causal(Tensor::zeros({2, 4}), Tensor::zeros({3, 5, 2}), Tensor()),
                    ShapeError);
}

TEST_CASE("conv1d causal padding never leaks the future") {
    Rng rng(8);
    Tensor x = Tensor::randn({2, 20}, rng);
    Tensor k = Tensor::randn({3, 2, 5}, rng);
    Tensor base = conv1d_causal(x, k, Tensor());
    for (std::size_t t = 0; t < 20; ++t) {
        Tensor xp = x.clone();
        xp.at(1, t) += 10.0;
        Tensor pert = conv1d_causal(xp, k, Tensor());
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t s = 0; s < t; ++s)
                CHECK(pert.at(c, s) == base.at(c, s));  // exact, not approximate
    }
}

TEST_CASE("backward basics: sum and half squared norm") {
    Rng rng(15);
    Tensor w = Tensor::randn({3, 4}, rng);
    w.set_requires_grad(true);

    Tape t1;
    Tensor l1 = sum(w, &t1);
    t1.backward(l1);
    for (double g : w.grad()) CHECK(g == 1.0);

    w.zero_grad();
    Tape t2;
    Tensor l2 = scale(sum(mul(w, w, &t2), &t2), 0.5, &t2);
    t2.backward(l2);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(w.data()[i]).epsilon(1e-15));

    // grads accumulate across backward calls until zeroed
    Tape t3;
    Tensor l3 = sum(w, &t3);
    t3.backward(l3);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(w.data()[i] + 1.0).epsilon(1e-12));

    CHECK_THROWS_AS(t2.backward(w), ShapeError);  // non-scalar loss
}

TEST_CASE("check_gradient oracle cases") {
    Tensor x = Tensor::full({3}, 1.0);
    double e1 = check_gradient([](const Tensor& v, Tape& t) { return sum(mul(v, v, &t), &t); }, x);
    CHECK(e1 < 1e-9);

    Rng rng(21);
    Tensor b = Tensor::randn({3, 2}, rng);
    Tensor a0 = Tensor::randn({2, 3}, rng);
    double e2 = check_gradient(
        [&](const Tensor& a, Tape& t) { return sum(elu(matmul(a, b, &t), &t), &t); }, a0);
    CHECK(e2 < 1e-6);

    // |u| is non-differentiable at 0: the checker must report the failure,
    // not hide it. Evaluate at a point straddling the kink.
    Tensor z = Tensor::from({2}, {1e-6, -1e-6});
    double e3 = check_gradient([](const Tensor& v, Tape& t) { return sum(abs_val(v, &t), &t); }, z);
    CHECK(e3 > 0.1);
}

TEST_CASE("every differentiable primitive passes a gradient check") {
    Rng rng(31);
    auto bounded = [&](std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
        return t;
    };

    Tensor a = bounded({3, 4});
    Tensor b = bounded({3, 4});
    Tensor m2 = bounded({4, 2});
    Tensor bias = bounded({3});
    Tensor kern = bounded({2, 3, 3});
    Tensor target = bounded({3, 4});

    auto check = [&](const char* name, auto f, const Tensor& x) {
        CAPTURE(name);
        CHECK(check_gradient(f, x) < 1e-5);
    };

    check("add", [&](const Tensor& v, Tape& t) { return sum(add(v, b, &t), &t); }, a);
    check("sub", [&](const Tensor& v, Tape& t) { return sum(sub(b, v, &t), &t); }, a);
    check("mul", [&](const Tensor& v, Tape& t) { return sum(mul(v, b, &t), &t); }, a);
    check("scale", [&](const Tensor& v, Tape& t) { return sum(scale(v, -1.7, &t), &t); }, a);
    check("mean", [&](const Tensor& v, Tape& t) { return mean(v, &t); }, a);
    check("elu", [&](const Tensor& v, Tape& t) { return sum(elu(v, &t), &t); }, a);
    check("matmul", [&](const Tensor& v, Tape& t) { return sum(matmul(v, m2, &t), &t); }, a);
    check("transpose",
          [&](const Tensor& v, Tape& t) { return sum(mul(transpose(v, &t), transpose(b, &t), &t), &t); },
          a);
    check("softmax",
          [&](const Tensor& v, Tape& t) { return sum(mul(softmax_rows(v, &t), b, &t), &t); }, a);
    check("conv1d",
          [&](const Tensor& v, Tape& t) { return sum(conv1d_causal(v, kern, Tensor(), &t), &t); },
          a);
    check("row_bias", [&](const Tensor& v, Tape& t) { return sum(add_row_bias(a, v, &t), &t); },
          bias);
    check("concat",
          [&](const Tensor& v, Tape& t) { return sum(mul(concat_rows(v, b, &t), concat_rows(b, v, &t), &t), &t); },
          a);
    check("reshape",
          [&](const Tensor& v, Tape& t) { return sum(mul(reshape(v, {12}, &t), reshape(b, {12}, &t), &t), &t); },
          a);
    check("mse", [&](const Tensor& v, Tape& t) { return mse_loss(v, target, &t); }, a);
}

TEST_CASE("value-only ops skip the tape") {
    Rng rng(41);
    Tensor a = Tensor::randn({2, 2}, rng);
    Tensor b = Tensor::randn({2, 2}, rng);
    a.set_requires_grad(true);
    Tape t;
    Tensor v = matmul(a, b);  // no tape passed
    CHECK(t.size() == 0);
    CHECK(!v.requires_grad());
    Tensor w = matmul(a, b, &t);
    CHECK(t.size() == 1);
    CHECK(w.requires_grad());
    // tensors without requires_grad never grow tape entries
    Tape t2;
    Tensor p = matmul(b, b, &t2);
    CHECK(t2.size() == 0);
    CHECK(!p.requires_grad());
}

TEST_CASE("non-finite results are a hard error") {
    Tensor big = Tensor::full({2}, 1e308);
    CHECK_THROWS_AS(scale(big, 10.0), NumericError);
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("forward replay is bit-identical") {
    Rng r1(123), r2(123);
    Tensor a1 = Tensor::randn({4, 4}, r1);
    Tensor a2 = Tensor::randn({4, 4}, r2);
    CHECK(a1.data() == a2.data());

    Tensor y1 = softmax_rows(matmul(a1, a1));
    Tensor y2 = softmax_rows(matmul(a2, a2));
    CHECK(y1.data() == y2.data());  // exact equality, not approximate
}

TEST_CASE("mse_loss matches hand value") {
    Tensor p = Tensor::from({2}, {1.0, 2.0});
    Tensor t = Tensor::from({2}, {0.0, 4.0});
    CHECK(mse_loss(p, t).value() == doctest::Approx((1.0 + 4.0) / 2.0).epsilon(1e-15));
}
