#include <cmath>
#include <random>

#include "doctest.h"
#include "kbcx/autodiff/gru.hpp"
#include "kbcx/autodiff/ops.hpp"
#include "kbcx/autodiff/parameters.hpp"
#include "support/gradcheck.hpp"

using namespace kbcx;
using kbcx::testing::gradcheck;
using kbcx::testing::random_array;

namespace {

using V = Var<double>;
using A = Array<double>;

// Weighted sum with fixed random weights so every output element matters.
V weighted_sum(V y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    A w = random_array(y.shape(), rng);
    return ops::reduce_sum(ops::mul(y, y.tape->constant(std::move(w))));
}

constexpr int kPoints = 10;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("forward primitives on small inputs") {
    Tape<double> t;
    auto a = t.constant(A({2, 2}, {1, 2, 3, 4}));
    auto b = t.constant(A({2, 1}, {1, 1}));
    CHECK(ops::matmul(a, b).value().data == std::vector<double>{3, 7});

    auto img = t.constant(A({1, 1, 5, 5}, 1.0));
    auto k = t.constant(A({1, 1, 3, 3}, 1.0));
    auto c = ops::conv2d(img, k);
    CHECK(c.shape() == Shape{1, 1, 3, 3});
    for (double v : c.value().data) CHECK(v == 9.0);

    CHECK(ops::sigmoid(t.constant(A::scalar(0))).value().item() == 0.5);
}

TEST_CASE("shape mismatches are rejected") {
    Tape<double> t;
    auto a = t.constant(A({2, 3}));
    auto b = t.constant(A({2, 3}));
    CHECK_THROWS_AS(ops::matmul(a, b), Error);
    CHECK_THROWS_AS(ops::add(a, t.constant(A({3, 2}))), Error);
    CHECK_THROWS_AS(ops::conv2d(t.constant(A({1, 1, 2, 2})), t.constant(A({1, 1, 3, 3}))), Error);
    try {
        ops::mul(a, t.constant(A({3})));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Shape);
        CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("backward on hand-derivable losses") {
    {
        Tape<double> t;
        auto x = t.leaf(A({3}, {1, 2, 3}));
        t.backward(ops::reduce_sum(ops::mul(x, x)));
        CHECK(t.grad(x.id).data == std::vector<double>{2, 4, 6});
    }
    {
        Tape<double> t;
        auto w = t.leaf(A({1, 1}, {0}));
        auto x = t.constant(A({1, 1}, {1}));
        t.backward(ops::reduce_sum(ops::sigmoid(ops::matmul(w, x))));
        CHECK(t.grad(w.id)[0] == doctest::Approx(0.25).epsilon(1e-15));
    }
    {
        Tape<double> t;
        auto x = t.leaf(A({2}, {1, 2}));
        auto unused = t.leaf(A({4}, {5, 5, 5, 5}));
        t.backward(ops::reduce_sum(x));
        CHECK(t.grad(unused.id).data == std::vector<double>(4, 0.0));
    }
    {
        Tape<double> t;
        auto x = t.leaf(A({2}, {1, 2}));
        CHECK_THROWS_AS(t.backward(x), Error);
    }
}

TEST_CASE("fan-out accumulates like a graph duplicated by value") {
    std::mt19937_64 rng(3);
    A x0 = random_array({4, 3}, rng);
    A w0 = random_array({3, 3}, rng);
    auto f = [&](V a, V b, V w) { return ops::reduce_sum(ops::tanh(ops::add(ops::matmul(a, w), ops::mul(b, b)))); };

    Tape<double> shared;
    auto x = shared.leaf(x0);
    auto w = shared.constant(w0);
    shared.backward(f(x, x, w));

    Tape<double> dup;
    auto x1 = dup.leaf(x0);
    auto x2 = dup.leaf(x0);
    auto w2 = dup.constant(w0);
    dup.backward(f(x1, x2, w2));

    for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(shared.grad(x.id)[i] == doctest::Approx(dup.grad(x1.id)[i] + dup.grad(x2.id)[i]).epsilon(1e-12));
    }
}

TEST_CASE("every primitive matches central finite differences") {
    std::mt19937_64 rng(2024);
    for (int point = 0; point < kPoints; ++point) {
        CAPTURE(point);
        auto u = [&](Shape s, double lo = -1, double hi = 1) { return random_array(s, rng, lo, hi); };

        CHECK(gradcheck({u({3, 4}), u({4, 2})}, [](auto&, auto& l) { return weighted_sum(ops::matmul(l[0], l[1])); }) < kTol);
        CHECK(gradcheck({u({3, 4}), u({5, 4})}, [](auto&, auto& l) {
                  return weighted_sum(ops::matmul(l[0], l[1], ops::Transpose::Yes));
              }) < kTol);
        CHECK(gradcheck({u({2, 3, 4}), u({2, 4, 2})}, [](auto&, auto& l) { return weighted_sum(ops::bmm(l[0], l[1])); }) < kTol);
        CHECK(gradcheck({u({3, 4}), u({3, 4})}, [](auto&, auto& l) {
                  return weighted_sum(ops::sub(ops::add(l[0], l[1]), ops::mul(l[0], l[1])));
              }) < kTol);
        CHECK(gradcheck({u({3, 4}), u({4})}, [](auto&, auto& l) { return weighted_sum(ops::add_row(l[0], l[1])); }) < kTol);
        CHECK(gradcheck({u({5})}, [](auto&, auto& l) {
                  return weighted_sum(ops::add_scalar(ops::scale(l[0], 2.5), 0.3));
              }) < kTol);
        CHECK(gradcheck({u({6})}, [](auto&, auto& l) { return weighted_sum(ops::tanh(l[0])); }) < kTol);
        CHECK(gradcheck({u({6}, -4, 4)}, [](auto&, auto& l) { return weighted_sum(ops::sigmoid(l[0])); }) < kTol);
        CHECK(gradcheck({u({6})}, [](auto&, auto& l) { return weighted_sum(ops::relu(l[0])); }) < kTol);
        CHECK(gradcheck({u({6}, 0.1, 2)}, [](auto&, auto& l) { return weighted_sum(ops::power(l[0], 1.5)); }) < kTol);
        CHECK(gradcheck({u({2, 6})}, [](auto&, auto& l) { return weighted_sum(ops::reshape(l[0], {3, 2, 2})); }) < kTol);
        CHECK(gradcheck({u({2, 3}), u({2, 2})}, [](auto&, auto& l) {
                  return weighted_sum(ops::concat(std::vector<V>{l[0], l[1]}, 1));
              }) < kTol);
        CHECK(gradcheck({u({2, 3}), u({1, 3})}, [](auto&, auto& l) {
                  return weighted_sum(ops::concat(std::vector<V>{l[0], l[1]}, 0));
              }) < kTol);
        CHECK(gradcheck({u({3, 6})}, [](auto&, auto& l) { return weighted_sum(ops::slice(l[0], 1, 2, 5)); }) < kTol);
        CHECK(gradcheck({u({5, 3})}, [](auto&, auto& l) {
                  return weighted_sum(ops::gather_rows(l[0], {4, 0, 4, 2}));
              }) < kTol);
        CHECK(gradcheck({u({2, 2, 5, 6}), u({3, 2, 3, 3})}, [](auto&, auto& l) {
                  return weighted_sum(ops::conv2d(l[0], l[1]));
              }) < kTol);
        CHECK(gradcheck({u({4, 7}, -3, 3)}, [](auto&, auto& l) {
                  return ops::softmax_cross_entropy(l[0], {1, 6, 0, 3});
              }) < kTol);
        // Batch-norm in training mode (batch statistics) and inference mode.
        CHECK(gradcheck({u({4, 3, 2, 2}), u({3}, 0.5, 1.5), u({3})}, [](auto&, auto& l) {
                  return weighted_sum(ops::batchnorm(l[0], l[1], l[2], ops::BatchNormStats<double>{}, true));
              }) < kTol);
        A rm = u({3}), rv = u({3}, 0.5, 2);
        CHECK(gradcheck({u({4, 3}), u({3}), u({3})}, [&](auto&, auto& l) {
                  return weighted_sum(ops::batchnorm(l[0], l[1], l[2], ops::BatchNormStats<double>{&rm, &rv}, false));
              }) < kTol);
        CHECK(gradcheck({u({3, 4})}, [](auto&, auto& l) {
                  std::mt19937_64 drng(7);
                  return weighted_sum(ops::dropout(l[0], 0.3, true, drng));
              }) < kTol);
        CHECK(gradcheck({u({4}), u({4}), u({4}), u({4})}, [](auto&, auto& l) {
                  auto p = ops::complex_mul<double>({l[0], l[1]}, {l[2], l[3]});
                  return ops::add(weighted_sum(p.re, 1), weighted_sum(p.im, 2));
              }) < kTol);
        CHECK(gradcheck({u({4}), u({4}), u({4}, 0.5, 1.5), u({4}, 0.5, 1.5)}, [](auto&, auto& l) {
                  auto q = ops::complex_div<double>({l[0], l[1]}, {l[2], l[3]}, 1e-6);
                  return ops::add(weighted_sum(q.re, 1), weighted_sum(q.im, 2));
              }) < kTol);
        // Only the imaginary output is consumed.
        CHECK(gradcheck({u({3}), u({3}), u({3}, 0.5, 1.5), u({3}, 0.5, 1.5)}, [](auto&, auto& l) {
                  return weighted_sum(ops::complex_div<double>({l[0], l[1]}, {l[2], l[3]}, 1e-6).im);
              }) < kTol);
    }
}

TEST_CASE("complex division guard keeps outputs finite") {
    Tape<double> t;
    auto nr = t.leaf(A({3}, {1, -2, 0.5}));
    auto ni = t.leaf(A({3}, {0.5, 1, 0}));
    auto dr = t.leaf(A({3}, {0, 1e-9, -3e-7}));
    auto di = t.leaf(A({3}, {0, -1e-9, 1e-8}));
    auto q = ops::complex_div<double>({nr, ni}, {dr, di}, 1e-6);
    for (double v : q.re.value().data) CHECK(std::isfinite(v));
    for (double v : q.im.value().data) CHECK(std::isfinite(v));
    // Zero denominator is replaced by eps + 0i.
    CHECK(q.re.value()[0] == doctest::Approx(1.0 / 1e-6));
    CHECK(q.im.value()[0] == doctest::Approx(0.5 / 1e-6));
    // Clamped modulus equals eps, so |q| = |num| / eps.
    const double mod = std::hypot(q.re.value()[1], q.im.value()[1]);
    CHECK(mod == doctest::Approx(std::hypot(-2.0, 1.0) / 1e-6));
    t.backward(ops::reduce_sum(ops::add(q.re, q.im)));
    CHECK(t.grad(dr.id).data == std::vector<double>(3, 0.0));
    for (double v : t.grad(nr.id).data) CHECK(std::isfinite(v));
}

TEST_CASE("dropout is the identity at inference and unbiased in training") {
    Tape<double> t(false);
    std::mt19937_64 rng(11);
    A ones({20000}, 1.0);
    auto x = t.constant(ones);
    auto y_eval = ops::dropout(x, 0.4, false, rng);
    CHECK(y_eval.value().data == ones.data);
    auto y = ops::dropout(x, 0.4, true, rng);
    double mean = 0;
    std::size_t zeros = 0;
    for (double v : y.value().data) {
        mean += v;
        zeros += v == 0.0;
    }
    mean /= static_cast<double>(ones.size());
    CHECK(std::abs(mean - 1.0) < 0.02);
    CHECK(zeros > 0);
}

TEST_CASE("batch-norm normalizes each feature on the training batch") {
    std::mt19937_64 rng(5);
    A x = random_array({64, 4}, rng, -3, 5);
    A running_mean({4}, 0.0), running_var({4}, 1.0);
    Tape<double> t;
    auto y = ops::batchnorm(t.leaf(x), t.constant(A({4}, 1.0)), t.constant(A({4}, 0.0)),
                            ops::BatchNormStats<double>{&running_mean, &running_var, &running_mean, &running_var},
                            true);
    for (std::size_t f = 0; f < 4; ++f) {
        double m = 0, v = 0, xm = 0;
        for (std::size_t b = 0; b < 64; ++b) {
            m += y.value().at(b, f);
            xm += x.at(b, f);
        }
        m /= 64;
        xm /= 64;
        for (std::size_t b = 0; b < 64; ++b) v += (y.value().at(b, f) - m) * (y.value().at(b, f) - m);
        v /= 64;
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1.0) < 1e-4);
        // One update with momentum 0.1 from mean 0.
        CHECK(running_mean[f] == doctest::Approx(0.1 * xm).epsilon(1e-12));
    }
}

TEST_CASE("gru cell hand cases") {
    const std::size_t dw = 3, d = 2;
    ParameterStore<double> store;
    for (const char* n : kGruParamNames) {
        const std::string name = std::string("g.") + n;
        Shape s = n[0] == 'w' ? Shape{dw, d} : n[0] == 'u' ? Shape{d, d} : Shape{d};
        store.add(name, A(s, 0.0));
    }
    Tape<double> t;
    Binding<double> b(t, store);
    auto p = bind_gru(b, "g");
    auto x = t.constant(A({1, dw}, {0.3, -1, 2}));
    auto h = t.constant(A({1, d}, {0.8, -0.4}));
    auto h1 = gru_cell(x, h, p);
    CHECK(h1.value().data[0] == doctest::Approx(0.4));
    CHECK(h1.value().data[1] == doctest::Approx(-0.2));
    auto h0 = gru_cell(x, t.constant(A({1, d}, 0.0)), p);
    CHECK(h0.value().data == std::vector<double>{0, 0});
    CHECK_THROWS_AS(gru_cell(t.constant(A({1, 4})), h, p), Error);
}

TEST_CASE("gru cell gradients match finite differences for every parameter") {
    std::mt19937_64 rng(77);
    const std::size_t dw = 3, d = 4, bsz = 2;
    for (int point = 0; point < kPoints; ++point) {
        std::vector<A> inputs = {random_array({bsz, dw}, rng), random_array({bsz, d}, rng)};
        for (const char* n : kGruParamNames) {
            Shape s = n[0] == 'w' ? Shape{dw, d} : n[0] == 'u' ? Shape{d, d} : Shape{d};
            inputs.push_back(random_array(s, rng));
        }
        const double err = gradcheck(inputs, [](auto&, auto& l) {
            GruVars<double> p{l[2], l[3], l[4], l[5], l[6], l[7], l[8], l[9], l[10]};
            // two steps so recurrent weights see a non-trivial hidden state
            auto h = gru_cell(l[0], l[1], p);
            return weighted_sum(gru_cell(l[0], h, p));
        });
        CHECK(err < kTol);
    }
}
