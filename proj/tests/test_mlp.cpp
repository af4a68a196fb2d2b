#include "encp/mlp.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace encp;

namespace {

Mat randn(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    return Mat::NullaryExpr(r, c, [&] { return n01(rng); });
}

double objective(const MlpParams& p, const Mat& x, const Mat& up) { return (forward(p, x).array() * up.array()).sum(); }

}  // namespace

TEST_CASE("forward: zero weights give the broadcast bias") {
    std::mt19937_64 rng(1);
    auto p = init_mlp({3, 4}, Activation::identity, rng);
    p.layers[0].w.setZero();
    p.layers[0].b << 1, -2, 3, 0.5;
    const Mat out = forward(p, randn(5, 3, rng));
    for (int i = 0; i < 5; ++i) CHECK((out.row(i).transpose() - p.layers[0].b).norm() == 0.0);
}

TEST_CASE("forward: single identity layer is affine") {
    std::mt19937_64 rng(2);
    auto p = init_mlp({3, 2}, Activation::identity, rng);
    p.layers[0].b << 0.3, -0.7;
    const Mat x = randn(6, 3, rng);
    const Mat expect = (x * p.layers[0].w.transpose()).rowwise() + p.layers[0].b.transpose();
    CHECK((forward(p, x) - expect).norm() < 1e-14);
    CHECK_THROWS_AS(forward(p, randn(6, 4, rng)), DimensionMismatch);
    CHECK_THROWS_AS(forward_backward(p, x, randn(5, 2, rng)), DimensionMismatch);
}

TEST_CASE("forward_backward matches central finite differences") {
    for (Activation act : {Activation::tanh, Activation::elu}) {
        std::mt19937_64 rng(3);
        auto p = init_mlp({3, 7, 5, 2}, act, rng);
        Vec flat = p.flatten();
        flat += 0.1 * Vec::NullaryExpr(flat.size(), [&] { return std::normal_distribution<double>()(rng); });
        p.unflatten(flat);
        const Mat x = randn(8, 3, rng), up = randn(8, 2, rng);
        const auto pass = forward_backward(p, x, up);
        const Vec g = pass.grads.flatten();
        const double h = 1e-5;
        std::uniform_int_distribution<int> pick(0, static_cast<int>(flat.size()) - 1);
        for (int t = 0; t < 100; ++t) {
            const int i = pick(rng);
            Vec a = flat, b = flat;
            a(i) += h;
            b(i) -= h;
            MlpParams pa = p, pb = p;
            pa.unflatten(a);
            pb.unflatten(b);
            const double fd = (objective(pa, x, up) - objective(pb, x, up)) / (2 * h);
            CHECK(std::abs(fd - g(i)) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) {
                Mat a = x, b = x;
                a(i, j) += h;
                b(i, j) -= h;
                const double fd = (objective(p, a, up) - objective(p, b, up)) / (2 * h);
                CHECK(std::abs(fd - pass.input_grad(i, j)) <= 1e-4 * std::max(1.0, std::abs(fd)));
            }
    }
}

TEST_CASE("flatten round trip and activation names") {
    std::mt19937_64 rng(4);
    auto p = init_mlp({2, 3, 1}, Activation::elu, rng);
    CHECK(p.n_params() == 2 * 3 + 3 + 3 + 1);
    MlpParams q = p;
    q.unflatten(p.flatten());
    CHECK((q.flatten() - p.flatten()).norm() == 0.0);
    CHECK_THROWS_AS(q.unflatten(Vec::Zero(3)), DimensionMismatch);
    CHECK(parse_activation(activation_name(Activation::elu)) == Activation::elu);
    CHECK_THROWS_AS(parse_activation("relu6"), InvalidParameter);
}

TEST_CASE("adam: zero gradient, first step, scalar reference") {
    AdamState s0(3, 0.01);
    Vec p = Vec::Constant(3, 2.0);
    adam_step(s0, p, Vec::Zero(3));
    CHECK((p - Vec::Constant(3, 2.0)).norm() == 0.0);

    AdamState s1(3, 0.01);
    Vec q = Vec::Zero(3);
    adam_step(s1, q, (Vec(3) << 0.5, -3.0, 1e-3).finished());
    CHECK(q(0) == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(q(1) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(q(2) == doctest::Approx(-0.01).epsilon(1e-3));

    // Scalar Adam on f(x) = (x - 3)^2, written out independently.
    double x = 0.5, m = 0.0, v = 0.0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    AdamState s2(1, lr);
    Vec y = Vec::Constant(1, 0.5);
    for (int t = 1; t <= 10; ++t) {
        const double g = 2 * (x - 3);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        adam_step(s2, y, Vec::Constant(1, 2 * (y(0) - 3)));
        CHECK(std::abs(y(0) - x) <= 1e-12);
    }
}

TEST_CASE("training a 1D regression toy reduces the loss on most seeds") {
    int improved = 0;
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(100 + seed);
        auto p = init_mlp({1, 16, 1}, Activation::tanh, rng);
        const Mat x = Mat::NullaryExpr(64, 1, [&] { return std::uniform_real_distribution<double>(-2, 2)(rng); });
        const Mat y = x.array().sin();
        auto loss = [&] { return (forward(p, x) - y).squaredNorm() / x.rows(); };
        const double before = loss();
        AdamState st(p.n_params(), 1e-2);
        for (int step = 0; step < 200; ++step) {
            const Mat up = 2.0 * (forward(p, x) - y) / x.rows();
            adam_step(st, p, forward_backward(p, x, up).grads);
        }
        improved += loss() < before;
    }
    CHECK(improved >= 9);
}

TEST_CASE("forward is deterministic") {
    std::mt19937_64 a(9), b(9);
    const auto pa = init_mlp({4, 8, 3}, Activation::tanh, a), pb = init_mlp({4, 8, 3}, Activation::tanh, b);
    std::mt19937_64 r(1);
    const Mat x = randn(10, 4, r);
    CHECK((forward(pa, x) - forward(pb, x)).norm() == 0.0);
}
