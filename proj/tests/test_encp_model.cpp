#include "encp/encp_model.hpp"

#include <doctest.h>

#include <random>

using namespace encp;

namespace {

Mat randn(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    return Mat::NullaryExpr(r, c, [&] { return n01(rng); });
}

ModelConfig small_cfg(int r) {
    ModelConfig c;
    c.r = r;
    c.hidden = {8, 8};
    c.operator_init = 0.3;
    return c;
}

// Randomize the operator blocks so every term of the loss is exercised.
void scramble_blocks(EncpModel& m, std::mt19937_64& rng) {
    for (auto& b : m.blocks) b = 0.5 * randn(static_cast<int>(b.rows()), static_cast<int>(b.cols()), rng);
}

// Brute-force per-block K_k(a, b) = u^(k)(x_a)^T (O^(k) (x) I) v^(k)(y_b).
Mat block_k(const Mat& u, const Mat& v, const Mat& o, const IsotypicBlock& b) {
    const int n = static_cast<int>(u.rows());
    Mat k = Mat::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c)
            for (int s = 0; s < b.multiplicity; ++s)
                for (int t = 0; t < b.multiplicity; ++t)
                    for (int j = 0; j < b.irrep_dim; ++j)
                        k(a, c) += u(a, b.offset + s * b.irrep_dim + j) * o(s, t) * v(c, b.offset + t * b.irrep_dim + j);
    return k;
}

double brute_l0(const Mat& k) {
    const int n = static_cast<int>(k.rows());
    double diag = 0.0, off = 0.0;
    for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) (a == c ? diag : off) += a == c ? k(a, c) : k(a, c) * k(a, c);
    return -2.0 * diag / n + off / (static_cast<double>(n) * (n - 1));
}

double brute_omega(const Mat& f, const IsotypicBlock& b) {
    const int n = static_cast<int>(f.rows()), m = b.multiplicity, d = b.irrep_dim;
    std::vector<Mat> z(n);
    for (int a = 0; a < n; ++a) {
        Mat ma(m, d);
        for (int s = 0; s < m; ++s)
            for (int j = 0; j < d; ++j) ma(s, j) = f(a, b.offset + s * d + j);
        z[a] = ma * ma.transpose() / d;
    }
    double cross = 0.0, tr = 0.0;
    for (int a = 0; a < n; ++a) {
        tr += z[a].trace();
        for (int c = 0; c < n; ++c)
            if (a != c) cross += (z[a].array() * z[c].array()).sum();
    }
    return d * (cross / (static_cast<double>(n) * (n - 1)) - 2.0 * tr / n + m);
}

}  // namespace

TEST_CASE("kernel_eval: zero operator, dense oracle and invariance") {
    const auto g = make_group("D3");
    const auto rx = default_data_representation(g, 2), ry = default_data_representation(g, 3);
    auto model = make_model(g, rx, ry, small_cfg(12), 5);
    std::mt19937_64 rng(1);
    const Mat x = randn(20, 2, rng), y = randn(20, 3, rng);
    refresh_center(model.enc_x, x);
    refresh_center(model.enc_y, y);
    scramble_blocks(model, rng);

    const Mat e = model.operator_matrix();
    for (int i = 0; i < 10; ++i) {
        const Vec xi = x.row(i).transpose(), yi = y.row(i).transpose();
        const double dense = 1.0 + encode(model.enc_x, xi).dot(e * encode(model.enc_y, yi));
        CHECK(std::abs(kernel_eval(model, xi, yi) - dense) < 1e-12);
    }
    const Mat km = kernel_matrix(model, x, y);
    CHECK(std::abs(km(3, 7) - kernel_eval(model, x.row(3).transpose(), y.row(7).transpose())) < 1e-12);
    CHECK((kernel_pairs(model, x, y) - km.diagonal()).norm() < 1e-12);

    // E commutes with the isotypic action.
    for (int h = 0; h < g->order; ++h)
        CHECK((model.enc_x.rep_iso(h) * e - e * model.enc_y.rep_iso(h)).norm() < 1e-12);

    double worst = 0.0;
    std::uniform_int_distribution<int> pick(0, g->order - 1);
    for (int t = 0; t < 1000; ++t) {
        const Vec xi = randn(2, 1, rng).col(0), yi = randn(3, 1, rng).col(0);
        const int h = pick(rng);
        worst = std::max(worst, std::abs(kernel_eval(model, Vec(rx(h) * xi), Vec(ry(h) * yi)) - kernel_eval(model, xi, yi)));
    }
    CHECK(worst <= 1e-10);

    for (auto& b : model.blocks) b.setZero();
    CHECK((kernel_matrix(model, x, y).array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(empirical_loss(model, x, y, 0.0, false).terms.l0 == 0.0);
    CHECK_THROWS_AS(kernel_eval(model, Vec::Zero(3), Vec::Zero(3)), DimensionMismatch);
}

TEST_CASE("singular values of the operator repeat with the irrep dimension") {
    const auto g = make_group("D3");
    auto model = make_model(g, default_data_representation(g, 2), default_data_representation(g, 2), small_cfg(12), 2);
    std::mt19937_64 rng(2);
    scramble_blocks(model, rng);
    const Eigen::JacobiSVD<Mat> svd(model.operator_matrix());
    const Vec s = svd.singularValues();
    for (std::size_t k = 0; k < model.blocks.size(); ++k) {
        const int d = model.enc_x.iso.blocks[k].irrep_dim;
        const Eigen::JacobiSVD<Mat> sk(model.blocks[k]);
        for (int i = 0; i < sk.singularValues().size(); ++i) {
            int count = 0;
            for (int j = 0; j < s.size(); ++j) count += std::abs(s(j) - sk.singularValues()(i)) < 1e-10;
            CHECK(count >= d);
        }
    }
}

TEST_CASE("U-statistic terms match a brute-force double loop") {
    for (int n : {8, 16}) {
        const auto g = make_group("C3");
        const auto rx = default_data_representation(g, 2), ry = default_data_representation(g, 2);
        auto model = make_model(g, rx, ry, small_cfg(6), 3);
        std::mt19937_64 rng(n);
        const Mat x = randn(n, 2, rng), y = randn(n, 2, rng);
        refresh_center(model.enc_x, randn(30, 2, rng));
        refresh_center(model.enc_y, randn(30, 2, rng));
        scramble_blocks(model, rng);
        const double gamma = 0.3;
        const auto terms = empirical_loss(model, x, y, gamma, false).terms;
        const Mat u = encode(model.enc_x, x), v = encode(model.enc_y, y);
        double l0 = 0.0, omega = 0.0;
        for (std::size_t k = 0; k < model.blocks.size(); ++k) {
            const auto& b = model.enc_x.iso.blocks[k];
            const double lk = brute_l0(block_k(u, v, model.blocks[k], b));
            CHECK(std::abs(terms.l0_blocks[k] - lk) < 1e-12);
            CHECK(std::abs(terms.omega_x[k] - brute_omega(u, b)) < 1e-12);
            CHECK(std::abs(terms.omega_y[k] - brute_omega(v, b)) < 1e-12);
            l0 += lk;
            omega += brute_omega(u, b) + brute_omega(v, b);
        }
        // Separability: the total unregularized term is the sum of the per-block terms.
        CHECK(std::abs(terms.l0 - l0) < 1e-12);
        const auto& t = model.enc_x.iso.blocks.front();
        const double cent = 2.0 * gamma * (u.middleCols(t.offset, t.size()).colwise().mean().squaredNorm() +
                                           v.middleCols(t.offset, t.size()).colwise().mean().squaredNorm());
        CHECK(std::abs(terms.total - (l0 + gamma * omega + cent)) < 1e-12);
    }
}

TEST_CASE("trivial group with gamma = 0 reproduces the flat contrastive loss") {
    const auto g = make_group("trivial");
    const auto rx = trivial_representation(g, 2), ry = trivial_representation(g, 1);
    auto model = make_model(g, rx, ry, small_cfg(5), 4);
    std::mt19937_64 rng(4);
    const int n = 12;
    const Mat x = randn(n, 2, rng), y = randn(n, 1, rng);
    refresh_center(model.enc_x, x);
    refresh_center(model.enc_y, y);
    scramble_blocks(model, rng);

    // Unstructured model: plain MLP features minus their sample means, one dense matrix.
    const Mat fx = forward(model.enc_x.backbone, x), fy = forward(model.enc_y.backbone, y);
    const Mat u = fx.rowwise() - fx.colwise().mean(), v = fy.rowwise() - fy.colwise().mean();
    const Mat e = model.blocks.front();
    const Mat kap = (u * e * v.transpose()).array() + 1.0;
    double pos = 0.0, neg = 0.0, ukk = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) {
                pos += kap(a, a);
            } else {
                neg += kap(a, b) * kap(a, b);
                ukk += kap(a, b) - 1.0;
            }
        }
    const double pairs = static_cast<double>(n) * (n - 1);
    const double flat = -2.0 * pos / n + neg / pairs;
    // With kappa = 1 + K the flat loss expands to L0 - 1 + 2 * mean_{a != b} K(a, b).
    const auto terms = empirical_loss(model, x, y, 0.0, false).terms;
    CHECK(std::abs(flat - (terms.l0 - 1.0 + 2.0 * ukk / pairs)) < 1e-12);
    CHECK(terms.total == doctest::Approx(terms.l0).epsilon(1e-15));
}

TEST_CASE("empirical_loss gradient matches finite differences on a 4-sample batch") {
    for (const char* label : {"C2", "trivial"}) {
        const auto g = make_group(label);
        const auto rx = default_data_representation(g, 2), ry = default_data_representation(g, 1);
        auto model = make_model(g, rx, ry, small_cfg(4), 6);
        std::mt19937_64 rng(6);
        const Mat x = randn(4, 2, rng), y = randn(4, 1, rng);
        refresh_center(model.enc_x, randn(10, 2, rng));
        refresh_center(model.enc_y, randn(10, 1, rng));
        scramble_blocks(model, rng);
        const double gamma = 0.5;
        const Vec grad = empirical_loss(model, x, y, gamma, true).grad;
        const Vec flat = model.flatten();
        const double h = 1e-5;
        for (int i = 0; i < flat.size(); ++i) {
            Vec a = flat, b = flat;
            a(i) += h;
            b(i) -= h;
            auto ma = model, mb = model;
            ma.unflatten(a);
            mb.unflatten(b);
            const double fd = (empirical_loss(ma, x, y, gamma, false).terms.total -
                               empirical_loss(mb, x, y, gamma, false).terms.total) / (2 * h);
            CHECK(std::abs(fd - grad(i)) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("empirical_loss rejects small batches") {
    const auto g = make_group("C2");
    auto model = make_model(g, default_data_representation(g, 1), default_data_representation(g, 1), small_cfg(4), 1);
    CHECK_THROWS_AS(empirical_loss(model, Mat::Zero(3, 1), Mat::Zero(3, 1), 0.1), InvalidParameter);
    CHECK_THROWS_AS(empirical_loss(model, Mat::Zero(5, 1), Mat::Zero(4, 1), 0.1), DimensionMismatch);
    CHECK_THROWS_AS(make_model(g, default_data_representation(g, 1), default_data_representation(g, 1), small_cfg(5), 1),
                    InvalidParameter);
}

TEST_CASE("train: progress on most seeds, invariance and determinism") {
    const auto g = make_group("C2");
    const auto spec = build_spec(g, 1, 1, 3, 7);
    ModelConfig mc;
    mc.r = 8;
    mc.hidden = {16, 16};
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 64;
    tc.lr = 3e-3;
    int improved = 0;
    for (int seed = 0; seed < 10; ++seed) {
        const auto data = sample(spec, 512, 100 + seed);
        auto model = make_model(g, spec.rep_x, spec.rep_y, mc, seed);
        tc.seed = seed;
        const auto hist = train(model, data, tc);
        CHECK(hist.epochs.size() == 50);
        improved += evaluate_loss(model, data, tc.gamma, tc.batch_size).l0 < hist.initial.l0;
        if (seed == 0) {
            std::mt19937_64 rng(1);
            double worst = 0.0;
            for (int t = 0; t < 200; ++t) {
                const Vec x = randn(1, 1, rng).col(0), y = randn(1, 1, rng).col(0);
                worst = std::max(worst, std::abs(kernel_eval(model, Vec(-x), Vec(-y)) - kernel_eval(model, x, y)));
            }
            CHECK(worst <= 1e-10);
            CHECK(weight_equivariance_error(model.enc_x) <= 1e-12);
        }
    }
    CHECK(improved >= 9);

    const auto data = sample(spec, 300, 1);
    tc.epochs = 3;
    tc.seed = 11;
    auto m1 = make_model(g, spec.rep_x, spec.rep_y, mc, 11), m2 = make_model(g, spec.rep_x, spec.rep_y, mc, 11);
    const auto h1 = train(m1, data, tc), h2 = train(m2, data, tc);
    for (int e = 0; e < 3; ++e) CHECK(h1.epochs[e].loss == h2.epochs[e].loss);
    CHECK((m1.flatten() - m2.flatten()).norm() == 0.0);
}

TEST_CASE("train: validation restores the best epoch and non-finite data aborts") {
    const auto g = make_group("C2");
    const auto spec = build_spec(g, 1, 1, 2, 3);
    const auto data = sample(spec, 256, 1), val = sample(spec, 128, 2);
    ModelConfig mc;
    mc.r = 4;
    mc.hidden = {8};
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 64;
    auto model = make_model(g, spec.rep_x, spec.rep_y, mc, 1);
    const auto hist = train(model, data, tc, &val);
    REQUIRE(hist.best_epoch >= 0);
    double best = 1e300;
    for (const auto& e : hist.epochs) best = std::min(best, *e.val_loss);
    CHECK(*hist.epochs[hist.best_epoch].val_loss == best);
    CHECK(evaluate_loss(model, val, tc.gamma, tc.batch_size).total == doctest::Approx(best).epsilon(1e-12));

    auto bad = data;
    bad.x(5, 0) = std::numeric_limits<double>::quiet_NaN();
    auto m2 = make_model(g, spec.rep_x, spec.rep_y, mc, 1);
    CHECK_THROWS_AS(train(m2, bad, tc), TrainingError);
}
