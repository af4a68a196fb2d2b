#include "encp/symm_gmm.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <numbers>

using namespace encp;

namespace {

double gauss_pdf(double x, double m, double var) {
    return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Hand-built 1D C2 mixture: base components (mx, my, vx, vy), both coordinates flipped by g.
struct Toy {
    std::vector<std::array<double, 4>> base;
    SymmetricGmmSpec spec;
};

Toy make_toy() {
    Toy t;
    t.base = {{0.7, 1.2, 0.3, 0.5}, {-1.5, 0.4, 0.8, 0.2}};
    const auto g = make_group("C2");
    const auto rep = default_data_representation(g, 1);
    std::vector<Vec> means;
    std::vector<Mat> covs;
    for (const auto& b : t.base) {
        means.push_back((Vec(2) << b[0], b[1]).finished());
        covs.push_back((Mat(2, 2) << b[2], 0, 0, b[3]).finished());
    }
    t.spec = spec_from_components(g, rep, rep, means, covs);
    return t;
}

// Straight-line densities over the explicit four orbit components.
double toy_joint(const Toy& t, double x, double y) {
    double s = 0.0;
    for (const auto& b : t.base)
        for (double sg : {1.0, -1.0}) s += 0.25 * gauss_pdf(x, sg * b[0], b[2]) * gauss_pdf(y, sg * b[1], b[3]);
    return s;
}
double toy_px(const Toy& t, double x) {
    double s = 0.0;
    for (const auto& b : t.base)
        for (double sg : {1.0, -1.0}) s += 0.25 * gauss_pdf(x, sg * b[0], b[2]);
    return s;
}
double toy_py(const Toy& t, double y) {
    double s = 0.0;
    for (const auto& b : t.base)
        for (double sg : {1.0, -1.0}) s += 0.25 * gauss_pdf(y, sg * b[1], b[3]);
    return s;
}

Vec v1(double a) { return Vec::Constant(1, a); }

}  // namespace

TEST_CASE("build_spec: trivial group single component has block covariance") {
    const auto spec = build_spec(make_group("trivial"), 2, 3, 1, 11);
    CHECK(spec.n_components() == 1);
    CHECK(spec.base_covs[0].topRightCorner(2, 3).norm() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Mat> es(spec.base_covs[0]);
    CHECK(es.eigenvalues().minCoeff() >= 0.05 - 1e-12);
}

TEST_CASE("build_spec: C2 component set is closed under the sign action") {
    const auto spec = build_spec(make_group("C2"), 1, 1, 3, 4);
    CHECK(spec.n_components() == 6);
    for (int c = 0; c < spec.n_components(); ++c) {
        bool found = false;
        for (int d = 0; d < spec.n_components(); ++d)
            found = found || ((spec.mean_x[d] + spec.mean_x[c]).norm() < 1e-15 &&
                              (spec.mean_y[d] + spec.mean_y[c]).norm() < 1e-15 &&
                              (spec.cov_x[d] - spec.cov_x[c]).norm() < 1e-15);
        CHECK(found);
    }
}

TEST_CASE("build_spec and sample are deterministic") {
    const auto g = make_group("D3");
    const auto a = build_spec(g, 2, 2, 2, 9), b = build_spec(g, 2, 2, 2, 9);
    CHECK(a.digest() == b.digest());
    const auto da = sample(a, 100, 3), db = sample(b, 100, 3);
    CHECK((da.x - db.x).norm() == 0.0);
    CHECK((da.y - db.y).norm() == 0.0);
    CHECK(build_spec(g, 2, 2, 2, 10).digest() != a.digest());
    CHECK_THROWS_AS(spec_from_components(g, default_data_representation(g, 2), default_data_representation(g, 2),
                                         {Vec::Zero(3)}, {Mat::Identity(3, 3)}),
                    DimensionMismatch);
}

TEST_CASE("sample: moments match within 4 standard errors") {
    const auto single = build_spec(make_group("trivial"), 1, 1, 1, 5);
    CHECK(sample(single, 1, 1).size() == 1);
    const int n = 100000;
    const auto d = sample(single, n, 6);
    const double se_x = std::sqrt(single.cov_x[0](0, 0) / n), se_y = std::sqrt(single.cov_y[0](0, 0) / n);
    CHECK(std::abs(d.x.col(0).mean() - single.mean_x[0](0)) < 4 * se_x);
    CHECK(std::abs(d.y.col(0).mean() - single.mean_y[0](0)) < 4 * se_y);

    const auto c2 = build_spec(make_group("C2"), 1, 1, 3, 7);
    const auto dc = sample(c2, n, 8);
    const double mean = dc.x.col(0).mean();
    const double sd = std::sqrt((dc.x.col(0).array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean) < 4 * sd / std::sqrt(n));
}

TEST_CASE("pmd_ratio: independence gives one") {
    const auto spec = build_spec(make_group("trivial"), 2, 2, 1, 3);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 50; ++i) {
        const Vec x = Vec::NullaryExpr(2, [&] { return 3 * n01(rng); });
        const Vec y = Vec::NullaryExpr(2, [&] { return 3 * n01(rng); });
        CHECK(std::abs(pmd_ratio(spec, x, y) - 1.0) < 1e-12);
    }
}

TEST_CASE("pmd_ratio and conditional_mean: exact symmetry on 1000 random triples") {
    const auto g = make_group("C2");
    const auto spec = build_spec(g, 1, 1, 3, 7);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    double worst_k = 0.0, worst_m = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec x = v1(2 * n01(rng)), y = v1(2 * n01(rng));
        const int e = static_cast<int>(rng() % 2);
        worst_k = std::max(worst_k, std::abs(pmd_ratio(spec, spec.rep_x(e) * x, spec.rep_y(e) * y) - pmd_ratio(spec, x, y)));
        worst_m = std::max(worst_m, (conditional_mean(spec, spec.rep_x(e) * x) - spec.rep_y(e) * conditional_mean(spec, x)).norm());
    }
    CHECK(worst_k <= 1e-10);
    CHECK(worst_m <= 1e-10);

    const auto d6 = make_group("D6");
    const auto s6 = build_spec(d6, 3, 2, 2, 1);
    for (int i = 0; i < 200; ++i) {
        const Vec x = Vec::NullaryExpr(3, [&] { return n01(rng); }), y = Vec::NullaryExpr(2, [&] { return n01(rng); });
        const int e = static_cast<int>(rng() % 12);
        CHECK(std::abs(pmd_ratio(s6, s6.rep_x(e) * x, s6.rep_y(e) * y) - pmd_ratio(s6, x, y)) <= 1e-10);
    }
}

TEST_CASE("pmd_ratio matches a straight-line mixture oracle") {
    const Toy t = make_toy();
    for (const auto& [x, y] : std::vector<std::pair<double, double>>{{0.3, -0.2}, {1.1, 1.4}, {-2.0, 0.1}, {0.0, 0.0}}) {
        const double oracle = toy_joint(t, x, y) / (toy_px(t, x) * toy_py(t, y));
        CHECK(std::abs(pmd_ratio(t.spec, v1(x), v1(y)) - oracle) < 1e-12 * std::max(1.0, oracle));
    }
    // Far in the tails the ratio stays finite thanks to log-space evaluation.
    CHECK(std::isfinite(pmd_ratio(t.spec, v1(60.0), v1(-45.0))));
}

TEST_CASE("conditional_mean: independence and a quadrature oracle") {
    const auto single = build_spec(make_group("trivial"), 1, 2, 1, 3);
    CHECK((conditional_mean(single, v1(0.7)) - single.mean_y[0]).norm() < 1e-15);

    const Toy t = make_toy();
    for (double x : {0.7, -1.5, 0.2}) {
        // Trapezoid integration of y p(x, y) / p(x) on a wide fine grid.
        double num = 0.0, den = 0.0;
        const double lo = -12.0, hi = 12.0;
        const int steps = 200000;
        const double h = (hi - lo) / steps;
        for (int i = 0; i <= steps; ++i) {
            const double y = lo + i * h, w = (i == 0 || i == steps) ? 0.5 : 1.0;
            const double p = toy_joint(t, x, y);
            num += w * y * p;
            den += w * p;
        }
        CHECK(std::abs(conditional_mean(t.spec, v1(x))(0) - num / den) < 1e-6);
    }
}

TEST_CASE("conditional_cdf: limits, symmetry centre and Monte-Carlo agreement") {
    const Toy t = make_toy();
    CHECK(conditional_cdf(t.spec, v1(0.4), 0, -1e6) == doctest::Approx(0.0));
    CHECK(conditional_cdf(t.spec, v1(0.4), 0, 1e6) == doctest::Approx(1.0));
    CHECK(std::abs(conditional_cdf(t.spec, v1(0.0), 0, 0.0) - 0.5) < 1e-14);
    double prev = 0.0;
    for (double s = -5; s <= 5; s += 0.25) {
        const double f = conditional_cdf(t.spec, v1(0.9), 0, s);
        CHECK(f >= prev);
        prev = f;
    }
    CHECK_THROWS_AS(conditional_cdf(t.spec, v1(0.0), 1, 0.0), InvalidParameter);

    const Vec x = v1(0.9);
    const Vec w = posterior_weights(t.spec, x);
    std::mt19937_64 rng(17);
    std::discrete_distribution<int> pick(w.data(), w.data() + w.size());
    std::normal_distribution<double> n01;
    const int n = 100000;
    const double thr = 0.5;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const int c = pick(rng);
        hits += t.spec.mean_y[c](0) + std::sqrt(t.spec.cov_y[c](0, 0)) * n01(rng) <= thr;
    }
    const double p = conditional_cdf(t.spec, x, 0, thr);
    CHECK(std::abs(hits / static_cast<double>(n) - p) < 3 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("kernel mass: E_x E_y kappa is one within 3 SE") {
    const auto spec = build_spec(make_group("C2"), 1, 1, 3, 7);
    const int n = 100000;
    const auto a = sample(spec, n, 21), b = sample(spec, n, 22);
    Vec k(n);
    for (int i = 0; i < n; ++i) k(i) = pmd_ratio(spec, a.x.row(i).transpose(), b.y.row(i).transpose());
    const double mean = k.mean();
    const double sd = std::sqrt((k.array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean - 1.0) < 3 * sd / std::sqrt(n));
}

TEST_CASE("sampling agrees with the analytic x marginal (chi-square)") {
    const auto spec = build_spec(make_group("C2"), 1, 1, 3, 7);
    const int n = 100000, bins = 40;
    const auto d = sample(spec, n, 31);
    const double lo = -5.0, hi = 5.0, w = (hi - lo) / bins;
    auto cdf_x = [&](double t) {
        double s = 0.0;
        for (int c = 0; c < spec.n_components(); ++c)
            s += normal_cdf((t - spec.mean_x[c](0)) / std::sqrt(spec.cov_x[c](0, 0)));
        return s / spec.n_components();
    };
    std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
    for (int i = 0; i < n; ++i) {
        const int b = std::clamp(static_cast<int>(std::floor((d.x(i, 0) - lo) / w)), 0, bins - 1);
        observed[b] += 1.0;
    }
    for (int b = 0; b < bins; ++b) {
        const double left = b == 0 ? -1e300 : lo + b * w, right = b == bins - 1 ? 1e300 : lo + (b + 1) * w;
        expected[b] = n * (cdf_x(right) - cdf_x(left));
    }
    double chi2 = 0.0;
    int used = 0;
    for (int b = 0; b < bins; ++b)
        if (expected[b] > 5.0) {
            chi2 += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
            ++used;
        }
    const boost::math::chi_squared dist(used - 1);
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
}

TEST_CASE("moons benchmark") {
    MoonsBenchmarkSpec ms;
    const int n = 100000;
    const auto d = sample_moons(ms, n, 3);
    CHECK(d.x.minCoeff() >= 0.8);
    CHECK(d.x.maxCoeff() <= 3.2);
    const double mean = d.y.col(0).mean();
    const double sd = std::sqrt((d.y.col(0).array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean) < 4 * sd / std::sqrt(n));
    // y1 - sin(x) = (1 - cos z)/2 + r sin(phi) with |r| <= 0.1.
    const Vec rest = d.y.col(1).array() - d.x.col(0).array().sin();
    CHECK(rest.minCoeff() >= -0.1);
    CHECK(rest.maxCoeff() <= 1.1);
    CHECK_THROWS_AS(sample_moons(MoonsBenchmarkSpec{-1.0}, 10, 1), InvalidParameter);
    const auto g = make_group("C2");
    CHECK(moons_rep_y(g)(1)(0, 0) == -1.0);
    CHECK(moons_rep_y(g)(1)(1, 1) == 1.0);
}
