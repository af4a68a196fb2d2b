#include "encp/symm_gmm.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace encp {

namespace {

Mat lower_cholesky(const Mat& cov, const char* what) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw InvalidParameter(std::string(what) + " covariance is not positive definite");
    return llt.matrixL();
}

double chol_logdet(const Mat& l) { return 2.0 * l.diagonal().array().log().sum(); }

Vec component_log_x(const SymmetricGmmSpec& s, const Vec& x) {
    Vec lp(s.n_components());
    for (int c = 0; c < s.n_components(); ++c)
        lp(c) = s.log_weight() + log_normal_density(x, s.mean_x[c], s.chol_x[c], s.logdet_x[c]);
    return lp;
}

Vec component_log_y(const SymmetricGmmSpec& s, const Vec& y) {
    Vec lp(s.n_components());
    for (int c = 0; c < s.n_components(); ++c)
        lp(c) = log_normal_density(y, s.mean_y[c], s.chol_y[c], s.logdet_y[c]);
    return lp;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_density(const Vec& x, const Vec& mean, const Mat& chol, double logdet) {
    const Vec z = chol.triangularView<Eigen::Lower>().solve(x - mean);
    return -0.5 * (z.squaredNorm() + logdet + x.size() * std::log(2.0 * std::numbers::pi));
}

double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

std::string SymmetricGmmSpec::digest() const {
    std::ostringstream os;
    os.precision(17);
    os << group->label << '|' << p << '|' << q << '|' << n_g << '|' << seed;
    for (const auto& m : base_means) os << '|' << m.transpose();
    for (const auto& c : base_covs) os << '|' << c.reshaped().transpose();
    return hex_digest(fnv1a64(os.str()));
}

Dataset Dataset::rows(const std::vector<int>& idx) const {
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()), y.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.x.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
        out.y.row(static_cast<Eigen::Index>(i)) = y.row(idx[i]);
    }
    out.seed = seed;
    out.spec_digest = spec_digest;
    return out;
}

Dataset Dataset::head(int n) const {
    if (n > size()) throw InvalidParameter("dataset has " + std::to_string(size()) + " rows, requested " + std::to_string(n));
    Dataset out{x.topRows(n), y.topRows(n), seed, spec_digest};
    return out;
}

SymmetricGmmSpec spec_from_components(const GroupPtr& group, const GroupRepresentation& rep_x,
                                      const GroupRepresentation& rep_y, std::vector<Vec> means,
                                      std::vector<Mat> covs, std::uint64_t seed) {
    if (rep_x.group->label != group->label || rep_y.group->label != group->label)
        throw DimensionMismatch("representations belong to a different group");
    if (means.empty() || means.size() != covs.size())
        throw InvalidParameter("need the same nonzero number of base means and covariances");
    SymmetricGmmSpec s;
    s.group = group;
    s.rep_x = rep_x;
    s.rep_y = rep_y;
    s.p = rep_x.dim;
    s.q = rep_y.dim;
    s.n_g = static_cast<int>(means.size());
    s.seed = seed;
    const int d = s.p + s.q;
    for (std::size_t c = 0; c < means.size(); ++c) {
        require_dims(means[c].size() == d && covs[c].rows() == d && covs[c].cols() == d,
                     "base component " + std::to_string(c) + " does not have dimension p+q = " + std::to_string(d));
        if (covs[c].topRightCorner(s.p, s.q).norm() > 0.0 || covs[c].bottomLeftCorner(s.q, s.p).norm() > 0.0)
            throw InvalidParameter("base covariance must be block diagonal across the X/Y split");
        const Eigen::SelfAdjointEigenSolver<Mat> es(covs[c]);
        if (es.eigenvalues().minCoeff() < 1e-6)
            throw InvalidParameter("base covariance minimum eigenvalue below 1e-6");
    }
    s.base_means = std::move(means);
    s.base_covs = std::move(covs);
    for (int c = 0; c < s.n_g; ++c) {
        const Vec mx = s.base_means[c].head(s.p), my = s.base_means[c].tail(s.q);
        const Mat sx = s.base_covs[c].topLeftCorner(s.p, s.p), sy = s.base_covs[c].bottomRightCorner(s.q, s.q);
        for (int g = 0; g < group->order; ++g) {
            s.mean_x.push_back(rep_x(g) * mx);
            s.mean_y.push_back(rep_y(g) * my);
            s.cov_x.push_back(rep_x(g) * sx * rep_x(g).transpose());
            s.cov_y.push_back(rep_y(g) * sy * rep_y(g).transpose());
            s.chol_x.push_back(lower_cholesky(s.cov_x.back(), "x"));
            s.chol_y.push_back(lower_cholesky(s.cov_y.back(), "y"));
            s.logdet_x.push_back(chol_logdet(s.chol_x.back()));
            s.logdet_y.push_back(chol_logdet(s.chol_y.back()));
        }
    }
    return s;
}

SymmetricGmmSpec build_spec(const GroupPtr& group, const GroupRepresentation& rep_x,
                            const GroupRepresentation& rep_y, int n_g, std::uint64_t seed) {
    if (n_g < 1) throw InvalidParameter("n_g must be >= 1");
    auto rng = make_stream(seed, "gmm-spec");
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int p = rep_x.dim, q = rep_y.dim;
    auto random_cov = [&](int d) {
        Mat a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = normal(rng) / std::sqrt(static_cast<double>(d));
        return Mat(a * a.transpose() + 0.05 * Mat::Identity(d, d));
    };
    std::vector<Vec> means;
    std::vector<Mat> covs;
    for (int c = 0; c < n_g; ++c) {
        Vec m(p + q);
        for (int i = 0; i < p + q; ++i) m(i) = unif(rng);
        Mat cov = Mat::Zero(p + q, p + q);
        cov.topLeftCorner(p, p) = random_cov(p);
        cov.bottomRightCorner(q, q) = random_cov(q);
        means.push_back(m);
        covs.push_back(cov);
    }
    return spec_from_components(group, rep_x, rep_y, std::move(means), std::move(covs), seed);
}

SymmetricGmmSpec build_spec(const GroupPtr& group, int p, int q, int n_g, std::uint64_t seed) {
    if (p < 1 || q < 1) throw InvalidParameter("p and q must be >= 1");
    return build_spec(group, default_data_representation(group, p), default_data_representation(group, q), n_g, seed);
}

Dataset sample(const SymmetricGmmSpec& spec, int n, std::uint64_t seed) {
    if (n < 1) throw InvalidParameter("sample size must be >= 1");
    auto rng = make_stream(seed, "gmm-sample");
    std::uniform_int_distribution<int> pick(0, spec.n_components() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.x.resize(n, spec.p);
    d.y.resize(n, spec.q);
    d.seed = seed;
    d.spec_digest = spec.digest();
    Vec zx(spec.p), zy(spec.q);
    for (int i = 0; i < n; ++i) {
        const int c = pick(rng);
        for (int k = 0; k < spec.p; ++k) zx(k) = normal(rng);
        for (int k = 0; k < spec.q; ++k) zy(k) = normal(rng);
        d.x.row(i) = (spec.mean_x[c] + spec.chol_x[c] * zx).transpose();
        d.y.row(i) = (spec.mean_y[c] + spec.chol_y[c] * zy).transpose();
    }
    return d;
}

double log_density_x(const SymmetricGmmSpec& spec, const Vec& x) {
    require_dims(x.size() == spec.p, "x has wrong dimension");
    return log_sum_exp(component_log_x(spec, x));
}

double log_density_y(const SymmetricGmmSpec& spec, const Vec& y) {
    require_dims(y.size() == spec.q, "y has wrong dimension");
    return log_sum_exp(component_log_y(spec, y).array() + spec.log_weight());
}

double log_density_xy(const SymmetricGmmSpec& spec, const Vec& x, const Vec& y) {
    require_dims(x.size() == spec.p && y.size() == spec.q, "(x, y) has wrong dimension");
    return log_sum_exp(component_log_x(spec, x) + component_log_y(spec, y));
}

double pmd_ratio(const SymmetricGmmSpec& spec, const Vec& x, const Vec& y) {
    const double v = log_density_xy(spec, x, y) - log_density_x(spec, x) - log_density_y(spec, y);
    return std::isfinite(v) ? std::exp(v) : 0.0;
}

Vec posterior_weights(const SymmetricGmmSpec& spec, const Vec& x) {
    require_dims(x.size() == spec.p, "x has wrong dimension");
    const Vec lp = component_log_x(spec, x);
    const double m = lp.maxCoeff();
    Vec w = (lp.array() - m).exp();
    return w / w.sum();
}

Vec conditional_mean(const SymmetricGmmSpec& spec, const Vec& x) {
    const Vec w = posterior_weights(spec, x);
    Vec out = Vec::Zero(spec.q);
    for (int c = 0; c < spec.n_components(); ++c) out += w(c) * spec.mean_y[c];
    return out;
}

double conditional_cdf(const SymmetricGmmSpec& spec, const Vec& x, int j, double t) {
    if (j < 0 || j >= spec.q) throw InvalidParameter("conditional_cdf: dimension index out of range");
    const Vec w = posterior_weights(spec, x);
    double out = 0.0;
    for (int c = 0; c < spec.n_components(); ++c)
        out += w(c) * normal_cdf((t - spec.mean_y[c](j)) / std::sqrt(spec.cov_y[c](j, j)));
    return out;
}

Dataset sample_moons(const MoonsBenchmarkSpec& spec, int n, std::uint64_t seed) {
    if (!(spec.beta > 0.0)) throw InvalidParameter("moons beta must be > 0");
    if (n < 1) throw InvalidParameter("sample size must be >= 1");
    auto rng = make_stream(seed, "moons-sample");
    std::uniform_real_distribution<double> ux(spec.x_lo, spec.x_hi), uz(-std::numbers::pi, std::numbers::pi),
        uphi(0.0, 2.0 * std::numbers::pi), ur(-spec.r_max, spec.r_max);
    Dataset d;
    d.x.resize(n, 1);
    d.y.resize(n, 2);
    d.seed = seed;
    std::ostringstream os;
    os.precision(17);
    os << "moons|" << spec.beta << '|' << spec.x_lo << '|' << spec.x_hi << '|' << spec.r_max;
    d.spec_digest = hex_digest(fnv1a64(os.str()));
    for (int i = 0; i < n; ++i) {
        const double x = ux(rng), z = uz(rng), phi = uphi(rng), r = ur(rng);
        d.x(i, 0) = x;
        d.y(i, 0) = z / (spec.beta * x) + r * std::cos(phi);
        d.y(i, 1) = 0.5 * (1.0 - std::cos(z)) + r * std::sin(phi) + std::sin(x);
    }
    return d;
}

GroupRepresentation moons_rep_x(const GroupPtr& group) { return trivial_representation(group, 1); }

GroupRepresentation moons_rep_y(const GroupPtr& group) {
    GroupRepresentation rep = trivial_representation(group, 2);
    if (group->order == 1) return rep;
    if (group->order != 2) throw UnsupportedGroup("moons benchmark supports only the trivial group and C2");
    rep.matrices[1 - group->identity_index](0, 0) = -1.0;
    return rep;
}

}  // namespace encp
