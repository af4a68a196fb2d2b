#include "encp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <iostream>

namespace encp {

namespace {

bool log_enabled() {
    const char* v = std::getenv("ENCP_LOG");
    return v && std::string(v) != "0" && std::string(v) != "quiet";
}

Mat block_of(const Mat& m, const IsotypicBlock& b) { return m.block(b.offset, b.offset, b.size(), b.size()); }

}  // namespace

ObservableSamples ObservableSamples::from_function(const Mat& y, const GroupRepresentation& rep_y,
                                                   const std::function<Vec(const Vec&)>& h, int dim) {
    require_dims(y.cols() == rep_y.dim, "observable: y width does not match its representation");
    ObservableSamples s;
    s.dim = dim;
    for (int g = 0; g < rep_y.group->order; ++g) {
        Mat vals(y.rows(), dim);
        for (Eigen::Index n = 0; n < y.rows(); ++n) {
            const Vec hv = h(rep_y(g) * y.row(n).transpose());
            require_dims(hv.size() == dim, "observable returned a vector of the wrong size");
            vals.row(n) = hv.transpose();
        }
        s.values.push_back(std::move(vals));
    }
    return s;
}

ObservableSamples ObservableSamples::equivariant(const Mat& h, const GroupRepresentation& rep_z) {
    require_dims(h.cols() == rep_z.dim, "observable: value width does not match rep_z");
    ObservableSamples s;
    s.dim = rep_z.dim;
    s.rep_z = rep_z;
    for (int g = 0; g < rep_z.group->order; ++g) s.values.push_back(h * rep_z(g).transpose());
    return s;
}

ObservableSamples ObservableSamples::invariant(const Mat& h, const GroupPtr& group) {
    ObservableSamples s;
    s.dim = static_cast<int>(h.cols());
    s.rep_z = trivial_representation(group, s.dim);
    s.values.assign(group->order, h);
    return s;
}

Vec invariant_mean(const Mat& samples, const GroupRepresentation& rep) {
    require_dims(samples.cols() == rep.dim, "invariant_mean: sample width does not match the action");
    if (samples.rows() == 0) throw InvalidParameter("invariant_mean: empty sample");
    Vec acc = Vec::Zero(rep.dim);
    for (int g = 0; g < rep.group->order; ++g)
        for (Eigen::Index n = 0; n < samples.rows(); ++n) acc += rep(g) * samples.row(n).transpose();
    return acc / (static_cast<double>(rep.group->order) * samples.rows());
}

Vec invariant_mean(const ObservableSamples& samples) {
    if (samples.values.empty() || samples.rows() == 0) throw InvalidParameter("invariant_mean: empty sample");
    Vec acc = Vec::Zero(samples.dim);
    for (const auto& v : samples.values) acc += v.colwise().sum().transpose();
    return acc / (static_cast<double>(samples.values.size()) * samples.rows());
}

Mat FittedOperator::features_x(const Mat& x) const { return encode(model.enc_x, x) * wx.transpose(); }
Mat FittedOperator::features_y(const Mat& y) const { return encode(model.enc_y, y) * wy.transpose(); }
Mat FittedOperator::orbit_u(int g) const { return fit_u * model.enc_x.rep_iso(g).transpose(); }
Mat FittedOperator::orbit_v(int g) const { return fit_v * model.enc_y.rep_iso(g).transpose(); }

FittedOperator fit_statistics(const EncpModel& model, const Dataset& data, const GroupRepresentation& rep_x,
                              const GroupRepresentation& rep_y, const FitOptions& opts) {
    if (data.size() < 2) throw InvalidParameter("fit_statistics needs at least 2 samples");
    require_dims(data.x.cols() == rep_x.dim && data.y.cols() == rep_y.dim,
                 "fit_statistics: data does not match the representations");
    FittedOperator op;
    op.model = model;
    op.rep_x = rep_x;
    op.rep_y = rep_y;
    refresh_center(op.model.enc_x, data.x);
    refresh_center(op.model.enc_y, data.y);
    const Mat u = encode(op.model.enc_x, data.x), v = encode(op.model.enc_y, data.y);
    const int r = op.r();
    const int order = model.group()->order;
    op.wx = Mat::Identity(r, r);
    op.wy = Mat::Identity(r, r);
    Mat sqrt_x = Mat::Identity(r, r), sqrt_y = Mat::Identity(r, r);

    auto whiten = [&](const Mat& f, const GroupRepresentation& rep_iso, Mat& w, Mat& root, std::vector<Mat>& per,
                      std::size_t k, const IsotypicBlock& b, const char* side) {
        Mat c = f.middleCols(b.offset, b.size()).transpose() * f.middleCols(b.offset, b.size()) / f.rows();
        Mat avg = Mat::Zero(b.size(), b.size());
        for (int g = 0; g < order; ++g) {
            const Mat rg = block_of(rep_iso(g), b);
            avg += rg * c * rg.transpose();
        }
        avg /= order;
        avg = 0.5 * (avg + avg.transpose());
        const Eigen::SelfAdjointEigenSolver<Mat> es(avg);
        const Vec ev = es.eigenvalues();
        const bool ok = opts.whiten && ev.minCoeff() > 0.0 && ev.maxCoeff() / ev.minCoeff() <= opts.max_condition;
        if (opts.whiten && !ok && log_enabled())
            std::cerr << "warning: " << side << " block " << k << " covariance is ill conditioned, whitening skipped\n";
        Mat wk = Mat::Identity(b.size(), b.size()), rk = Mat::Identity(b.size(), b.size());
        if (ok) {
            wk = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
            rk = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
        }
        w.block(b.offset, b.offset, b.size(), b.size()) = wk;
        root.block(b.offset, b.offset, b.size(), b.size()) = rk;
        per.push_back(wk);
        return ok;
    };

    const Mat e = model.operator_matrix();
    for (std::size_t k = 0; k < model.blocks.size(); ++k) {
        const auto& b = model.enc_x.iso.blocks[k];
        const bool okx = whiten(u, op.model.enc_x.rep_iso, op.wx, sqrt_x, op.whiten_x, k, b, "x");
        const bool oky = whiten(v, op.model.enc_y.rep_iso, op.wy, sqrt_y, op.whiten_y, k, b, "y");
        op.whitened.push_back(okx && oky);
        const Mat blk = block_of(sqrt_x, b) * block_of(e, b) * block_of(sqrt_y, b);
        op.op_blocks.push_back(blk);
        op.singular_values.push_back(Eigen::JacobiSVD<Mat>(blk).singularValues());
    }
    op.op = sqrt_x * e * sqrt_y;
    op.fit_u = u * op.wx.transpose();
    op.fit_v = v * op.wy.transpose();
    op.fit_y = data.y;

    for (int j = 0; j < rep_y.dim; ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, s1 = 0.0, s2 = 0.0;
        for (int g = 0; g < order; ++g) {
            const Vec col = data.y * rep_y(g).row(j).transpose();
            lo = std::min(lo, col.minCoeff());
            hi = std::max(hi, col.maxCoeff());
            s1 += col.sum();
            s2 += col.squaredNorm();
        }
        const double cnt = static_cast<double>(order) * data.size();
        const double sd = std::sqrt(std::max(0.0, s2 / cnt - (s1 / cnt) * (s1 / cnt)));
        op.y_lo.push_back(lo - 3.0 * sd);
        op.y_hi.push_back(hi + 3.0 * sd);
    }
    return op;
}

ObservableCoefficients observable_coefficients(const FittedOperator& op, const ObservableSamples& h) {
    const int order = op.model.group()->order;
    if (static_cast<int>(h.values.size()) != order || h.rows() != op.fit_v.rows())
        throw DimensionMismatch("observable samples do not cover the fitting sample orbit");
    ObservableCoefficients c;
    c.mean = invariant_mean(h);
    Mat acc = Mat::Zero(op.r(), h.dim);
    for (int g = 0; g < order; ++g) {
        Mat centered = h.values[g];
        centered.rowwise() -= c.mean.transpose();
        acc.noalias() += op.orbit_v(g).transpose() * centered;
    }
    acc /= static_cast<double>(order) * h.rows();
    c.weights = op.op * acc;
    return c;
}

void register_observable(FittedOperator& op, const std::string& name, const ObservableSamples& h) {
    op.observables[name] = observable_coefficients(op, h);
}

Mat regress(const FittedOperator& op, const std::string& name, const Mat& x) {
    const auto it = op.observables.find(name);
    if (it == op.observables.end()) throw UnregisteredObservable("observable '" + name + "' is not registered");
    Mat z = op.features_x(x) * it->second.weights;
    z.rowwise() += it->second.mean.transpose();
    return z;
}

Vec regress(const FittedOperator& op, const std::string& name, const Vec& x) {
    return regress(op, name, Mat(x.transpose())).row(0).transpose();
}

double conditional_probability(const FittedOperator& op, const std::string& indicator, const Vec& x) {
    const Vec p = regress(op, indicator, x);
    require_dims(p.size() == 1, "indicator observable must be scalar");
    return p(0);
}

double conditional_probability_set(const FittedOperator& op, const std::string& indicator,
                                   const ObservableSamples& a_indicator) {
    const auto it = op.observables.find(indicator);
    if (it == op.observables.end()) throw UnregisteredObservable("observable '" + indicator + "' is not registered");
    const int order = op.model.group()->order;
    if (static_cast<int>(a_indicator.values.size()) != order || a_indicator.rows() != op.fit_u.rows() ||
        a_indicator.dim != 1)
        throw DimensionMismatch("set indicator must be scalar and cover the fitting x orbit");
    Vec ua = Vec::Zero(op.r());
    double mass = 0.0;
    for (int g = 0; g < order; ++g) {
        ua += op.orbit_u(g).transpose() * a_indicator.values[g].col(0);
        mass += a_indicator.values[g].sum();
    }
    if (mass == 0.0) throw EmptyConditioningSet("conditioning set has no mass on the fitting sample");
    return it->second.mean(0) + ua.dot(it->second.weights.col(0)) / mass;
}

BinnedObservable bin_observable(const FittedOperator& op, int j, const CcdfOptions& opts) {
    if (j < 0 || j >= op.rep_y.dim) throw InvalidParameter("bin_observable: dimension index out of range");
    if (opts.n_bins < 2) throw InvalidParameter("n_bins must be >= 2");
    const double lo = opts.range ? opts.range->first : op.y_lo[j];
    const double hi = opts.range ? opts.range->second : op.y_hi[j];
    if (!(hi > lo)) throw InvalidParameter("quantile range must have hi > lo");
    BinnedObservable out;
    out.dim_j = j;
    const double width = (hi - lo) / opts.n_bins;
    for (int b = 0; b <= opts.n_bins; ++b) out.edges.push_back(b == opts.n_bins ? hi : lo + b * width);

    const int order = op.model.group()->order;
    const int n = static_cast<int>(op.fit_y.rows());
    const double total = static_cast<double>(order) * n;
    Mat sums = Mat::Zero(op.r(), opts.n_bins);
    Vec counts = Vec::Zero(opts.n_bins);
    Vec vbar = Vec::Zero(op.r());
    for (int g = 0; g < order; ++g) {
        const Mat vg = op.orbit_v(g);
        const Vec col = op.fit_y * op.rep_y(g).row(j).transpose();
        vbar += vg.colwise().sum().transpose();
        for (int i = 0; i < n; ++i) {
            if (col(i) < lo || col(i) >= hi) continue;
            const int b = std::min(opts.n_bins - 1, static_cast<int>((col(i) - lo) / width));
            sums.col(b) += vg.row(i).transpose();
            counts(b) += 1.0;
        }
    }
    vbar /= total;
    out.coef.mean = counts / total;
    Mat acc = sums / total - vbar * out.coef.mean.transpose();
    out.coef.weights = op.op * acc;
    return out;
}

Vec bin_probabilities(const FittedOperator& op, const BinnedObservable& bins, const Vec& x) {
    const Vec u = op.features_x(Mat(x.transpose())).row(0).transpose();
    return bins.coef.mean + bins.coef.weights.transpose() * u;
}

Vec ccdf(const FittedOperator& op, const BinnedObservable& bins, const Vec& x) {
    const Vec p = bin_probabilities(op, bins, x);
    Vec f(p.size() + 1);
    f(0) = 0.0;
    double run = 0.0, best = 0.0;
    for (Eigen::Index b = 0; b < p.size(); ++b) {
        run += p(b);
        best = std::max(best, std::clamp(run, 0.0, 1.0));
        f(b + 1) = best;
    }
    return f;
}

QuantileResult quantile_from_cdf(const Vec& cdf, const std::vector<double>& edges, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0, 1)");
    require_dims(cdf.size() == static_cast<Eigen::Index>(edges.size()), "cdf and edges differ in length");
    for (Eigen::Index n = 1; n < cdf.size(); ++n) {
        if (cdf(n) >= alpha) {
            const double f0 = cdf(n - 1), f1 = cdf(n);
            const double t = f1 > f0 ? (alpha - f0) / (f1 - f0) : 1.0;
            return {edges[n - 1] + t * (edges[n] - edges[n - 1]), false};
        }
    }
    return {edges.back(), true};
}

QuantileResult quantile(const FittedOperator& op, const Vec& x, int j, double alpha, const CcdfOptions& opts) {
    const BinnedObservable bins = bin_observable(op, j, opts);
    return quantile_from_cdf(ccdf(op, bins, x), bins.edges, alpha);
}

double symmetry_index(const Mat& samples, const std::function<bool(const Vec&)>& in_a,
                      const GroupRepresentation& rep, const std::vector<int>& subgroup) {
    require_dims(samples.cols() == rep.dim, "symmetry_index: sample width does not match the action");
    if (subgroup.size() < 2) throw InvalidParameter("symmetry_index needs |G'| >= 2");
    const auto& G = *rep.group;
    std::vector<int> members;
    for (int g : subgroup) {
        if (g < 0 || g >= G.order) throw InvalidParameter("symmetry_index: element index out of range");
        if (g != G.identity_index) members.push_back(g);
    }
    std::vector<Vec> in;
    for (Eigen::Index n = 0; n < samples.rows(); ++n) {
        const Vec x = samples.row(n).transpose();
        if (in_a(x)) in.push_back(x);
    }
    if (in.empty()) throw EmptyConditioningSet("set A contains no sample");
    double acc = 0.0;
    for (int g : members) {
        const Mat& ginv = rep(G.inv(g));
        int both = 0;
        for (const auto& x : in)
            if (in_a(ginv * x)) ++both;
        acc += static_cast<double>(both) / in.size();
    }
    return acc / static_cast<double>(members.size());
}

}  // namespace encp
