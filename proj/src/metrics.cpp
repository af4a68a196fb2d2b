#include "encp/metrics.hpp"

namespace encp {

Mat pmd_matrix(const SymmetricGmmSpec& spec, const Mat& x, const Mat& y) {
    require_dims(x.cols() == spec.p && y.cols() == spec.q, "pmd_matrix: sample widths do not match the spec");
    const int c = spec.n_components();
    Mat lx(x.rows(), c), ly(y.rows(), c);
    for (Eigen::Index a = 0; a < x.rows(); ++a) {
        const Vec xa = x.row(a).transpose();
        for (int k = 0; k < c; ++k)
            lx(a, k) = spec.log_weight() + log_normal_density(xa, spec.mean_x[k], spec.chol_x[k], spec.logdet_x[k]);
    }
    for (Eigen::Index b = 0; b < y.rows(); ++b) {
        const Vec yb = y.row(b).transpose();
        for (int k = 0; k < c; ++k)
            ly(b, k) = log_normal_density(yb, spec.mean_y[k], spec.chol_y[k], spec.logdet_y[k]);
    }
    Vec px(x.rows()), py(y.rows());
    for (Eigen::Index a = 0; a < x.rows(); ++a) px(a) = log_sum_exp(lx.row(a).transpose());
    for (Eigen::Index b = 0; b < y.rows(); ++b) py(b) = log_sum_exp(ly.row(b).transpose().array() + spec.log_weight());
    Mat out(x.rows(), y.rows());
    for (Eigen::Index a = 0; a < x.rows(); ++a)
        for (Eigen::Index b = 0; b < y.rows(); ++b) {
            const double v = log_sum_exp((lx.row(a) + ly.row(b)).transpose()) - px(a) - py(b);
            out(a, b) = std::isfinite(v) ? std::exp(v) : 0.0;
        }
    return out;
}

double pmd_mse(const SymmetricGmmSpec& spec, const KernelFn& model_kernel, const Mat& x, const Mat& y, int cap) {
    const Eigen::Index m = std::min<Eigen::Index>({x.rows(), y.rows(), static_cast<Eigen::Index>(cap)});
    if (m < 1) throw InvalidParameter("pmd_mse: empty test set");
    const Mat xs = x.topRows(m), ys = y.topRows(m);
    return (pmd_matrix(spec, xs, ys) - model_kernel(xs, ys)).squaredNorm() / (static_cast<double>(m) * m);
}

double pmd_mse(const SymmetricGmmSpec& spec, const EncpModel& model, const Mat& x, const Mat& y, int cap) {
    return pmd_mse(spec, [&](const Mat& a, const Mat& b) { return kernel_matrix(model, a, b); }, x, y, cap);
}

double invariance_error(const PairKernelFn& kernel, const Mat& x, const Mat& y, const GroupRepresentation& rep_x,
                        const GroupRepresentation& rep_y) {
    require_dims(x.rows() == y.rows() && x.rows() > 0, "invariance_error: need matching nonempty samples");
    const auto& G = *rep_x.group;
    if (G.order == 1) return 0.0;
    const Vec base = kernel(x, y);
    double acc = 0.0;
    for (int g = 0; g < G.order; ++g) {
        if (g == G.identity_index) continue;
        acc += (kernel(x * rep_x(g).transpose(), y * rep_y(g).transpose()) - base).squaredNorm();
    }
    return acc / (static_cast<double>(x.rows()) * (G.order - 1));
}

double invariance_error(const EncpModel& model, const Mat& x, const Mat& y, const GroupRepresentation& rep_x,
                        const GroupRepresentation& rep_y) {
    return invariance_error([&](const Mat& a, const Mat& b) { return kernel_pairs(model, a, b); }, x, y, rep_x, rep_y);
}

double regression_mse(const Mat& predicted, const Mat& truth) {
    require_dims(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(),
                 "regression_mse: shapes differ");
    if (predicted.rows() == 0) throw InvalidParameter("regression_mse: empty input");
    return (predicted - truth).squaredNorm() / static_cast<double>(predicted.rows());
}

CoverageStats coverage_metrics(const Mat& lower, const Mat& upper, const Mat& y) {
    require_dims(lower.rows() == y.rows() && upper.rows() == y.rows() && lower.cols() == y.cols() &&
                     upper.cols() == y.cols(),
                 "coverage_metrics: interval and response shapes differ");
    if (y.rows() == 0) throw InvalidParameter("coverage_metrics: empty test set");
    if (!lower.allFinite() || !upper.allFinite()) throw InvalidParameter("coverage_metrics: non-finite interval bound");
    if ((upper - lower).minCoeff() < 0.0) throw InvalidParameter("coverage_metrics: lower bound above upper bound");
    CoverageStats s;
    s.per_dim = Vec::Zero(y.cols());
    int joint = 0;
    double size = 0.0;
    for (Eigen::Index n = 0; n < y.rows(); ++n) {
        bool all = true;
        double vol = 1.0;
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const bool in = y(n, j) >= lower(n, j) && y(n, j) <= upper(n, j);
            if (in) s.per_dim(j) += 1.0;
            all = all && in;
            vol *= upper(n, j) - lower(n, j);
        }
        if (all) ++joint;
        size += vol;
    }
    const double n = static_cast<double>(y.rows());
    s.per_dim /= n;
    s.coverage = joint / n;
    s.relaxed_coverage = s.per_dim.prod();
    s.mean_set_size = size / n;
    return s;
}

}  // namespace encp
