#pragma once

#include "encp/inference.hpp"

#include <functional>

namespace encp {

using KernelFn = std::function<Mat(const Mat& x, const Mat& y)>;  // matrix of k(x_a, y_b)
using PairKernelFn = std::function<Vec(const Mat& x, const Mat& y)>;  // k(x_n, y_n)

/// Oracle kernel matrix p(x,y)/(p(x)p(y)) over all (x_a, y_b).
Mat pmd_matrix(const SymmetricGmmSpec& spec, const Mat& x, const Mat& y);

/// (1/M^2) sum_{a,b} (k(x_a, y_b) - k_model(x_a, y_b))^2 over the first M <= cap rows.
double pmd_mse(const SymmetricGmmSpec& spec, const KernelFn& model_kernel, const Mat& x, const Mat& y, int cap = 1024);
double pmd_mse(const SymmetricGmmSpec& spec, const EncpModel& model, const Mat& x, const Mat& y, int cap = 1024);

/// Mean over rows and g != e of (k(g x_n, g y_n) - k(x_n, y_n))^2.
double invariance_error(const PairKernelFn& kernel, const Mat& x, const Mat& y, const GroupRepresentation& rep_x,
                        const GroupRepresentation& rep_y);
double invariance_error(const EncpModel& model, const Mat& x, const Mat& y, const GroupRepresentation& rep_x,
                        const GroupRepresentation& rep_y);

double regression_mse(const Mat& predicted, const Mat& truth);

struct CoverageStats {
    double coverage = 0.0;          // all dimensions inside
    double relaxed_coverage = 0.0;  // product of per-dimension marginal coverages
    double mean_set_size = 0.0;     // mean product of interval widths
    Vec per_dim;                    // marginal coverage per dimension
};

CoverageStats coverage_metrics(const Mat& lower, const Mat& upper, const Mat& y);

struct EvalReport {
    std::optional<double> pmd_mse, invariance_error, regression_mse;
    std::optional<CoverageStats> coverage;
    int n_train = 0, n_test = 0;
    std::uint64_t seed = 0;
};

}  // namespace encp
