#pragma once

#include "encp/encp_model.hpp"

#include <functional>
#include <map>
#include <optional>

namespace encp {

/// Values of an observable on the orbit of every sample: values[g] is N x dim
/// and holds h(g . y_n). rep_z, when set, is the action on the output space.
struct ObservableSamples {
    std::vector<Mat> values;
    int dim = 1;
    std::optional<GroupRepresentation> rep_z;

    int rows() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }

    /// h evaluated explicitly on every g . y_n.
    static ObservableSamples from_function(const Mat& y, const GroupRepresentation& rep_y,
                                           const std::function<Vec(const Vec&)>& h, int dim);
    /// Equivariant observable: h(g . y_n) = rep_z(g) h(y_n).
    static ObservableSamples equivariant(const Mat& h, const GroupRepresentation& rep_z);
    /// h(g . y_n) = h(y_n).
    static ObservableSamples invariant(const Mat& h, const GroupPtr& group);
};

/// (1/(|G| N)) sum_g sum_n f(g . x_n) by explicit orbit expansion.
Vec invariant_mean(const Mat& samples, const GroupRepresentation& rep);
Vec invariant_mean(const ObservableSamples& samples);

struct ObservableCoefficients {
    Vec mean;     // invariant mean of h
    Mat weights;  // r x dim: E_w * E[v_w (x) (h - mean)]
};

struct FitOptions {
    bool whiten = true;
    double max_condition = 1e10;
};

/// Frozen model plus orbit-averaged statistics of the fitting sample. Features
/// are whitened per block so that their orbit-averaged covariance is the identity.
struct FittedOperator {
    EncpModel model;
    GroupRepresentation rep_x, rep_y;
    std::vector<Mat> whiten_x, whiten_y;    // per block C^{-1/2} (identity when skipped)
    std::vector<Mat> op_blocks;             // whitened dense blocks C_x^{1/2} E_k C_y^{1/2}
    std::vector<Vec> singular_values;       // per block, descending
    std::vector<bool> whitened;             // per block, false when ill conditioned
    Mat op;                                 // dense r x r whitened operator
    Mat wx, wy;                             // dense block-diagonal whitening maps
    Mat fit_u, fit_v;                       // whitened features of the fitting sample
    Mat fit_y;                              // fitting responses
    std::vector<double> y_lo, y_hi;         // per-dimension quantile range
    std::map<std::string, ObservableCoefficients> observables;

    int r() const { return model.r(); }
    Mat features_x(const Mat& x) const;
    Mat features_y(const Mat& y) const;
    /// Orbit copies of the fitting features: rows of block g are rep_iso(g) u_n.
    Mat orbit_u(int g) const;
    Mat orbit_v(int g) const;
};

FittedOperator fit_statistics(const EncpModel& model, const Dataset& data, const GroupRepresentation& rep_x,
                              const GroupRepresentation& rep_y, const FitOptions& opts = {});

ObservableCoefficients observable_coefficients(const FittedOperator& op, const ObservableSamples& h);
void register_observable(FittedOperator& op, const std::string& name, const ObservableSamples& h);

/// z(x) = E[h] + u(x)^T E E[v (x) (h - E[h])].
Vec regress(const FittedOperator& op, const std::string& name, const Vec& x);
Mat regress(const FittedOperator& op, const std::string& name, const Mat& x);

/// Point conditioning: same estimator with an indicator observable.
double conditional_probability(const FittedOperator& op, const std::string& indicator, const Vec& x);
/// Set conditioning: a_indicator holds 1_A(g . x_n) on the orbit of the fitting x.
double conditional_probability_set(const FittedOperator& op, const std::string& indicator,
                                   const ObservableSamples& a_indicator);

struct QuantileResult {
    double value = 0.0;
    bool out_of_range = false;
};

struct CcdfOptions {
    int n_bins = 100;
    std::optional<std::pair<double, double>> range;  // defaults to the fitted range
};

/// Bin edges over the range and, per bin, the coefficients of the bin indicator.
struct BinnedObservable {
    int dim_j = 0;
    std::vector<double> edges;  // n_bins + 1
    ObservableCoefficients coef;
};

BinnedObservable bin_observable(const FittedOperator& op, int j, const CcdfOptions& opts = {});
/// Raw bin probabilities P(y_j in bin_b | x), one per bin.
Vec bin_probabilities(const FittedOperator& op, const BinnedObservable& bins, const Vec& x);
/// CDF values at every edge after clamping to [0,1] and running-max repair; F(edge_0) = 0.
Vec ccdf(const FittedOperator& op, const BinnedObservable& bins, const Vec& x);
QuantileResult quantile_from_cdf(const Vec& cdf, const std::vector<double>& edges, double alpha);
QuantileResult quantile(const FittedOperator& op, const Vec& x, int j, double alpha, const CcdfOptions& opts = {});

/// (1/(|G'|-1)) sum_{g != e} #(x in A and g^-1 x in A) / #(x in A).
double symmetry_index(const Mat& samples, const std::function<bool(const Vec&)>& in_a,
                      const GroupRepresentation& rep, const std::vector<int>& subgroup);

}  // namespace encp
