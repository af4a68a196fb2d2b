#pragma once

#include "encp/group.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace encp {

/// Gaussian mixture over X x Y whose component set is closed under the
/// diagonal group action. Every component has block covariance Sx (+) Sy,
/// so y is independent of x given the component.
struct SymmetricGmmSpec {
    GroupPtr group;
    GroupRepresentation rep_x, rep_y;
    int p = 1, q = 1, n_g = 1;
    std::uint64_t seed = 0;
    std::vector<Vec> base_means;  // length p+q
    std::vector<Mat> base_covs;   // (p+q) x (p+q), block diagonal

    // Orbit-expanded components, index c*|G| + g.
    std::vector<Vec> mean_x, mean_y;
    std::vector<Mat> cov_x, cov_y;
    std::vector<Mat> chol_x, chol_y;  // lower Cholesky factors
    std::vector<double> logdet_x, logdet_y;

    int n_components() const { return static_cast<int>(mean_x.size()); }
    double log_weight() const { return -std::log(static_cast<double>(n_components())); }
    std::string digest() const;
};

struct Dataset {
    Mat x;  // N x p
    Mat y;  // N x q
    std::uint64_t seed = 0;
    std::string spec_digest;

    int size() const { return static_cast<int>(x.rows()); }
    Dataset rows(const std::vector<int>& idx) const;
    Dataset head(int n) const;
};

SymmetricGmmSpec build_spec(const GroupPtr& group, const GroupRepresentation& rep_x,
                            const GroupRepresentation& rep_y, int n_g, std::uint64_t seed);
/// Uses default_data_representation on both spaces.
SymmetricGmmSpec build_spec(const GroupPtr& group, int p, int q, int n_g, std::uint64_t seed);
/// Spec from explicit base components; orbit expansion is done here.
SymmetricGmmSpec spec_from_components(const GroupPtr& group, const GroupRepresentation& rep_x,
                                      const GroupRepresentation& rep_y, std::vector<Vec> means,
                                      std::vector<Mat> covs, std::uint64_t seed = 0);

Dataset sample(const SymmetricGmmSpec& spec, int n, std::uint64_t seed);

double log_density_x(const SymmetricGmmSpec& spec, const Vec& x);
double log_density_y(const SymmetricGmmSpec& spec, const Vec& y);
double log_density_xy(const SymmetricGmmSpec& spec, const Vec& x, const Vec& y);

/// p(x,y) / (p(x) p(y)).
double pmd_ratio(const SymmetricGmmSpec& spec, const Vec& x, const Vec& y);

/// Posterior component weights given x.
Vec posterior_weights(const SymmetricGmmSpec& spec, const Vec& x);
Vec conditional_mean(const SymmetricGmmSpec& spec, const Vec& x);
double conditional_cdf(const SymmetricGmmSpec& spec, const Vec& x, int j, double t);

struct MoonsBenchmarkSpec {
    double beta = 1.0;
    double x_lo = 0.8, x_hi = 3.2;
    double r_max = 0.1;
};

/// x ~ U(0.8, 3.2); y0 = z/(beta x) + r cos(phi); y1 = (1 - cos z)/2 + r sin(phi) + sin(x).
Dataset sample_moons(const MoonsBenchmarkSpec& spec, int n, std::uint64_t seed);

/// Actions for the moons data: C2 acts trivially on x and as (y0, y1) -> (-y0, y1).
GroupRepresentation moons_rep_x(const GroupPtr& group);
GroupRepresentation moons_rep_y(const GroupPtr& group);

double normal_cdf(double z);
double log_normal_density(const Vec& x, const Vec& mean, const Mat& chol, double logdet);
double log_sum_exp(const Vec& v);

}  // namespace encp
