#pragma once

#include "encp/equivariant_encoder.hpp"
#include "encp/symm_gmm.hpp"

#include <optional>

namespace encp {

struct ModelConfig {
    int r = 0;                        // 0 -> 4|G|
    std::vector<int> hidden{64, 64};  // rounded up to multiples of |G|
    Activation activation = Activation::tanh;
    double operator_init = 0.1;       // O^(k) starts at this multiple of the identity
};

/// kappa(x, y) = 1 + sum_k <u^(k)(x), (O^(k) (x) I_{d_k}) v^(k)(y)>.
struct EncpModel {
    EquivariantEncoder enc_x, enc_y;
    std::vector<Mat> blocks;  // m_k x m_k, one per isotypic block

    GroupPtr group() const { return enc_x.group; }
    int r() const { return enc_x.r(); }
    /// Dense r x r operator matrix (+)_k O^(k) (x) I_{d_k}.
    Mat operator_matrix() const;

    int n_params() const;
    Vec flatten() const;
    void unflatten(const Vec& flat);
};

EncpModel make_model(const GroupPtr& group, const GroupRepresentation& rep_x, const GroupRepresentation& rep_y,
                     const ModelConfig& cfg, std::uint64_t seed);

double kernel_eval(const EncpModel& model, const Vec& x, const Vec& y);
/// Matrix of kappa(x_a, y_b).
Mat kernel_matrix(const EncpModel& model, const Mat& x, const Mat& y);
/// kappa(x_n, y_n) for paired rows.
Vec kernel_pairs(const EncpModel& model, const Mat& x, const Mat& y);

struct LossTerms {
    double total = 0.0;
    double l0 = 0.0;
    double centering = 0.0;
    std::vector<double> l0_blocks, omega_x, omega_y;
};

struct FeatureLossGrad {
    LossTerms terms;
    Mat du, dv;                // same shape as u, v
    std::vector<Mat> dblocks;  // same shape as blocks
};

/// Loss as a function of features u (N x r), v (N x r) in isotypic
/// coordinates and the operator blocks. Gradients only when requested.
FeatureLossGrad feature_loss(const Mat& u, const Mat& v, const std::vector<Mat>& blocks, const IsotypicBasis& iso,
                             double gamma, bool with_grad);

struct LossAndGrad {
    LossTerms terms;
    Vec grad;  // matches EncpModel::flatten(); empty if not requested
};

LossAndGrad empirical_loss(const EncpModel& model, const Mat& x, const Mat& y, double gamma, bool with_grad = true);

/// Batch-averaged loss over a dataset, chunked by batch_size.
LossTerms evaluate_loss(const EncpModel& model, const Dataset& data, double gamma, int batch_size);

struct TrainConfig {
    double gamma = 1e-2;
    double lr = 1e-3;
    int batch_size = 256;
    int epochs = 100;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0, l0 = 0.0;
    std::vector<double> omega_x, omega_y;
    std::optional<double> val_loss;
    double seconds = 0.0;
};

struct TrainHistory {
    LossTerms initial;
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;  // epoch restored from validation, -1 if none
};

/// Adam over shuffled mini-batches. Centers are refreshed on the training set
/// at the start of every epoch. With a validation set the parameters of the
/// epoch with the lowest validation loss are restored at the end.
TrainHistory train(EncpModel& model, const Dataset& data, const TrainConfig& cfg,
                   const Dataset* validation = nullptr);

}  // namespace encp
