#pragma once

#include "encp/common.hpp"

#include <string>
#include <vector>

namespace encp {

enum class Activation { tanh, elu, identity };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

struct DenseLayer {
    Mat w;  // out x in
    Vec b;  // out
};

/// Dense MLP. Batches are row-major in samples: an N x in matrix maps to N x out.
/// The activation is applied to hidden layers only; the last layer is affine.
struct MlpParams {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::tanh;

    int input_dim() const { return static_cast<int>(layers.front().w.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().w.rows()); }
    int n_params() const;
    Vec flatten() const;
    void unflatten(const Vec& flat);
};

/// Weights ~ N(0, 2/(fan_in + fan_out)), biases 0.
MlpParams init_mlp(const std::vector<int>& dims, Activation activation, std::mt19937_64& rng);

Mat forward(const MlpParams& params, const Mat& batch);

struct MlpPass {
    Mat output;
    MlpParams grads;  // same shapes as the parameters
    Mat input_grad;
};

/// Activations kept from a forward pass for a later backward pass.
struct MlpTape {
    std::vector<Mat> pre, post;  // post[0] is the input, post.back() the output
    const Mat& output() const { return post.back(); }
};

MlpTape forward_tape(const MlpParams& params, const Mat& batch);
/// Backward pass through a recorded tape; returns output, gradients and input gradient.
MlpPass backward_tape(const MlpParams& params, const MlpTape& tape, const Mat& upstream);

/// Gradients of sum(upstream .* output) with respect to parameters and inputs.
MlpPass forward_backward(const MlpParams& params, const Mat& batch, const Mat& upstream);

struct AdamState {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    Vec m, v;

    explicit AdamState(int n = 0, double lr_ = 1e-3) : lr(lr_), m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// One bias-corrected Adam update of a flat parameter vector.
void adam_step(AdamState& state, Vec& params, const Vec& grad);
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

}  // namespace encp
