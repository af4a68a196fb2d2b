#include "encp/mlp.hpp"

#include <cmath>

namespace encp {

namespace {

Mat apply_activation(Activation a, const Mat& z) {
    switch (a) {
        case Activation::tanh:
            // 1 - 2/(exp(2z)+1) uses the vectorised exp; saturates cleanly at +-1.
            return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
        case Activation::elu:
            return z.unaryExpr([](double t) { return t > 0.0 ? t : std::expm1(t); });
        case Activation::identity:
            return z;
    }
    return z;
}

// Derivative expressed through the pre-activation z and post-activation h.
Mat activation_derivative(Activation a, const Mat& z, const Mat& h) {
    switch (a) {
        case Activation::tanh:
            return (1.0 - h.array().square()).matrix();
        case Activation::elu:
            return z.binaryExpr(h, [](double t, double ht) { return t > 0.0 ? 1.0 : ht + 1.0; });
        case Activation::identity:
            return Mat::Ones(z.rows(), z.cols());
    }
    return Mat::Ones(z.rows(), z.cols());
}

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "elu") return Activation::elu;
    if (name == "identity") return Activation::identity;
    throw InvalidParameter("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::tanh:
            return "tanh";
        case Activation::elu:
            return "elu";
        case Activation::identity:
            return "identity";
    }
    return "?";
}

int MlpParams::n_params() const {
    int n = 0;
    for (const auto& l : layers) n += static_cast<int>(l.w.size() + l.b.size());
    return n;
}

Vec MlpParams::flatten() const {
    Vec out(n_params());
    Eigen::Index k = 0;
    for (const auto& l : layers) {
        out.segment(k, l.w.size()) = l.w.reshaped();
        k += l.w.size();
        out.segment(k, l.b.size()) = l.b;
        k += l.b.size();
    }
    return out;
}

void MlpParams::unflatten(const Vec& flat) {
    require_dims(flat.size() == n_params(), "unflatten: expected " + std::to_string(n_params()) + " values");
    Eigen::Index k = 0;
    for (auto& l : layers) {
        l.w.reshaped() = flat.segment(k, l.w.size());
        k += l.w.size();
        l.b = flat.segment(k, l.b.size());
        k += l.b.size();
    }
}

MlpParams init_mlp(const std::vector<int>& dims, Activation activation, std::mt19937_64& rng) {
    if (dims.size() < 2) throw InvalidParameter("MLP needs at least input and output dimensions");
    for (int d : dims)
        if (d < 1) throw InvalidParameter("MLP layer dimensions must be >= 1");
    MlpParams p;
    p.activation = activation;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (dims[i] + dims[i + 1])));
        DenseLayer l;
        l.w.resize(dims[i + 1], dims[i]);
        for (Eigen::Index c = 0; c < l.w.cols(); ++c)
            for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = normal(rng);
        l.b = Vec::Zero(dims[i + 1]);
        p.layers.push_back(std::move(l));
    }
    return p;
}

Mat forward(const MlpParams& params, const Mat& batch) {
    require_dims(batch.cols() == params.input_dim(), "forward: batch has " + std::to_string(batch.cols()) +
                                                         " columns, network expects " +
                                                         std::to_string(params.input_dim()));
    Mat h = batch;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        Mat z = h * l.w.transpose();
        z.rowwise() += l.b.transpose();
        h = i + 1 < params.layers.size() ? apply_activation(params.activation, z) : z;
    }
    return h;
}

MlpTape forward_tape(const MlpParams& params, const Mat& batch) {
    require_dims(batch.cols() == params.input_dim(), "forward_tape: batch width does not match input dim");
    const std::size_t L = params.layers.size();
    MlpTape t;
    t.pre.resize(L);
    t.post.resize(L + 1);
    t.post[0] = batch;
    for (std::size_t i = 0; i < L; ++i) {
        const auto& l = params.layers[i];
        t.pre[i].noalias() = t.post[i] * l.w.transpose();
        t.pre[i].rowwise() += l.b.transpose();
        t.post[i + 1] = i + 1 < L ? apply_activation(params.activation, t.pre[i]) : t.pre[i];
    }
    return t;
}

MlpPass backward_tape(const MlpParams& params, const MlpTape& tape, const Mat& upstream) {
    const std::size_t L = params.layers.size();
    require_dims(upstream.rows() == tape.output().rows() && upstream.cols() == params.output_dim(),
                 "backward: upstream gradient shape does not match output");
    MlpPass out;
    out.output = tape.output();
    out.grads.activation = params.activation;
    out.grads.layers.resize(L);
    Mat g = upstream;
    for (std::size_t i = L; i-- > 0;) {
        if (i + 1 < L) g = g.cwiseProduct(activation_derivative(params.activation, tape.pre[i], tape.post[i + 1]));
        out.grads.layers[i].w.noalias() = g.transpose() * tape.post[i];
        out.grads.layers[i].b = g.colwise().sum().transpose();
        Mat next;
        next.noalias() = g * params.layers[i].w;
        g = std::move(next);
    }
    out.input_grad = std::move(g);
    return out;
}

MlpPass forward_backward(const MlpParams& params, const Mat& batch, const Mat& upstream) {
    return backward_tape(params, forward_tape(params, batch), upstream);
}

void adam_step(AdamState& s, Vec& params, const Vec& grad) {
    require_dims(params.size() == grad.size() && s.m.size() == params.size(), "adam_step: shape mismatch");
    ++s.step;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
    Vec flat = params.flatten();
    adam_step(state, flat, grads.flatten());
    params.unflatten(flat);
}

}  // namespace encp
