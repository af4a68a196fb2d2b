#include "encp/equivariant_encoder.hpp"

namespace encp {

Mat project_equivariant(const Mat& w, const GroupRepresentation& rep_in, const GroupRepresentation& rep_out) {
    require_dims(w.cols() == rep_in.dim && w.rows() == rep_out.dim,
                 "project_equivariant: weight is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                     ", representations need " + std::to_string(rep_out.dim) + "x" + std::to_string(rep_in.dim));
    Mat out = Mat::Zero(w.rows(), w.cols());
    for (int g = 0; g < rep_in.group->order; ++g) out.noalias() += rep_out(g).transpose() * w * rep_in(g);
    return out / rep_in.group->order;
}

Vec project_invariant(const Vec& b, const GroupRepresentation& rep) {
    require_dims(b.size() == rep.dim, "project_invariant: vector dimension mismatch");
    Vec out = Vec::Zero(b.size());
    for (int g = 0; g < rep.group->order; ++g) out.noalias() += rep(g) * b;
    return out / rep.group->order;
}

EquivariantEncoder encoder_skeleton(const GroupPtr& group, const GroupRepresentation& rep_in,
                                    const std::vector<int>& layer_widths, Activation activation) {
    if (layer_widths.empty()) throw InvalidParameter("encoder needs at least an output layer");
    EquivariantEncoder enc;
    enc.group = group;
    enc.rep_in = rep_in;
    const GroupRepresentation reg = regular_representation(group);
    std::vector<int> dims{rep_in.dim};
    for (int w : layer_widths) {
        if (w < 1 || w % group->order != 0)
            throw InvalidParameter("layer width " + std::to_string(w) + " is not a positive multiple of |G| = " +
                                   std::to_string(group->order));
        enc.layer_reps.push_back(repeat(reg, w / group->order));
        dims.push_back(w);
    }
    enc.backbone.activation = activation;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        enc.backbone.layers.push_back({Mat::Zero(dims[i + 1], dims[i]), Vec::Zero(dims[i + 1])});
    enc.irreps = real_irreps(group);
    enc.iso = isotypic_decomposition(enc.layer_reps.back(), enc.irreps);
    enc.rep_iso = isotypic_representation(group, enc.iso, enc.irreps);
    enc.center = Vec::Zero(layer_widths.back());
    return enc;
}

EquivariantEncoder make_encoder(const GroupPtr& group, const GroupRepresentation& rep_in,
                                const std::vector<int>& hidden_widths, int r, Activation activation,
                                std::mt19937_64& rng) {
    if (r < 1 || r % group->order != 0)
        throw InvalidParameter("r = " + std::to_string(r) + " must be a positive multiple of |G| = " +
                               std::to_string(group->order));
    std::vector<int> widths;
    for (int w : hidden_widths) {
        if (w < 1) throw InvalidParameter("hidden widths must be >= 1");
        widths.push_back(((w + group->order - 1) / group->order) * group->order);
    }
    widths.push_back(r);
    EquivariantEncoder enc = encoder_skeleton(group, rep_in, widths, activation);
    std::vector<int> dims{rep_in.dim};
    dims.insert(dims.end(), widths.begin(), widths.end());
    enc.backbone = init_mlp(dims, activation, rng);
    project_parameters(enc);
    return enc;
}

void project_gradient(const EquivariantEncoder& enc, MlpParams& grads) {
    for (std::size_t i = 0; i < grads.layers.size(); ++i) {
        const GroupRepresentation& in = i == 0 ? enc.rep_in : enc.layer_reps[i - 1];
        grads.layers[i].w = project_equivariant(grads.layers[i].w, in, enc.layer_reps[i]);
        grads.layers[i].b = project_invariant(grads.layers[i].b, enc.layer_reps[i]);
    }
}

void project_parameters(EquivariantEncoder& enc) { project_gradient(enc, enc.backbone); }

double weight_equivariance_error(const EquivariantEncoder& enc) {
    double worst = 0.0;
    for (std::size_t i = 0; i < enc.backbone.layers.size(); ++i) {
        const GroupRepresentation& in = i == 0 ? enc.rep_in : enc.layer_reps[i - 1];
        const auto& l = enc.backbone.layers[i];
        for (int g = 0; g < enc.group->order; ++g) {
            worst = std::max(worst, (enc.layer_reps[i](g) * l.w - l.w * in(g)).norm());
            worst = std::max(worst, (enc.layer_reps[i](g) * l.b - l.b).norm());
        }
    }
    return worst;
}

Mat backbone_features(const EquivariantEncoder& enc, const Mat& x) { return forward(enc.backbone, x); }

Mat encode(const EquivariantEncoder& enc, const Mat& x) {
    require_dims(x.cols() == enc.input_dim(), "encode: input has " + std::to_string(x.cols()) +
                                                  " columns, encoder expects " + std::to_string(enc.input_dim()));
    Mat phi = backbone_features(enc, x);
    phi.rowwise() -= enc.center.transpose();
    return phi * enc.iso.q.transpose();
}

Vec encode(const EquivariantEncoder& enc, const Vec& x) { return encode(enc, Mat(x.transpose())).row(0).transpose(); }

void refresh_center(EquivariantEncoder& enc, const Mat& x) {
    if (x.rows() == 0) throw InvalidParameter("refresh_center: empty sample");
    const Vec mean = backbone_features(enc, x).colwise().mean().transpose();
    enc.center = project_invariant(mean, enc.layer_reps.back());
}

MlpParams encoder_backward(const EquivariantEncoder& enc, const Mat& x, const Mat& du) {
    return forward_backward(enc.backbone, x, du * enc.iso.q).grads;
}

EncoderPass encode_with_tape(const EquivariantEncoder& enc, const Mat& x) {
    require_dims(x.cols() == enc.input_dim(), "encode: input width does not match the encoder");
    EncoderPass p;
    p.tape = forward_tape(enc.backbone, x);
    Mat phi = p.tape.output();
    phi.rowwise() -= enc.center.transpose();
    p.u.noalias() = phi * enc.iso.q.transpose();
    return p;
}

MlpParams encoder_backward(const EquivariantEncoder& enc, const EncoderPass& pass, const Mat& du) {
    return backward_tape(enc.backbone, pass.tape, du * enc.iso.q).grads;
}

}  // namespace encp
