#pragma once

#include "encp/group.hpp"
#include "encp/mlp.hpp"

namespace encp {

/// (1/|G|) sum_g rho_out(g)^T w rho_in(g).
Mat project_equivariant(const Mat& w, const GroupRepresentation& rep_in, const GroupRepresentation& rep_out);
/// (1/|G|) sum_g rho(g) b.
Vec project_invariant(const Vec& b, const GroupRepresentation& rep);

/// MLP whose hidden and output spaces carry copies of the regular
/// representation, followed by centering and the isotypic change of basis:
/// u(x) = q (phi(x) - center).
struct EquivariantEncoder {
    GroupPtr group;
    GroupRepresentation rep_in;
    std::vector<GroupRepresentation> layer_reps;  // one per layer output
    MlpParams backbone;
    std::vector<RealIrrep> irreps;
    IsotypicBasis iso;
    GroupRepresentation rep_iso;  // block-diagonal action on u
    Vec center;

    int r() const { return iso.total_dim; }
    int input_dim() const { return rep_in.dim; }
};

/// hidden_widths are rounded up to multiples of |G|; r must be a multiple of |G|.
EquivariantEncoder make_encoder(const GroupPtr& group, const GroupRepresentation& rep_in,
                                const std::vector<int>& hidden_widths, int r, Activation activation,
                                std::mt19937_64& rng);

/// Rebuilds reps, irreps and the isotypic basis for a backbone with the given layout.
EquivariantEncoder encoder_skeleton(const GroupPtr& group, const GroupRepresentation& rep_in,
                                    const std::vector<int>& layer_widths, Activation activation);

/// Projects every weight and bias of the backbone onto its equivariant subspace.
void project_parameters(EquivariantEncoder& enc);
/// Same projection applied to a gradient with the backbone's shapes.
void project_gradient(const EquivariantEncoder& enc, MlpParams& grads);

/// Largest ||rho_out(g) W - W rho_in(g)|| over layers and g.
double weight_equivariance_error(const EquivariantEncoder& enc);

Mat backbone_features(const EquivariantEncoder& enc, const Mat& x);
Mat encode(const EquivariantEncoder& enc, const Mat& x);
Vec encode(const EquivariantEncoder& enc, const Vec& x);

/// Sets the center to the orbit-averaged mean of backbone features on x.
void refresh_center(EquivariantEncoder& enc, const Mat& x);

/// Backpropagates dL/du (N x r) to the backbone; center is held fixed.
MlpParams encoder_backward(const EquivariantEncoder& enc, const Mat& x, const Mat& du);

/// Forward pass that keeps the tape; u is the encoded output.
struct EncoderPass {
    MlpTape tape;
    Mat u;
};
EncoderPass encode_with_tape(const EquivariantEncoder& enc, const Mat& x);
MlpParams encoder_backward(const EquivariantEncoder& enc, const EncoderPass& pass, const Mat& du);

}  // namespace encp
