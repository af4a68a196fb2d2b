#pragma once

#include "encp/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace encp {

/// Structural description of a supported group: cyclic C_n, dihedral D_n
/// (order 2n) or a direct product of two such descriptions.
struct GroupKind {
    enum class Tag { cyclic, dihedral, product };
    Tag tag = Tag::cyclic;
    int n = 1;
    std::shared_ptr<const GroupKind> left, right;

    static GroupKind cyclic(int n);
    static GroupKind dihedral(int n);
    static GroupKind product(GroupKind a, GroupKind b);

    std::string label() const;
};

/// Parses "trivial", "C<n>", "D<n>" and products such as "C2xC2" or "D3xC2".
GroupKind parse_group_label(const std::string& label);

/// Finite group stored as a Cayley table over element indices.
struct FiniteGroup {
    GroupKind kind;
    std::string label;
    int order = 1;
    std::vector<int> cayley;  // row-major order x order, cayley[a*order+b] = a.b
    std::vector<int> inverse;
    int identity_index = 0;

    int compose(int a, int b) const { return cayley[static_cast<std::size_t>(a) * order + b]; }
    int inv(int a) const { return inverse[a]; }
};

using GroupPtr = std::shared_ptr<const FiniteGroup>;

GroupPtr make_group(const GroupKind& kind);
GroupPtr make_group(const std::string& label);

/// Linear orthogonal representation: one dim x dim matrix per group element.
struct GroupRepresentation {
    GroupPtr group;
    int dim = 0;
    std::vector<Mat> matrices;

    const Mat& operator()(int g) const { return matrices[g]; }
};

/// Right-regular representation, rho(g) e_h = e_{h g^-1}; with this
/// convention C3's generator acts as [[0,1,0],[0,0,1],[1,0,0]].
GroupRepresentation regular_representation(const GroupPtr& group);
GroupRepresentation trivial_representation(const GroupPtr& group, int dim);
GroupRepresentation direct_sum(const std::vector<GroupRepresentation>& reps);
GroupRepresentation repeat(const GroupRepresentation& rep, int copies);

/// Returns rep(g) v.
Vec act(const GroupRepresentation& rep, int g, const Vec& v);

/// Largest homomorphism / orthogonality / identity residual over the group.
double representation_error(const GroupRepresentation& rep);

struct RealIrrep {
    int id = 0;
    int dim = 1;
    std::vector<Mat> matrices;
    Vec character;
    /// Squared character norm <chi, chi>: 1 for real-type irreps, 2 for
    /// complex-type ones (2D rotation blocks of C_n, n >= 3, and their
    /// products). Equals the dimension of the commutant algebra.
    int character_norm = 1;

    bool complex_type() const { return character_norm == 2; }
    /// Multiplicity of this irrep inside the regular representation.
    int regular_multiplicity() const { return dim / character_norm; }
};

/// Real irreducible representations, trivial first.
std::vector<RealIrrep> real_irreps(const GroupPtr& group);

GroupRepresentation irrep_representation(const GroupPtr& group, const RealIrrep& irrep);

/// Group-average inner product (1/|G|) sum_g a(g) b(g).
double character_inner(const Vec& a, const Vec& b);
Vec character_of(const GroupRepresentation& rep);

struct IsotypicBlock {
    int irrep_id = 0;
    int multiplicity = 0;
    int irrep_dim = 1;
    int offset = 0;
    int size() const { return multiplicity * irrep_dim; }
};

/// Orthogonal change of basis q with q rho(g) q^T = (+)_k (+)_{m_k} irrep_k(g).
/// Inside block k coordinates are copy-major: index offset + s*d_k + j.
struct IsotypicBasis {
    Mat q;
    std::vector<IsotypicBlock> blocks;
    int total_dim = 0;
};

IsotypicBasis isotypic_decomposition(const GroupRepresentation& rep,
                                     const std::vector<RealIrrep>& irreps);

/// Block-diagonal representation (+)_k (+)_{m_k} irrep_k(g) matching `basis`.
GroupRepresentation isotypic_representation(const GroupPtr& group, const IsotypicBasis& basis,
                                            const std::vector<RealIrrep>& irreps);

/// Character projector onto the isotypic component of `irrep` inside `rep`.
Mat isotypic_projector(const GroupRepresentation& rep, const RealIrrep& irrep);

/// Largest ||q rho(g) q^T - (+) irrep(g)||_F over g.
double block_residual(const GroupRepresentation& rep, const IsotypicBasis& basis,
                      const std::vector<RealIrrep>& irreps);

/// Representation on a data space of dimension `dim`, built as a direct sum
/// of irreps cycling through the non-trivial ones (C2 on R gives x -> -x).
GroupRepresentation default_data_representation(const GroupPtr& group, int dim);

}  // namespace encp
