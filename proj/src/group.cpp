#include "encp/group.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace encp {

namespace {

Mat rotation(double angle) {
    Mat r(2, 2);
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

Mat scalar_matrix(double v) { return Mat::Constant(1, 1, v); }

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

void check_group_axioms(const FiniteGroup& g) {
    const int n = g.order;
    for (int a = 0; a < n; ++a) {
        if (g.compose(g.identity_index, a) != a || g.compose(a, g.identity_index) != a)
            throw Error("group " + g.label + ": identity axiom violated");
        if (g.compose(a, g.inv(a)) != g.identity_index)
            throw Error("group " + g.label + ": inverse axiom violated");
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                if (g.compose(g.compose(a, b), c) != g.compose(a, g.compose(b, c)))
                    throw Error("group " + g.label + ": associativity violated");
    }
}

void fill_inverse(FiniteGroup& g) {
    g.inverse.assign(g.order, -1);
    for (int a = 0; a < g.order; ++a)
        for (int b = 0; b < g.order; ++b)
            if (g.compose(a, b) == g.identity_index) g.inverse[a] = b;
}

FiniteGroup build(const GroupKind& kind) {
    FiniteGroup g;
    g.kind = kind;
    g.label = kind.label();
    g.identity_index = 0;
    switch (kind.tag) {
        case GroupKind::Tag::cyclic: {
            const int n = kind.n;
            g.order = n;
            g.cayley.resize(static_cast<std::size_t>(n) * n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) g.cayley[a * n + b] = (a + b) % n;
            break;
        }
        case GroupKind::Tag::dihedral: {
            // element r^k s^s stored at index k + n*s
            const int n = kind.n;
            g.order = 2 * n;
            g.cayley.resize(static_cast<std::size_t>(g.order) * g.order);
            for (int a = 0; a < g.order; ++a)
                for (int b = 0; b < g.order; ++b) {
                    const int ka = a % n, sa = a / n, kb = b % n, sb = b / n;
                    const int k = ((ka + (sa ? -kb : kb)) % n + n) % n;
                    g.cayley[a * g.order + b] = k + n * ((sa + sb) % 2);
                }
            break;
        }
        case GroupKind::Tag::product: {
            const FiniteGroup l = build(*kind.left);
            const FiniteGroup r = build(*kind.right);
            g.order = l.order * r.order;
            g.cayley.resize(static_cast<std::size_t>(g.order) * g.order);
            for (int a = 0; a < g.order; ++a)
                for (int b = 0; b < g.order; ++b) {
                    const int la = a / r.order, ra = a % r.order;
                    const int lb = b / r.order, rb = b % r.order;
                    g.cayley[a * g.order + b] = l.compose(la, lb) * r.order + r.compose(ra, rb);
                }
            break;
        }
    }
    fill_inverse(g);
    return g;
}

struct IrrepCandidate {
    std::vector<Mat> matrices;
};

std::vector<IrrepCandidate> cyclic_irreps(int n) {
    std::vector<IrrepCandidate> out;
    IrrepCandidate triv;
    for (int k = 0; k < n; ++k) triv.matrices.push_back(scalar_matrix(1.0));
    out.push_back(triv);
    if (n % 2 == 0) {
        IrrepCandidate sign;
        for (int k = 0; k < n; ++k) sign.matrices.push_back(scalar_matrix(k % 2 ? -1.0 : 1.0));
        out.push_back(sign);
    }
    for (int h = 1; 2 * h < n; ++h) {
        IrrepCandidate rot;
        for (int k = 0; k < n; ++k) rot.matrices.push_back(rotation(2.0 * std::numbers::pi * h * k / n));
        out.push_back(rot);
    }
    return out;
}

std::vector<IrrepCandidate> dihedral_irreps(int n) {
    const int order = 2 * n;
    auto one_dim = [&](auto fn) {
        IrrepCandidate c;
        for (int e = 0; e < order; ++e) c.matrices.push_back(scalar_matrix(fn(e % n, e / n)));
        return c;
    };
    std::vector<IrrepCandidate> out;
    out.push_back(one_dim([](int, int) { return 1.0; }));
    out.push_back(one_dim([](int, int s) { return s ? -1.0 : 1.0; }));
    if (n % 2 == 0) {
        out.push_back(one_dim([](int k, int) { return k % 2 ? -1.0 : 1.0; }));
        out.push_back(one_dim([](int k, int s) { return (k + s) % 2 ? -1.0 : 1.0; }));
    }
    Mat flip(2, 2);
    flip << 1, 0, 0, -1;
    for (int h = 1; 2 * h < n; ++h) {
        IrrepCandidate c;
        for (int e = 0; e < order; ++e) {
            const int k = e % n, s = e / n;
            Mat m = rotation(2.0 * std::numbers::pi * h * k / n);
            if (s) m = m * flip;
            c.matrices.push_back(m);
        }
        out.push_back(c);
    }
    return out;
}

Vec trace_vector(const std::vector<Mat>& ms) {
    Vec chi(static_cast<Eigen::Index>(ms.size()));
    for (std::size_t i = 0; i < ms.size(); ++i) chi(static_cast<Eigen::Index>(i)) = ms[i].trace();
    return chi;
}

int norm_of(const std::vector<Mat>& ms) {
    const Vec chi = trace_vector(ms);
    return static_cast<int>(std::lround(character_inner(chi, chi)));
}

std::vector<IrrepCandidate> candidate_irreps(const FiniteGroup& g);

std::vector<IrrepCandidate> product_irreps(const FiniteGroup& g) {
    const FiniteGroup l = build(*g.kind.left);
    const FiniteGroup r = build(*g.kind.right);
    const auto li = candidate_irreps(l);
    const auto ri = candidate_irreps(r);
    std::vector<IrrepCandidate> out;
    for (const auto& a : li) {
        const bool a_complex = norm_of(a.matrices) == 2;
        for (const auto& b : ri) {
            const bool b_complex = norm_of(b.matrices) == 2;
            if (a_complex && b_complex) {
                // rot(t1) (x) rot(t2) splits over the reals into rot(t1+t2) (+) rot(t1-t2).
                if (a.matrices[0].rows() != 2 || b.matrices[0].rows() != 2)
                    throw UnsupportedGroup("group " + g.label +
                                           ": product of higher-dimensional complex-type irreps");
                IrrepCandidate plus, minus;
                for (int e = 0; e < g.order; ++e) {
                    const Mat& ma = a.matrices[e / r.order];
                    const Mat& mb = b.matrices[e % r.order];
                    const double ta = std::atan2(ma(1, 0), ma(0, 0));
                    const double tb = std::atan2(mb(1, 0), mb(0, 0));
                    plus.matrices.push_back(rotation(ta + tb));
                    minus.matrices.push_back(rotation(ta - tb));
                }
                out.push_back(plus);
                out.push_back(minus);
            } else {
                IrrepCandidate c;
                for (int e = 0; e < g.order; ++e)
                    c.matrices.push_back(kron(a.matrices[e / r.order], b.matrices[e % r.order]));
                out.push_back(c);
            }
        }
    }
    return out;
}

std::vector<IrrepCandidate> candidate_irreps(const FiniteGroup& g) {
    switch (g.kind.tag) {
        case GroupKind::Tag::cyclic:
            return cyclic_irreps(g.kind.n);
        case GroupKind::Tag::dihedral:
            return dihedral_irreps(g.kind.n);
        case GroupKind::Tag::product:
            return product_irreps(g);
    }
    throw UnsupportedGroup("unsupported group kind");
}

Mat block_diag_irreps(const IsotypicBasis& basis, const std::vector<RealIrrep>& irreps, int g) {
    Mat out = Mat::Zero(basis.total_dim, basis.total_dim);
    for (const auto& b : basis.blocks) {
        const Mat& m = irreps[b.irrep_id].matrices[g];
        for (int s = 0; s < b.multiplicity; ++s)
            out.block(b.offset + s * b.irrep_dim, b.offset + s * b.irrep_dim, b.irrep_dim, b.irrep_dim) = m;
    }
    return out;
}

// Commutant element J with J^2 = -I for a complex-type irrep.
Mat complex_structure(const RealIrrep& irrep) {
    const int d = irrep.dim;
    const double order = static_cast<double>(irrep.matrices.size());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Mat e = Mat::Zero(d, d);
            e(i, j) = 1.0;
            Mat avg = Mat::Zero(d, d);
            for (const auto& m : irrep.matrices) avg += m * e * m.transpose();
            avg /= order;
            Mat a = 0.5 * (avg - avg.transpose());
            const double c = -(a * a).trace() / d;
            if (c > 1e-8) return a / std::sqrt(c);
        }
    throw DecompositionFailure("no complex structure found for complex-type irrep");
}

}  // namespace

GroupKind GroupKind::cyclic(int n) {
    if (n < 1) throw InvalidParameter("cyclic group order must be >= 1, got " + std::to_string(n));
    GroupKind k;
    k.tag = Tag::cyclic;
    k.n = n;
    return k;
}

GroupKind GroupKind::dihedral(int n) {
    if (n < 1) throw InvalidParameter("dihedral group parameter must be >= 1, got " + std::to_string(n));
    GroupKind k;
    k.tag = Tag::dihedral;
    k.n = n;
    return k;
}

GroupKind GroupKind::product(GroupKind a, GroupKind b) {
    GroupKind k;
    k.tag = Tag::product;
    k.left = std::make_shared<const GroupKind>(std::move(a));
    k.right = std::make_shared<const GroupKind>(std::move(b));
    return k;
}

std::string GroupKind::label() const {
    switch (tag) {
        case Tag::cyclic:
            return "C" + std::to_string(n);
        case Tag::dihedral:
            return "D" + std::to_string(n);
        case Tag::product:
            return left->label() + "x" + right->label();
    }
    return "?";
}

GroupKind parse_group_label(const std::string& label) {
    if (label == "trivial" || label == "e") return GroupKind::cyclic(1);
    std::vector<GroupKind> factors;
    std::stringstream ss(label);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        if (part.size() < 2 || (part[0] != 'C' && part[0] != 'D'))
            throw UnsupportedGroup("cannot parse group label '" + label + "'");
        int n = 0;
        try {
            std::size_t used = 0;
            n = std::stoi(part.substr(1), &used);
            if (used != part.size() - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw UnsupportedGroup("cannot parse group label '" + label + "'");
        }
        factors.push_back(part[0] == 'C' ? GroupKind::cyclic(n) : GroupKind::dihedral(n));
    }
    if (factors.empty()) throw UnsupportedGroup("empty group label");
    GroupKind k = factors.front();
    for (std::size_t i = 1; i < factors.size(); ++i) k = GroupKind::product(k, factors[i]);
    return k;
}

GroupPtr make_group(const GroupKind& kind) {
    auto g = std::make_shared<FiniteGroup>(build(kind));
    check_group_axioms(*g);
    return g;
}

GroupPtr make_group(const std::string& label) { return make_group(parse_group_label(label)); }

GroupRepresentation regular_representation(const GroupPtr& group) {
    GroupRepresentation rep;
    rep.group = group;
    rep.dim = group->order;
    for (int g = 0; g < group->order; ++g) {
        Mat m = Mat::Zero(group->order, group->order);
        for (int h = 0; h < group->order; ++h) m(group->compose(h, group->inv(g)), h) = 1.0;
        rep.matrices.push_back(std::move(m));
    }
    return rep;
}

GroupRepresentation trivial_representation(const GroupPtr& group, int dim) {
    if (dim < 1) throw InvalidParameter("representation dimension must be >= 1");
    GroupRepresentation rep;
    rep.group = group;
    rep.dim = dim;
    rep.matrices.assign(group->order, Mat::Identity(dim, dim));
    return rep;
}

GroupRepresentation direct_sum(const std::vector<GroupRepresentation>& reps) {
    if (reps.empty()) throw InvalidParameter("direct_sum of no representations");
    GroupRepresentation out;
    out.group = reps.front().group;
    for (const auto& r : reps) {
        if (r.group->order != out.group->order || r.group->label != out.group->label)
            throw DimensionMismatch("direct_sum: representations of different groups");
        out.dim += r.dim;
    }
    for (int g = 0; g < out.group->order; ++g) {
        Mat m = Mat::Zero(out.dim, out.dim);
        int off = 0;
        for (const auto& r : reps) {
            m.block(off, off, r.dim, r.dim) = r.matrices[g];
            off += r.dim;
        }
        out.matrices.push_back(std::move(m));
    }
    return out;
}

GroupRepresentation repeat(const GroupRepresentation& rep, int copies) {
    if (copies < 1) throw InvalidParameter("repeat: copies must be >= 1");
    return direct_sum(std::vector<GroupRepresentation>(copies, rep));
}

Vec act(const GroupRepresentation& rep, int g, const Vec& v) {
    require_dims(v.size() == rep.dim, "act: vector has dim " + std::to_string(v.size()) +
                                          ", representation has dim " + std::to_string(rep.dim));
    if (g < 0 || g >= static_cast<int>(rep.matrices.size()))
        throw InvalidParameter("act: element index out of range");
    return rep.matrices[g] * v;
}

double representation_error(const GroupRepresentation& rep) {
    const auto& G = *rep.group;
    const Mat eye = Mat::Identity(rep.dim, rep.dim);
    double err = (rep.matrices[G.identity_index] - eye).norm();
    for (int a = 0; a < G.order; ++a) {
        err = std::max(err, (rep.matrices[a] * rep.matrices[a].transpose() - eye).norm());
        for (int b = 0; b < G.order; ++b)
            err = std::max(err, (rep.matrices[G.compose(a, b)] - rep.matrices[a] * rep.matrices[b]).norm());
    }
    return err;
}

double character_inner(const Vec& a, const Vec& b) { return a.dot(b) / static_cast<double>(a.size()); }

Vec character_of(const GroupRepresentation& rep) { return trace_vector(rep.matrices); }

std::vector<RealIrrep> real_irreps(const GroupPtr& group) {
    const auto candidates = candidate_irreps(*group);
    std::vector<RealIrrep> out;
    for (const auto& c : candidates) {
        RealIrrep ir;
        ir.dim = static_cast<int>(c.matrices.front().rows());
        ir.matrices = c.matrices;
        ir.character = trace_vector(c.matrices);
        ir.character_norm = static_cast<int>(std::lround(character_inner(ir.character, ir.character)));
        if (ir.character_norm != 1 && ir.character_norm != 2)
            throw UnsupportedGroup("group " + group->label + ": could not reduce an irrep candidate (<chi,chi> = " +
                                   std::to_string(ir.character_norm) + ")");
        bool duplicate = false;
        for (const auto& o : out)
            if (std::abs(character_inner(o.character, ir.character)) > 0.5) duplicate = true;
        if (duplicate) continue;
        ir.id = static_cast<int>(out.size());
        out.push_back(std::move(ir));
    }
    int total = 0;
    for (const auto& ir : out) total += ir.dim * ir.regular_multiplicity();
    if (total != group->order)
        throw UnsupportedGroup("group " + group->label + ": irrep table incomplete (" + std::to_string(total) +
                               " != " + std::to_string(group->order) + ")");
    return out;
}

GroupRepresentation irrep_representation(const GroupPtr& group, const RealIrrep& irrep) {
    GroupRepresentation rep;
    rep.group = group;
    rep.dim = irrep.dim;
    rep.matrices = irrep.matrices;
    return rep;
}

Mat isotypic_projector(const GroupRepresentation& rep, const RealIrrep& irrep) {
    Mat p = Mat::Zero(rep.dim, rep.dim);
    for (int g = 0; g < rep.group->order; ++g) p += irrep.character(g) * rep.matrices[g];
    return p * (static_cast<double>(irrep.dim) / (rep.group->order * irrep.character_norm));
}

IsotypicBasis isotypic_decomposition(const GroupRepresentation& rep, const std::vector<RealIrrep>& irreps) {
    const int n = rep.dim;
    const int order = rep.group->order;
    if (static_cast<int>(irreps.size()) == 0 || static_cast<int>(irreps.front().matrices.size()) != order)
        throw DimensionMismatch("isotypic_decomposition: irreps do not match the group");

    const Vec chi = character_of(rep);
    IsotypicBasis basis;
    basis.q = Mat::Zero(n, n);
    int row = 0;
    for (const auto& irrep : irreps) {
        const double ratio = character_inner(chi, irrep.character) / irrep.character_norm;
        const int mult = static_cast<int>(std::lround(ratio));
        if (std::abs(ratio - mult) > 1e-6 || mult < 0)
            throw DecompositionFailure("non-integral multiplicity for irrep " + std::to_string(irrep.id));
        if (mult == 0) continue;
        const int d = irrep.dim;

        // Intertwiners B (d x n) with B rho(g) = irrep(g) B, obtained by
        // averaging matrix units over the group; block Gram-Schmidt keeps the
        // copies mutually orthogonal.
        std::vector<Mat> copies;
        for (int i = 0; i < d && static_cast<int>(copies.size()) < mult; ++i)
            for (int j = 0; j < n && static_cast<int>(copies.size()) < mult; ++j) {
                Mat b = Mat::Zero(d, n);
                for (int g = 0; g < order; ++g)
                    b += irrep.matrices[g].col(i) * rep.matrices[g].col(j).transpose();
                b /= order;
                for (int pass = 0; pass < 2; ++pass)
                    for (const auto& c : copies) b -= (b * c.transpose()) * c;
                const double scale = (b * b.transpose()).trace() / d;
                if (scale < 1e-10) continue;
                b /= std::sqrt(scale);
                copies.push_back(std::move(b));
            }
        if (static_cast<int>(copies.size()) != mult)
            throw DecompositionFailure("could not build " + std::to_string(mult) + " copies of irrep " +
                                       std::to_string(irrep.id));

        // Canonical orientation of every copy.
        Mat J;
        if (irrep.complex_type()) J = complex_structure(irrep);
        for (auto& b : copies) {
            int col = 0;
            while (col < n && b.col(col).norm() < 1e-9) ++col;
            if (col == n) continue;
            if (irrep.complex_type()) {
                const Vec jb = J * b.col(col);
                const double phi = std::atan2(jb(0), b(0, col));
                b = (std::cos(phi) * Mat::Identity(d, d) + std::sin(phi) * J) * b;
                for (int c2 = 0; c2 < n; ++c2)
                    if (std::abs(b(0, c2)) > 1e-9) {
                        if (b(0, c2) < 0) b = -b;
                        break;
                    }
            } else {
                for (int c2 = 0; c2 < n; ++c2)
                    if (std::abs(b(0, c2)) > 1e-9) {
                        if (b(0, c2) < 0) b = -b;
                        break;
                    }
            }
        }
        IsotypicBlock block{irrep.id, mult, d, row};
        for (const auto& b : copies) {
            basis.q.block(row, 0, d, n) = b;
            row += d;
        }
        basis.blocks.push_back(block);
    }
    if (row != n)
        throw DecompositionFailure("isotypic blocks cover " + std::to_string(row) + " of " + std::to_string(n) +
                                   " dimensions");
    basis.total_dim = n;
    const double residual = block_residual(rep, basis, irreps);
    if (residual > 1e-8)
        throw DecompositionFailure("block-diagonalisation residual " + std::to_string(residual) + " exceeds 1e-8");
    return basis;
}

GroupRepresentation isotypic_representation(const GroupPtr& group, const IsotypicBasis& basis,
                                            const std::vector<RealIrrep>& irreps) {
    GroupRepresentation rep;
    rep.group = group;
    rep.dim = basis.total_dim;
    for (int g = 0; g < group->order; ++g) rep.matrices.push_back(block_diag_irreps(basis, irreps, g));
    return rep;
}

double block_residual(const GroupRepresentation& rep, const IsotypicBasis& basis,
                      const std::vector<RealIrrep>& irreps) {
    double worst = 0.0;
    for (int g = 0; g < rep.group->order; ++g) {
        const Mat target = block_diag_irreps(basis, irreps, g);
        worst = std::max(worst, (basis.q * rep.matrices[g] * basis.q.transpose() - target).norm());
    }
    return worst;
}

GroupRepresentation default_data_representation(const GroupPtr& group, int dim) {
    if (dim < 1) throw InvalidParameter("data dimension must be >= 1");
    const auto irreps = real_irreps(group);
    if (irreps.size() == 1) return trivial_representation(group, dim);
    std::vector<GroupRepresentation> parts;
    int remaining = dim;
    std::size_t next = 1;
    while (remaining > 0) {
        const RealIrrep* pick = nullptr;
        for (std::size_t tries = 0; tries + 1 < irreps.size() && !pick; ++tries) {
            const auto& cand = irreps[next];
            next = next + 1 < irreps.size() ? next + 1 : 1;
            if (cand.dim <= remaining) pick = &cand;
        }
        if (!pick) pick = &irreps.front();
        parts.push_back(irrep_representation(group, *pick));
        remaining -= pick->dim;
    }
    return direct_sum(parts);
}

}  // namespace encp
