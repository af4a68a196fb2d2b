#include "encp/encp_model.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

namespace encp {

namespace {

Mat kron_identity(const Mat& o, int d) {
    Mat out = Mat::Zero(o.rows() * d, o.cols() * d);
    for (Eigen::Index s = 0; s < o.rows(); ++s)
        for (Eigen::Index t = 0; t < o.cols(); ++t)
            for (int j = 0; j < d; ++j) out(s * d + j, t * d + j) = o(s, t);
    return out;
}

// Per-block orthonormality penalty d * ||C - I||^2 with C the orbit-averaged
// second moment of the block's copies, estimated without bias over pairs a != b.
// Column j of every copy is gathered into F_j (N x m); Z_a = M_a M_a^T / d.
double block_omega(const Mat& f, const IsotypicBlock& b, double scale, Mat* grad) {
    const int n = static_cast<int>(f.rows()), m = b.multiplicity, d = b.irrep_dim;
    std::vector<Mat> fj(d, Mat(n, m));
    for (int j = 0; j < d; ++j)
        for (int s = 0; s < m; ++s) fj[j].col(s) = f.col(b.offset + s * d + j);
    Mat zsum = Mat::Zero(m, m);
    for (int j = 0; j < d; ++j) zsum.noalias() += fj[j].transpose() * fj[j];
    zsum /= d;
    // Per-sample Gram entries g_{jj'}(a) = <M_a[:, j], M_a[:, j']>.
    std::vector<Vec> gram(d * d);
    Vec self = Vec::Zero(n);
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            gram[j * d + k] = fj[j].cwiseProduct(fj[k]).rowwise().sum();
            self += gram[j * d + k].cwiseAbs2();
        }
    self /= static_cast<double>(d) * d;
    double trace = 0.0;
    for (int j = 0; j < d; ++j) trace += fj[j].squaredNorm();
    trace /= d;
    const double pairs = static_cast<double>(n) * (n - 1);
    const double s = (zsum.squaredNorm() - self.sum()) / pairs;
    const double omega = d * (s - 2.0 * trace / n + m);
    if (grad) {
        for (int j = 0; j < d; ++j) {
            Mat own = Mat::Zero(n, m);
            for (int k = 0; k < d; ++k) own += gram[k * d + j].asDiagonal() * fj[k];
            const Mat gj = scale * ((4.0 / pairs) * (fj[j] * zsum - own / d) - (4.0 / n) * fj[j]);
            for (int t = 0; t < m; ++t) grad->col(b.offset + t * d + j) += gj.col(t);
        }
    }
    return omega;
}

void project_model_gradient(const EncpModel& model, Vec& grad) {
    const int nx = model.enc_x.backbone.n_params(), ny = model.enc_y.backbone.n_params();
    MlpParams gx = model.enc_x.backbone, gy = model.enc_y.backbone;
    gx.unflatten(grad.head(nx));
    gy.unflatten(grad.segment(nx, ny));
    project_gradient(model.enc_x, gx);
    project_gradient(model.enc_y, gy);
    grad.head(nx) = gx.flatten();
    grad.segment(nx, ny) = gy.flatten();
}

std::vector<std::pair<int, int>> chunks(int n, int size) {
    std::vector<std::pair<int, int>> out;
    for (int start = 0; start < n;) {
        int end = std::min(n, start + size);
        if (n - end < 4) end = n;
        out.emplace_back(start, end);
        start = end;
    }
    return out;
}

}  // namespace

Mat EncpModel::operator_matrix() const {
    Mat e = Mat::Zero(r(), r());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = enc_x.iso.blocks[k];
        e.block(b.offset, b.offset, b.size(), b.size()) = kron_identity(blocks[k], b.irrep_dim);
    }
    return e;
}

int EncpModel::n_params() const {
    int n = enc_x.backbone.n_params() + enc_y.backbone.n_params();
    for (const auto& o : blocks) n += static_cast<int>(o.size());
    return n;
}

Vec EncpModel::flatten() const {
    Vec out(n_params());
    const Vec fx = enc_x.backbone.flatten(), fy = enc_y.backbone.flatten();
    out.head(fx.size()) = fx;
    out.segment(fx.size(), fy.size()) = fy;
    Eigen::Index k = fx.size() + fy.size();
    for (const auto& o : blocks) {
        out.segment(k, o.size()) = o.reshaped();
        k += o.size();
    }
    return out;
}

void EncpModel::unflatten(const Vec& flat) {
    require_dims(flat.size() == n_params(), "model unflatten: expected " + std::to_string(n_params()) + " values");
    const int nx = enc_x.backbone.n_params(), ny = enc_y.backbone.n_params();
    enc_x.backbone.unflatten(flat.head(nx));
    enc_y.backbone.unflatten(flat.segment(nx, ny));
    Eigen::Index k = nx + ny;
    for (auto& o : blocks) {
        o.reshaped() = flat.segment(k, o.size());
        k += o.size();
    }
}

EncpModel make_model(const GroupPtr& group, const GroupRepresentation& rep_x, const GroupRepresentation& rep_y,
                     const ModelConfig& cfg, std::uint64_t seed) {
    const int r = cfg.r > 0 ? cfg.r : 4 * group->order;
    auto rng_x = make_stream(seed, "init-x");
    auto rng_y = make_stream(seed, "init-y");
    EncpModel model;
    model.enc_x = make_encoder(group, rep_x, cfg.hidden, r, cfg.activation, rng_x);
    model.enc_y = make_encoder(group, rep_y, cfg.hidden, r, cfg.activation, rng_y);
    for (const auto& b : model.enc_x.iso.blocks) model.blocks.push_back(cfg.operator_init * Mat::Identity(b.multiplicity, b.multiplicity));
    return model;
}

Mat kernel_matrix(const EncpModel& model, const Mat& x, const Mat& y) {
    const Mat u = encode(model.enc_x, x), v = encode(model.enc_y, y);
    Mat k = u * model.operator_matrix() * v.transpose();
    k.array() += 1.0;
    return k;
}

Vec kernel_pairs(const EncpModel& model, const Mat& x, const Mat& y) {
    require_dims(x.rows() == y.rows(), "kernel_pairs: row counts differ");
    const Mat u = encode(model.enc_x, x), v = encode(model.enc_y, y);
    return ((u * model.operator_matrix()).cwiseProduct(v)).rowwise().sum().array() + 1.0;
}

double kernel_eval(const EncpModel& model, const Vec& x, const Vec& y) {
    return kernel_pairs(model, Mat(x.transpose()), Mat(y.transpose()))(0);
}

FeatureLossGrad feature_loss(const Mat& u, const Mat& v, const std::vector<Mat>& blocks, const IsotypicBasis& iso,
                             double gamma, bool with_grad) {
    const int n = static_cast<int>(u.rows());
    if (n < 4) throw InvalidParameter("loss needs a batch of at least 4 samples, got " + std::to_string(n));
    require_dims(v.rows() == n && u.cols() == iso.total_dim && v.cols() == iso.total_dim,
                 "feature_loss: feature shapes do not match the isotypic basis");
    require_dims(blocks.size() == iso.blocks.size(), "feature_loss: block count mismatch");
    FeatureLossGrad out;
    if (with_grad) {
        out.du = Mat::Zero(n, u.cols());
        out.dv = Mat::Zero(n, v.cols());
    }
    const double pairs = static_cast<double>(n) * (n - 1);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = iso.blocks[k];
        require_dims(blocks[k].rows() == b.multiplicity && blocks[k].cols() == b.multiplicity,
                     "feature_loss: operator block has the wrong shape");
        const Mat e = kron_identity(blocks[k], b.irrep_dim);
        const Mat uk = u.middleCols(b.offset, b.size());
        const Mat vk = v.middleCols(b.offset, b.size());
        const Mat vt = vk * e.transpose();
        const Mat kk = uk * vt.transpose();
        const double diag = kk.diagonal().sum();
        const double off = kk.squaredNorm() - kk.diagonal().squaredNorm();
        const double l0 = -2.0 / n * diag + off / pairs;
        out.terms.l0_blocks.push_back(l0);
        out.terms.l0 += l0;
        if (with_grad) {
            Mat g = (2.0 / pairs) * kk;
            g.diagonal().setConstant(-2.0 / n);
            out.du.middleCols(b.offset, b.size()) += g * vt;
            const Mat dvt = g.transpose() * uk;
            out.dv.middleCols(b.offset, b.size()) += dvt * e;
            const Mat de = dvt.transpose() * vk;
            Mat dblock = Mat::Zero(b.multiplicity, b.multiplicity);
            for (int s = 0; s < b.multiplicity; ++s)
                for (int t = 0; t < b.multiplicity; ++t)
                    for (int j = 0; j < b.irrep_dim; ++j) dblock(s, t) += de(s * b.irrep_dim + j, t * b.irrep_dim + j);
            out.dblocks.push_back(dblock);
        }
        out.terms.omega_x.push_back(block_omega(u, b, gamma, with_grad ? &out.du : nullptr));
        out.terms.omega_y.push_back(block_omega(v, b, gamma, with_grad ? &out.dv : nullptr));
    }
    // Only the invariant block needs an explicit centering penalty.
    const auto& t = iso.blocks.front();
    const Vec ubar = u.middleCols(t.offset, t.size()).colwise().mean().transpose();
    const Vec vbar = v.middleCols(t.offset, t.size()).colwise().mean().transpose();
    out.terms.centering = 2.0 * gamma * (ubar.squaredNorm() + vbar.squaredNorm());
    if (with_grad) {
        out.du.middleCols(t.offset, t.size()).rowwise() += (4.0 * gamma / n) * ubar.transpose();
        out.dv.middleCols(t.offset, t.size()).rowwise() += (4.0 * gamma / n) * vbar.transpose();
    }
    double omega = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) omega += out.terms.omega_x[k] + out.terms.omega_y[k];
    out.terms.total = out.terms.l0 + gamma * omega + out.terms.centering;
    return out;
}

LossAndGrad empirical_loss(const EncpModel& model, const Mat& x, const Mat& y, double gamma, bool with_grad) {
    require_dims(x.rows() == y.rows(), "empirical_loss: x and y batches differ in size");
    const EncoderPass px = encode_with_tape(model.enc_x, x), py = encode_with_tape(model.enc_y, y);
    FeatureLossGrad fl = feature_loss(px.u, py.u, model.blocks, model.enc_x.iso, gamma, with_grad);
    LossAndGrad out;
    out.terms = fl.terms;
    if (!with_grad) return out;
    const Vec gx = encoder_backward(model.enc_x, px, fl.du).flatten();
    const Vec gy = encoder_backward(model.enc_y, py, fl.dv).flatten();
    out.grad.resize(model.n_params());
    out.grad.head(gx.size()) = gx;
    out.grad.segment(gx.size(), gy.size()) = gy;
    Eigen::Index k = gx.size() + gy.size();
    for (const auto& d : fl.dblocks) {
        out.grad.segment(k, d.size()) = d.reshaped();
        k += d.size();
    }
    return out;
}

LossTerms evaluate_loss(const EncpModel& model, const Dataset& data, double gamma, int batch_size) {
    if (data.size() < 4) throw InvalidParameter("evaluate_loss needs at least 4 samples");
    LossTerms acc;
    const auto parts = chunks(data.size(), batch_size);
    for (const auto& [s, e] : parts) {
        const LossTerms t = empirical_loss(model, data.x.middleRows(s, e - s), data.y.middleRows(s, e - s), gamma, false).terms;
        acc.total += t.total;
        acc.l0 += t.l0;
        acc.centering += t.centering;
        if (acc.l0_blocks.empty()) {
            acc.l0_blocks.assign(t.l0_blocks.size(), 0.0);
            acc.omega_x.assign(t.omega_x.size(), 0.0);
            acc.omega_y.assign(t.omega_y.size(), 0.0);
        }
        for (std::size_t k = 0; k < t.l0_blocks.size(); ++k) {
            acc.l0_blocks[k] += t.l0_blocks[k];
            acc.omega_x[k] += t.omega_x[k];
            acc.omega_y[k] += t.omega_y[k];
        }
    }
    const double c = static_cast<double>(parts.size());
    acc.total /= c;
    acc.l0 /= c;
    acc.centering /= c;
    for (std::size_t k = 0; k < acc.l0_blocks.size(); ++k) {
        acc.l0_blocks[k] /= c;
        acc.omega_x[k] /= c;
        acc.omega_y[k] /= c;
    }
    return acc;
}

TrainHistory train(EncpModel& model, const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    if (cfg.batch_size < 4) throw InvalidParameter("batch_size must be >= 4");
    if (cfg.gamma < 0.0) throw InvalidParameter("gamma must be >= 0");
    if (cfg.epochs < 0) throw InvalidParameter("epochs must be >= 0");
    if (!(cfg.lr > 0.0)) throw InvalidParameter("lr must be > 0");
    const int n = data.size();
    if (n < 4) throw InvalidParameter("training set needs at least 4 samples");
    require_dims(data.x.cols() == model.enc_x.input_dim() && data.y.cols() == model.enc_y.input_dim(),
                 "training data dimensions do not match the model");

    auto refresh = [&] {
        refresh_center(model.enc_x, data.x);
        refresh_center(model.enc_y, data.y);
    };
    refresh();
    TrainHistory hist;
    hist.initial = evaluate_loss(model, data, cfg.gamma, cfg.batch_size);

    AdamState adam(model.n_params(), cfg.lr);
    auto rng = make_stream(cfg.seed, "shuffle");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Vec flat = model.flatten();
    double best_val = std::numeric_limits<double>::infinity();
    Vec best_flat;
    Vec best_cx, best_cy;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(perm.begin(), perm.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        int batches = 0;
        for (const auto& [s, e] : chunks(n, cfg.batch_size)) {
            const std::vector<int> idx(perm.begin() + s, perm.begin() + e);
            const Dataset batch = data.rows(idx);
            LossAndGrad lg = empirical_loss(model, batch.x, batch.y, cfg.gamma);
            if (!std::isfinite(lg.terms.total) || !lg.grad.allFinite()) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << ", batch " << batches << " (rows " << s << ".." << e - 1
                   << " of the shuffled order): total=" << lg.terms.total << " l0=" << lg.terms.l0
                   << " centering=" << lg.terms.centering << ", batch |x|max=" << batch.x.cwiseAbs().maxCoeff()
                   << " |y|max=" << batch.y.cwiseAbs().maxCoeff();
                throw TrainingError(os.str());
            }
            project_model_gradient(model, lg.grad);
            adam_step(adam, flat, lg.grad);
            model.unflatten(flat);
            project_parameters(model.enc_x);
            project_parameters(model.enc_y);
            flat = model.flatten();
            rec.loss += lg.terms.total;
            rec.l0 += lg.terms.l0;
            if (rec.omega_x.empty()) {
                rec.omega_x.assign(lg.terms.omega_x.size(), 0.0);
                rec.omega_y.assign(lg.terms.omega_y.size(), 0.0);
            }
            for (std::size_t k = 0; k < rec.omega_x.size(); ++k) {
                rec.omega_x[k] += lg.terms.omega_x[k];
                rec.omega_y[k] += lg.terms.omega_y[k];
            }
            ++batches;
        }
        rec.loss /= batches;
        rec.l0 /= batches;
        for (std::size_t k = 0; k < rec.omega_x.size(); ++k) {
            rec.omega_x[k] /= batches;
            rec.omega_y[k] /= batches;
        }
        refresh();
        if (validation) {
            const double val = evaluate_loss(model, *validation, cfg.gamma, cfg.batch_size).total;
            rec.val_loss = val;
            if (!std::isfinite(val)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
            if (val < best_val) {
                best_val = val;
                best_flat = flat;
                best_cx = model.enc_x.center;
                best_cy = model.enc_y.center;
                hist.best_epoch = epoch;
            }
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(std::move(rec));
    }
    if (validation && hist.best_epoch >= 0) {
        model.unflatten(best_flat);
        model.enc_x.center = best_cx;
        model.enc_y.center = best_cy;
    }
    return hist;
}

}  // namespace encp
