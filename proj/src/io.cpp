#include "encp/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace encp {

namespace fs = std::filesystem;

std::string hex_digest(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& values) {
    require_dims(header.size() == static_cast<std::size_t>(values.cols()), "write_csv: header width differs");
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
        out << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

Mat read_csv(const std::string& path, std::vector<std::string>* header) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": empty CSV");
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error(path + ":" + std::to_string(lineno) + ": cannot parse '" + cell + "'");
            }
        }
        if (row.size() != cols.size())
            throw DimensionMismatch(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                                    " values");
        rows.push_back(std::move(row));
    }
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    if (header) *header = cols;
    return m;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path + ": " + e.what());
    }
}

void write_dataset(const std::string& dir, const Dataset& data, const json& sidecar) {
    fs::create_directories(dir);
    std::vector<std::string> header;
    for (Eigen::Index i = 0; i < data.x.cols(); ++i) header.push_back("x_" + std::to_string(i));
    for (Eigen::Index i = 0; i < data.y.cols(); ++i) header.push_back("y_" + std::to_string(i));
    Mat all(data.x.rows(), data.x.cols() + data.y.cols());
    all << data.x, data.y;
    write_csv((fs::path(dir) / "data.csv").string(), header, all);
    json side = sidecar;
    side["p"] = data.x.cols();
    side["q"] = data.y.cols();
    side["n"] = data.x.rows();
    side["seed"] = data.seed;
    side["spec_digest"] = data.spec_digest;
    write_json((fs::path(dir) / "data.json").string(), side);
}

Dataset read_dataset(const std::string& dir, json* sidecar) {
    std::vector<std::string> header;
    const std::string csv = fs::is_directory(dir) ? (fs::path(dir) / "data.csv").string() : dir;
    const Mat all = read_csv(csv, &header);
    int p = 0;
    while (p < static_cast<int>(header.size()) && header[p].rfind("x_", 0) == 0) ++p;
    const int q = static_cast<int>(header.size()) - p;
    if (p == 0 || q == 0) throw Error(csv + ": expected columns x_0.. followed by y_0..");
    for (int j = p; j < static_cast<int>(header.size()); ++j)
        if (header[j].rfind("y_", 0) != 0) throw Error(csv + ": column '" + header[j] + "' is not a y column");
    Dataset d;
    d.x = all.leftCols(p);
    d.y = all.rightCols(q);
    const fs::path side = fs::path(csv).parent_path() / "data.json";
    if (fs::exists(side)) {
        const json j = read_json(side.string());
        d.seed = j.value("seed", std::uint64_t{0});
        d.spec_digest = j.value("spec_digest", std::string{});
        if (sidecar) *sidecar = j;
    }
    return d;
}

void write_checkpoint(const std::string& path, const json& header, const Vec& payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    json h = header;
    h["payload_len"] = payload.size();
    out << h.dump() << '\n';
    for (Eigen::Index i = 0; i < payload.size(); ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(payload(i));
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) throw Error("write failed for " + path);
}

Vec read_checkpoint(const std::string& path, json* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    json h;
    try {
        h = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(path + ": bad checkpoint header: " + e.what());
    }
    const auto n = h.at("payload_len").get<Eigen::Index>();
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error(path + ": truncated checkpoint payload");
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        out(i) = std::bit_cast<double>(bits);
    }
    if (header) *header = h;
    return out;
}

json representation_to_json(const GroupRepresentation& rep) {
    json mats = json::array();
    for (const auto& m : rep.matrices) mats.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    return {{"dim", rep.dim}, {"matrices", mats}};
}

GroupRepresentation representation_from_json(const GroupPtr& group, const json& j) {
    GroupRepresentation rep;
    rep.group = group;
    rep.dim = j.at("dim").get<int>();
    const auto& mats = j.at("matrices");
    if (static_cast<int>(mats.size()) != group->order) throw DimensionMismatch("representation has wrong element count");
    for (const auto& m : mats) {
        const auto vals = m.get<std::vector<double>>();
        if (static_cast<int>(vals.size()) != rep.dim * rep.dim) throw DimensionMismatch("representation matrix has wrong size");
        rep.matrices.push_back(Eigen::Map<const Mat>(vals.data(), rep.dim, rep.dim));
    }
    return rep;
}

namespace {

json encoder_header(const EquivariantEncoder& enc) {
    std::vector<int> widths;
    for (const auto& l : enc.backbone.layers) widths.push_back(static_cast<int>(l.w.rows()));
    json blocks = json::array();
    for (const auto& b : enc.iso.blocks)
        blocks.push_back({{"irrep", b.irrep_id}, {"multiplicity", b.multiplicity}, {"dim", b.irrep_dim}, {"offset", b.offset}});
    const Mat& q = enc.iso.q;
    return {{"rep_in", representation_to_json(enc.rep_in)},
            {"widths", widths},
            {"activation", activation_name(enc.backbone.activation)},
            {"blocks", blocks},
            {"q", std::vector<double>(q.data(), q.data() + q.size())},
            {"center", std::vector<double>(enc.center.data(), enc.center.data() + enc.center.size())}};
}

EquivariantEncoder encoder_from_header(const GroupPtr& group, const json& j) {
    EquivariantEncoder enc = encoder_skeleton(group, representation_from_json(group, j.at("rep_in")),
                                              j.at("widths").get<std::vector<int>>(),
                                              parse_activation(j.at("activation").get<std::string>()));
    const auto q = j.at("q").get<std::vector<double>>();
    const Mat stored = Eigen::Map<const Mat>(q.data(), enc.r(), enc.r());
    if ((stored - enc.iso.q).cwiseAbs().maxCoeff() > 1e-9)
        throw DecompositionFailure("checkpoint isotypic basis differs from the reconstructed one");
    const auto c = j.at("center").get<std::vector<double>>();
    enc.center = Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
    return enc;
}

}  // namespace

void save_model(const std::string& path, const EncpModel& model, const json& extra) {
    json h = extra;
    h["format"] = "encp-model-1";
    h["group"] = model.group()->label;
    h["r"] = model.r();
    h["enc_x"] = encoder_header(model.enc_x);
    h["enc_y"] = encoder_header(model.enc_y);
    write_checkpoint(path, h, model.flatten());
}

EncpModel load_model(const std::string& path, json* header) {
    json h;
    const Vec flat = read_checkpoint(path, &h);
    if (h.value("format", std::string{}) != "encp-model-1") throw Error(path + ": not a model checkpoint");
    const GroupPtr group = make_group(h.at("group").get<std::string>());
    EncpModel model;
    model.enc_x = encoder_from_header(group, h.at("enc_x"));
    model.enc_y = encoder_from_header(group, h.at("enc_y"));
    for (const auto& b : model.enc_x.iso.blocks) model.blocks.push_back(Mat::Zero(b.multiplicity, b.multiplicity));
    model.unflatten(flat);
    if (header) *header = h;
    return model;
}

json loss_terms_to_json(const LossTerms& t) {
    return {{"total", t.total}, {"l0", t.l0}, {"centering", t.centering},
            {"l0_blocks", t.l0_blocks}, {"omega_x", t.omega_x}, {"omega_y", t.omega_y}};
}

json history_to_json(const TrainHistory& h) {
    json epochs = json::array();
    for (const auto& e : h.epochs) {
        json r = {{"epoch", e.epoch}, {"loss", e.loss}, {"l0", e.l0}, {"omega_x", e.omega_x},
                  {"omega_y", e.omega_y}, {"seconds", e.seconds}};
        if (e.val_loss) r["val_loss"] = *e.val_loss;
        epochs.push_back(r);
    }
    return {{"initial", loss_terms_to_json(h.initial)}, {"epochs", epochs}, {"best_epoch", h.best_epoch}};
}

json coverage_to_json(const CoverageStats& c) {
    return {{"coverage", c.coverage},
            {"relaxed_coverage", c.relaxed_coverage},
            {"mean_set_size", c.mean_set_size},
            {"per_dim", std::vector<double>(c.per_dim.data(), c.per_dim.data() + c.per_dim.size())}};
}

}  // namespace encp
