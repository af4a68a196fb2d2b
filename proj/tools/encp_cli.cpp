#include "encp/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

using namespace encp;
namespace fs = std::filesystem;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(std::stoi(part));
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(std::stod(part));
    return out;
}

struct DataContext {
    Dataset data;
    json sidecar;
    GroupPtr data_group;
    GroupRepresentation rep_x, rep_y;
    std::optional<SymmetricGmmSpec> spec;
};

DataContext load_data(const std::string& dir) {
    DataContext c;
    c.data = read_dataset(dir, &c.sidecar);
    c.data_group = make_group(c.sidecar.value("group", std::string("trivial")));
    const std::string family = c.sidecar.value("family", std::string("gmm"));
    if (family == "moons") {
        c.rep_x = moons_rep_x(c.data_group);
        c.rep_y = moons_rep_y(c.data_group);
    } else {
        c.rep_x = default_data_representation(c.data_group, static_cast<int>(c.data.x.cols()));
        c.rep_y = default_data_representation(c.data_group, static_cast<int>(c.data.y.cols()));
    }
    if (family == "gmm" && c.sidecar.contains("n_g")) {
        c.spec = build_spec(c.data_group, c.rep_x, c.rep_y, c.sidecar.at("n_g").get<int>(),
                            c.sidecar.at("spec_seed").get<std::uint64_t>());
        if (c.spec->digest() != c.data.spec_digest)
            throw Error("dataset spec digest does not match the regenerated generator");
    }
    return c;
}

struct RunContext {
    EncpModel model;
    json run;
    DataContext data;
    GroupRepresentation model_rep_x, model_rep_y;
};

RunContext load_run(const std::string& run_dir) {
    RunContext r;
    r.run = read_json((fs::path(run_dir) / "run.json").string());
    r.model = load_model((fs::path(run_dir) / "model.bin").string());
    r.data = load_data(r.run.at("data").get<std::string>());
    const bool sym = r.model.group()->order > 1;
    r.model_rep_x = sym ? r.data.rep_x : trivial_representation(r.model.group(), r.data.rep_x.dim);
    r.model_rep_y = sym ? r.data.rep_y : trivial_representation(r.model.group(), r.data.rep_y.dim);
    return r;
}

void print_group(const std::string& label) {
    const GroupPtr g = make_group(label);
    const auto irreps = real_irreps(g);
    std::cout << "group," << g->label << "\norder," << g->order << "\n\n";
    std::cout << "irrep,dim,type";
    for (int e = 0; e < g->order; ++e) std::cout << ",chi_" << e;
    std::cout << '\n';
    for (const auto& ir : irreps) {
        std::cout << ir.id << ',' << ir.dim << ',' << (ir.complex_type() ? "complex" : "real");
        for (int e = 0; e < g->order; ++e) std::cout << ',' << std::setprecision(12) << ir.character(e);
        std::cout << '\n';
    }
    const IsotypicBasis iso = isotypic_decomposition(regular_representation(g), irreps);
    std::cout << "\nblock,irrep,multiplicity,dim,offset\n";
    for (std::size_t k = 0; k < iso.blocks.size(); ++k) {
        const auto& b = iso.blocks[k];
        std::cout << k << ',' << b.irrep_id << ',' << b.multiplicity << ',' << b.irrep_dim << ',' << b.offset << '\n';
    }
    std::cout << "\nQ\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < iso.q.rows(); ++i) {
        for (Eigen::Index j = 0; j < iso.q.cols(); ++j) std::cout << (j ? "," : "") << iso.q(i, j);
        std::cout << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equivariant conditional expectation operator learning"};
    app.require_subcommand(1);

    auto* group_cmd = app.add_subcommand("group", "Group utilities");
    auto* inspect = group_cmd->add_subcommand("inspect", "Print order, irreps and the isotypic basis");
    std::string group_label;
    inspect->add_option("label", group_label, "Group label, e.g. C3, D6, C2xC2")->required();
    group_cmd->require_subcommand(1);

    auto* gmm_cmd = app.add_subcommand("gmm", "Synthetic data");
    auto* generate = gmm_cmd->add_subcommand("generate", "Sample a symmetric mixture or the moons benchmark");
    std::string gen_group = "C2", family = "gmm", gen_out;
    int px = 1, qy = 1, ng = 3, n = 8192;
    std::uint64_t gen_seed = 0;
    std::optional<std::uint64_t> spec_seed;
    double beta = 1.0;
    generate->add_option("--group", gen_group);
    generate->add_option("--family", family)->check(CLI::IsMember({"gmm", "moons"}));
    generate->add_option("--px", px);
    generate->add_option("--qy", qy);
    generate->add_option("--ng", ng);
    generate->add_option("--n", n);
    generate->add_option("--seed", gen_seed);
    generate->add_option("--spec-seed", spec_seed, "Generator seed (defaults to --seed)");
    generate->add_option("--beta", beta);
    generate->add_option("--out", gen_out)->required();
    gmm_cmd->require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
    std::string train_data, train_group = "trivial", train_out, hidden = "64,64", activation = "tanh";
    int r = 0, epochs = 100, batch = 256;
    double gamma = 1e-2, lr = 1e-3, val_fraction = 0.0, op_init = 0.1;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("--data", train_data)->required();
    train_cmd->add_option("--group", train_group);
    train_cmd->add_option("--r", r, "Latent dimension (default 4|G|)");
    train_cmd->add_option("--gamma", gamma);
    train_cmd->add_option("--lr", lr);
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch-size", batch);
    train_cmd->add_option("--hidden", hidden, "Comma separated hidden widths");
    train_cmd->add_option("--activation", activation);
    train_cmd->add_option("--operator-init", op_init);
    train_cmd->add_option("--val-fraction", val_fraction);
    train_cmd->add_option("--seed", train_seed);
    train_cmd->add_option("--out", train_out)->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run");
    std::string eval_run, eval_data, eval_out;
    int eval_cap = 1024;
    eval_cmd->add_option("--run", eval_run)->required();
    eval_cmd->add_option("--data", eval_data)->required();
    eval_cmd->add_option("--out", eval_out)->required();
    eval_cmd->add_option("--max-test", eval_cap);

    auto* infer_cmd = app.add_subcommand("infer", "Inference with a trained run");
    auto* regress_cmd = infer_cmd->add_subcommand("regress", "Conditional mean of y");
    auto* quantile_cmd = infer_cmd->add_subcommand("quantile", "Per-dimension conditional quantiles");
    std::string infer_run, x_file, infer_out, alphas = "0.05,0.95";
    int n_bins = 100;
    for (auto* c : {regress_cmd, quantile_cmd}) {
        c->add_option("--run", infer_run)->required();
        c->add_option("--x-file", x_file)->required();
        c->add_option("--out", infer_out)->required();
    }
    quantile_cmd->add_option("--alpha", alphas);
    quantile_cmd->add_option("--n-bins", n_bins);
    infer_cmd->require_subcommand(1);

    auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment config");
    std::string config_path, sweep_out;
    sweep_cmd->add_option("--config", config_path)->required();
    sweep_cmd->add_option("--out", sweep_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*inspect) {
            print_group(group_label);
        } else if (*generate) {
            const GroupPtr g = make_group(gen_group);
            Dataset d;
            json side = {{"group", g->label}, {"family", family}};
            if (family == "moons") {
                MoonsBenchmarkSpec ms;
                ms.beta = beta;
                d = sample_moons(ms, n, gen_seed);
                moons_rep_y(g);
                side["beta"] = beta;
            } else {
                const SymmetricGmmSpec spec = build_spec(g, px, qy, ng, spec_seed.value_or(gen_seed));
                d = sample(spec, n, gen_seed);
                side["n_g"] = ng;
                side["spec_seed"] = spec_seed.value_or(gen_seed);
            }
            write_dataset(gen_out, d, side);
            std::cout << "wrote " << d.size() << " rows to " << gen_out << "\n";
        } else if (*train_cmd) {
            DataContext dc = load_data(train_data);
            const GroupPtr g = make_group(train_group);
            if (g->order > 1 && g->label != dc.data_group->label)
                throw InvalidParameter("--group must be trivial or match the data group " + dc.data_group->label);
            const auto rx = g->order > 1 ? dc.rep_x : trivial_representation(g, dc.rep_x.dim);
            const auto ry = g->order > 1 ? dc.rep_y : trivial_representation(g, dc.rep_y.dim);
            ModelConfig mc;
            mc.r = r;
            mc.hidden = parse_int_list(hidden);
            mc.activation = parse_activation(activation);
            mc.operator_init = op_init;
            EncpModel model = make_model(g, rx, ry, mc, train_seed);
            TrainConfig tc{gamma, lr, batch, epochs, train_seed};
            Dataset train_set = dc.data;
            std::optional<Dataset> val;
            if (val_fraction > 0.0) {
                const int nv = static_cast<int>(val_fraction * dc.data.size());
                std::vector<int> ti, vi;
                for (int i = 0; i < dc.data.size(); ++i) (i < dc.data.size() - nv ? ti : vi).push_back(i);
                train_set = dc.data.rows(ti);
                val = dc.data.rows(vi);
            }
            const TrainHistory hist = train(model, train_set, tc, val ? &*val : nullptr);
            json args = {{"data", fs::absolute(train_data).string()}, {"group", g->label}, {"r", model.r()},
                         {"gamma", gamma}, {"lr", lr}, {"epochs", epochs}, {"batch_size", batch},
                         {"hidden", mc.hidden}, {"activation", activation}, {"operator_init", op_init},
                         {"val_fraction", val_fraction}, {"seed", train_seed}};
            const std::string digest = hex_digest(fnv1a64(args.dump()));
            fs::create_directories(train_out);
            save_model((fs::path(train_out) / "model.bin").string(), model, {{"config_digest", digest}});
            json hj = history_to_json(hist);
            hj["config_digest"] = digest;
            write_json((fs::path(train_out) / "history.json").string(), hj);
            json run = args;
            run["config_digest"] = digest;
            run["train_rows"] = train_set.size();
            write_json((fs::path(train_out) / "run.json").string(), run);
            std::cout << "initial loss " << hist.initial.total << ", final epoch loss "
                      << (hist.epochs.empty() ? hist.initial.total : hist.epochs.back().loss) << "\n";
        } else if (*eval_cmd) {
            RunContext rc = load_run(eval_run);
            DataContext test = load_data(eval_data);
            const int m = std::min(eval_cap, test.data.size());
            const Mat tx = test.data.x.topRows(m), ty = test.data.y.topRows(m);
            json report = {{"config_digest", rc.run.at("config_digest")}, {"n_test", m}};
            report["invariance_error"] = invariance_error(rc.model, tx, ty, test.rep_x, test.rep_y);
            if (test.spec) {
                report["pmd_mse"] = pmd_mse(*test.spec, rc.model, tx, ty);
                const Dataset fit = rc.data.data.head(rc.run.at("train_rows").get<int>());
                FittedOperator op = fit_statistics(rc.model, fit, rc.model_rep_x, rc.model_rep_y);
                register_observable(op, "y", ObservableSamples::equivariant(fit.y, rc.model_rep_y));
                Mat truth(m, ty.cols());
                for (int i = 0; i < m; ++i) truth.row(i) = conditional_mean(*test.spec, tx.row(i).transpose()).transpose();
                report["regression_mse"] = regression_mse(regress(op, "y", tx), truth);
            }
            write_json(eval_out, report);
            std::cout << report.dump(2) << "\n";
        } else if (*regress_cmd || *quantile_cmd) {
            RunContext rc = load_run(infer_run);
            const Dataset fit = rc.data.data.head(rc.run.at("train_rows").get<int>());
            FittedOperator op = fit_statistics(rc.model, fit, rc.model_rep_x, rc.model_rep_y);
            std::vector<std::string> header;
            const Mat probes = read_csv(x_file, &header);
            require_dims(probes.cols() == op.rep_x.dim, "probe file has the wrong number of x columns");
            std::vector<std::string> out_header;
            Mat out;
            if (*regress_cmd) {
                register_observable(op, "y", ObservableSamples::equivariant(fit.y, rc.model_rep_y));
                out = regress(op, "y", probes);
                for (int j = 0; j < out.cols(); ++j) out_header.push_back("z_" + std::to_string(j));
            } else {
                const auto as = parse_double_list(alphas);
                const int q = op.rep_y.dim;
                out.resize(probes.rows(), static_cast<Eigen::Index>(as.size()) * q);
                CcdfOptions co;
                co.n_bins = n_bins;
                int col = 0;
                int flagged = 0;
                for (int j = 0; j < q; ++j) {
                    const BinnedObservable bins = bin_observable(op, j, co);
                    for (double a : as) {
                        std::ostringstream name;
                        name << "y_" << j << "_q" << a;
                        out_header.push_back(name.str());
                        for (Eigen::Index i = 0; i < probes.rows(); ++i) {
                            const QuantileResult qr = quantile_from_cdf(ccdf(op, bins, probes.row(i).transpose()), bins.edges, a);
                            out(i, col) = qr.value;
                            flagged += qr.out_of_range;
                        }
                        ++col;
                    }
                }
                if (flagged) std::cerr << "warning: " << flagged << " quantiles fell outside the bin range\n";
            }
            write_csv(infer_out, out_header, out);
        } else if (*sweep_cmd) {
            const ExperimentConfig cfg = parse_config(read_json(config_path));
            const json report = run_experiment(cfg, sweep_out);
            std::cout << report["summary"].dump(2) << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
