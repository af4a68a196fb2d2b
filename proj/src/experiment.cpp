#include "encp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>

namespace encp {

namespace fs = std::filesystem;

namespace {

// Small schema reader: every access names its full field path so errors point
// at the offending entry.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        const std::string p = full(key);
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) fail(p, "expected a string");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) fail(p, "expected a number");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) fail(p, "expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.get<std::int64_t>() < 0) fail(p, "expected a non-negative integer");
            } else {
                if (!v.is_array()) fail(p, "expected an array");
                for (const auto& e : v)
                    if constexpr (std::is_same_v<typename T::value_type, std::string>) {
                        if (!e.is_string()) fail(p, "expected an array of strings");
                    } else if (!e.is_number_integer()) {
                        fail(p, "expected an array of integers");
                    }
            }
            out = v.get<T>();
        } catch (const json::exception& e) {
            fail(p, e.what());
        }
    }

    Reader child(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Reader(j_.contains(key) ? j_.at(key) : empty, full(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(full(k.c_str()), "unknown field");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& what) {
        throw InvalidParameter("config field '" + path + "': " + what);
    }

private:
    std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool wants(const ExperimentConfig& cfg, const std::string& metric) {
    return std::find(cfg.evaluation.metrics.begin(), cfg.evaluation.metrics.end(), metric) !=
           cfg.evaluation.metrics.end();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Reader root(j, "");
    root.get("group", c.group);
    {
        Reader d = root.child("data");
        d.get("source", c.data.source);
        d.get("group", c.data.group);
        d.get("p", c.data.p);
        d.get("q", c.data.q);
        d.get("n_g", c.data.n_g);
        d.get("spec_seed", c.data.spec_seed);
        d.get("seed", c.data.seed);
        d.get("n", c.data.n);
        d.get("beta", c.data.beta);
        d.get("path", c.data.path);
        d.finish();
    }
    {
        Reader m = root.child("model");
        m.get("r", c.model.r);
        m.get("gamma", c.gamma);
        m.get("hidden", c.model.hidden);
        std::string act = activation_name(c.model.activation);
        m.get("activation", act);
        try {
            c.model.activation = parse_activation(act);
        } catch (const InvalidParameter& e) {
            Reader::fail("model.activation", e.what());
        }
        m.get("operator_init", c.model.operator_init);
        m.finish();
    }
    {
        Reader t = root.child("training");
        t.get("lr", c.lr);
        t.get("batch_size", c.batch_size);
        t.get("epochs", c.epochs);
        t.get("seeds", c.seeds);
        t.finish();
    }
    {
        Reader e = root.child("evaluation");
        e.get("metrics", c.evaluation.metrics);
        e.get("test_size", c.evaluation.test_size);
        e.get("alpha", c.evaluation.alpha);
        e.get("n_bins", c.evaluation.n_bins);
        e.finish();
    }
    {
        Reader s = root.child("sweep");
        s.get("train_sizes", c.train_sizes);
        s.finish();
    }
    root.finish();
    validate_config(c);
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    return {{"group", c.group},
            {"data",
             {{"source", c.data.source},
              {"group", c.data.group},
              {"p", c.data.p},
              {"q", c.data.q},
              {"n_g", c.data.n_g},
              {"spec_seed", c.data.spec_seed},
              {"seed", c.data.seed},
              {"n", c.data.n},
              {"beta", c.data.beta},
              {"path", c.data.path}}},
            {"model",
             {{"r", c.model.r},
              {"gamma", c.gamma},
              {"hidden", c.model.hidden},
              {"activation", activation_name(c.model.activation)},
              {"operator_init", c.model.operator_init}}},
            {"training", {{"lr", c.lr}, {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"seeds", c.seeds}}},
            {"evaluation",
             {{"metrics", c.evaluation.metrics},
              {"test_size", c.evaluation.test_size},
              {"alpha", c.evaluation.alpha},
              {"n_bins", c.evaluation.n_bins}}},
            {"sweep", {{"train_sizes", c.train_sizes}}}};
}

void validate_config(const ExperimentConfig& c) {
    GroupPtr g, dg;
    try {
        g = make_group(c.group);
    } catch (const Error& e) {
        Reader::fail("group", e.what());
    }
    try {
        dg = make_group(c.data.group);
    } catch (const Error& e) {
        Reader::fail("data.group", e.what());
    }
    if (g->order != 1 && g->label != dg->label)
        Reader::fail("group", "model group must be trivial or equal to data.group (" + dg->label + ")");
    if (c.data.source != "gmm" && c.data.source != "moons" && c.data.source != "csv")
        Reader::fail("data.source", "expected gmm, moons or csv");
    if (c.data.source == "csv" && c.data.path.empty()) Reader::fail("data.path", "required when data.source is csv");
    if (c.data.p < 1) Reader::fail("data.p", "must be >= 1");
    if (c.data.q < 1) Reader::fail("data.q", "must be >= 1");
    if (c.data.n_g < 1) Reader::fail("data.n_g", "must be >= 1");
    if (c.data.n < 0) Reader::fail("data.n", "must be >= 0");
    if (!(c.data.beta > 0.0)) Reader::fail("data.beta", "must be > 0");
    if (c.model.r < 0 || (c.model.r > 0 && c.model.r % g->order != 0))
        Reader::fail("model.r", "must be a positive multiple of |G| = " + std::to_string(g->order));
    if (c.gamma < 0.0) Reader::fail("model.gamma", "must be >= 0");
    for (int h : c.model.hidden)
        if (h < 1) Reader::fail("model.hidden", "widths must be >= 1");
    if (!(c.lr > 0.0)) Reader::fail("training.lr", "must be > 0");
    if (c.batch_size < 4) Reader::fail("training.batch_size", "must be >= 4");
    if (c.epochs < 0) Reader::fail("training.epochs", "must be >= 0");
    if (c.seeds.empty()) Reader::fail("training.seeds", "at least one seed is required");
    static const std::set<std::string> known{"pmd_mse", "invariance_error", "regression_mse", "coverage"};
    for (const auto& m : c.evaluation.metrics)
        if (!known.count(m)) Reader::fail("evaluation.metrics", "unknown metric '" + m + "'");
    if (c.data.source != "gmm")
        for (const auto& m : c.evaluation.metrics)
            if (m == "pmd_mse" || m == "regression_mse")
                Reader::fail("evaluation.metrics", "'" + m + "' needs the analytic gmm source");
    if (c.evaluation.test_size < 1) Reader::fail("evaluation.test_size", "must be >= 1");
    if (!(c.evaluation.alpha > 0.0 && c.evaluation.alpha < 1.0)) Reader::fail("evaluation.alpha", "must lie in (0, 1)");
    if (c.evaluation.n_bins < 2) Reader::fail("evaluation.n_bins", "must be >= 2");
    for (int s : c.train_sizes)
        if (s < 4) Reader::fail("sweep.train_sizes", "sizes must be >= 4");
}

std::string config_digest(const ExperimentConfig& cfg) { return hex_digest(fnv1a64(config_to_json(cfg).dump())); }

DataBundle prepare_data(const ExperimentConfig& cfg) {
    DataBundle b;
    b.data_group = make_group(cfg.data.group);
    Dataset pool;
    int n = cfg.data.n;
    if (n == 0) {
        const int largest = cfg.train_sizes.empty() ? 8192 : *std::max_element(cfg.train_sizes.begin(), cfg.train_sizes.end());
        n = static_cast<int>(std::ceil(largest / 0.7)) + 1;
    }
    if (cfg.data.source == "gmm") {
        b.rep_x = default_data_representation(b.data_group, cfg.data.p);
        b.rep_y = default_data_representation(b.data_group, cfg.data.q);
        b.spec = build_spec(b.data_group, b.rep_x, b.rep_y, cfg.data.n_g, cfg.data.spec_seed);
        pool = sample(*b.spec, n, cfg.data.seed);
    } else if (cfg.data.source == "moons") {
        b.rep_x = moons_rep_x(b.data_group);
        b.rep_y = moons_rep_y(b.data_group);
        MoonsBenchmarkSpec ms;
        ms.beta = cfg.data.beta;
        pool = sample_moons(ms, n, cfg.data.seed);
    } else {
        pool = read_dataset(cfg.data.path);
        b.rep_x = default_data_representation(b.data_group, static_cast<int>(pool.x.cols()));
        b.rep_y = default_data_representation(b.data_group, static_cast<int>(pool.y.cols()));
    }
    const int total = pool.size();
    std::vector<int> perm(total);
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_stream(cfg.data.seed, "split");
    std::shuffle(perm.begin(), perm.end(), rng);
    const int n_train = static_cast<int>(std::floor(0.7 * total));
    const int n_val = static_cast<int>(std::floor(0.15 * total));
    b.split.train = pool.rows(std::vector<int>(perm.begin(), perm.begin() + n_train));
    b.split.validation = pool.rows(std::vector<int>(perm.begin() + n_train, perm.begin() + n_train + n_val));
    b.split.test = pool.rows(std::vector<int>(perm.begin() + n_train + n_val, perm.end()));
    if (b.split.validation.size() < 4 || b.split.test.size() < 1)
        throw InvalidParameter("data pool of " + std::to_string(total) + " rows is too small for a 70/15/15 split");
    for (int s : cfg.train_sizes)
        if (s > b.split.train.size())
            throw InvalidParameter("sweep size " + std::to_string(s) + " exceeds the training split (" +
                                   std::to_string(b.split.train.size()) + " rows)");
    return b;
}

json strip_timing(const json& report) {
    json out = report;
    std::function<void(json&)> strip = [&](json& j) {
        if (j.is_object()) {
            j.erase("timing");
            for (auto& [k, v] : j.items()) strip(v);
        } else if (j.is_array()) {
            for (auto& v : j) strip(v);
        }
    };
    strip(out);
    return out;
}

json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    const std::string digest = config_digest(cfg);
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    const DataBundle data = prepare_data(cfg);
    const GroupPtr group = make_group(cfg.group);
    const bool symmetric = group->order > 1;
    const GroupRepresentation model_rep_x = symmetric ? data.rep_x : trivial_representation(group, data.rep_x.dim);
    const GroupRepresentation model_rep_y = symmetric ? data.rep_y : trivial_representation(group, data.rep_y.dim);

    const int test_n = std::min(cfg.evaluation.test_size, data.split.test.size());
    const Dataset test = data.split.test.head(test_n);
    Mat true_mean;
    if (data.spec && wants(cfg, "regression_mse")) {
        true_mean.resize(test_n, data.rep_y.dim);
        for (int i = 0; i < test_n; ++i) true_mean.row(i) = conditional_mean(*data.spec, test.x.row(i).transpose()).transpose();
    }

    std::vector<int> sizes = cfg.train_sizes;
    if (sizes.empty()) sizes.push_back(data.split.train.size());
    const bool log = std::getenv("ENCP_LOG") && std::string(std::getenv("ENCP_LOG")) != "0";

    json runs = json::array();
    std::ofstream csv(fs::path(out_dir) / "sweep.csv");
    csv << "# config_digest=" << digest << "\n";
    csv << "n_train,seed,status,best_epoch,pmd_mse,invariance_error,regression_mse,coverage,relaxed_coverage,mean_set_size\n";

    for (int size : sizes) {
        const Dataset train_set = data.split.train.head(size);
        for (std::uint64_t seed : cfg.seeds) {
            json run = {{"n_train", size}, {"seed", seed}};
            const auto t0 = std::chrono::steady_clock::now();
            try {
                EncpModel model = make_model(group, model_rep_x, model_rep_y, cfg.model, seed);
                TrainConfig tc;
                tc.gamma = cfg.gamma;
                tc.lr = cfg.lr;
                tc.batch_size = cfg.batch_size;
                tc.epochs = cfg.epochs;
                tc.seed = seed;
                const TrainHistory hist = train(model, train_set, tc, &data.split.validation);
                const auto t1 = std::chrono::steady_clock::now();
                const std::string tag = "n" + std::to_string(size) + "_s" + std::to_string(seed);
                save_model((fs::path(out_dir) / "checkpoints" / (tag + ".bin")).string(), model,
                           {{"config_digest", digest}, {"n_train", size}, {"seed", seed}});
                json hj = history_to_json(hist);
                hj["config_digest"] = digest;
                write_json((fs::path(out_dir) / "checkpoints" / (tag + "_history.json")).string(), hj);

                json metrics = json::object();
                if (wants(cfg, "pmd_mse") && data.spec)
                    metrics["pmd_mse"] = pmd_mse(*data.spec, model, test.x, test.y);
                if (wants(cfg, "invariance_error"))
                    metrics["invariance_error"] = invariance_error(model, test.x, test.y, data.rep_x, data.rep_y);
                const bool need_fit = wants(cfg, "regression_mse") || wants(cfg, "coverage");
                if (need_fit) {
                    FittedOperator op = fit_statistics(model, train_set, model_rep_x, model_rep_y);
                    if (wants(cfg, "regression_mse") && data.spec) {
                        register_observable(op, "y", ObservableSamples::equivariant(train_set.y, model_rep_y));
                        metrics["regression_mse"] = regression_mse(regress(op, "y", test.x), true_mean);
                    }
                    if (wants(cfg, "coverage")) {
                        const int q = data.rep_y.dim;
                        Mat lo(test_n, q), hi(test_n, q);
                        CcdfOptions co;
                        co.n_bins = cfg.evaluation.n_bins;
                        int out_of_range = 0;
                        for (int j = 0; j < q; ++j) {
                            const BinnedObservable bins = bin_observable(op, j, co);
                            for (int i = 0; i < test_n; ++i) {
                                const Vec f = ccdf(op, bins, test.x.row(i).transpose());
                                const QuantileResult a = quantile_from_cdf(f, bins.edges, cfg.evaluation.alpha / 2);
                                const QuantileResult b = quantile_from_cdf(f, bins.edges, 1.0 - cfg.evaluation.alpha / 2);
                                lo(i, j) = a.value;
                                hi(i, j) = b.value;
                                out_of_range += a.out_of_range + b.out_of_range;
                            }
                        }
                        json cov = coverage_to_json(coverage_metrics(lo, hi, test.y));
                        cov["out_of_range"] = out_of_range;
                        metrics["coverage"] = cov;
                    }
                }
                run["status"] = "ok";
                run["best_epoch"] = hist.best_epoch;
                run["best_val_loss"] = hist.best_epoch >= 0 ? *hist.epochs[hist.best_epoch].val_loss : std::nan("");
                run["metrics"] = metrics;
                run["timing"] = {{"train_seconds", std::chrono::duration<double>(t1 - t0).count()},
                                 {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
            } catch (const TrainingError& e) {
                run["status"] = "failed";
                run["error"] = e.what();
            }
            if (log) std::cerr << "[encp] n_train=" << size << " seed=" << seed << " " << run.dump() << "\n";
            const json& m = run.contains("metrics") ? run["metrics"] : json::object();
            auto num = [&](const char* k) { return m.contains(k) ? fmt(m[k].get<double>()) : std::string(); };
            auto cov = [&](const char* k) {
                return m.contains("coverage") ? fmt(m["coverage"][k].get<double>()) : std::string();
            };
            csv << size << ',' << seed << ',' << run["status"].get<std::string>() << ','
                << run.value("best_epoch", -1) << ',' << num("pmd_mse") << ',' << num("invariance_error") << ','
                << num("regression_mse") << ',' << cov("coverage") << ',' << cov("relaxed_coverage") << ','
                << cov("mean_set_size") << '\n';
            runs.push_back(run);
        }
    }

    json summary = json::array();
    for (int size : sizes) {
        json row = {{"n_train", size}};
        for (const char* key : {"pmd_mse", "invariance_error", "regression_mse"}) {
            std::vector<double> vals;
            for (const auto& r : runs)
                if (r["n_train"] == size && r["status"] == "ok" && r["metrics"].contains(key))
                    vals.push_back(r["metrics"][key].get<double>());
            if (!vals.empty()) row[std::string("median_") + key] = median(vals);
        }
        std::vector<double> cov;
        for (const auto& r : runs)
            if (r["n_train"] == size && r["status"] == "ok" && r["metrics"].contains("coverage"))
                cov.push_back(r["metrics"]["coverage"]["coverage"].get<double>());
        if (!cov.empty()) row["median_coverage"] = median(cov);
        summary.push_back(row);
    }

    json report = {{"config", config_to_json(cfg)},
                   {"config_digest", digest},
                   {"splits",
                    {{"train", data.split.train.size()},
                     {"validation", data.split.validation.size()},
                     {"test", data.split.test.size()},
                     {"test_used", test_n}}},
                   {"runs", runs},
                   {"summary", summary}};
    write_json((fs::path(out_dir) / "report.json").string(), report);
    return report;
}

}  // namespace encp
