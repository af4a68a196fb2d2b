#pragma once

#include "encp/io.hpp"

namespace encp {

struct DataConfig {
    std::string source = "gmm";  // gmm | moons | csv
    std::string group = "C2";    // symmetry of the data
    int p = 1, q = 1, n_g = 3;
    std::uint64_t spec_seed = 0;
    std::uint64_t seed = 0;      // sampling and split seed
    int n = 0;                   // pool size; 0 -> derived from the sweep sizes
    double beta = 1.0;
    std::string path;
};

struct EvaluationConfig {
    std::vector<std::string> metrics{"pmd_mse", "invariance_error", "regression_mse"};
    int test_size = 1024;
    double alpha = 0.1;  // intervals at 1 - alpha
    int n_bins = 100;
};

struct ExperimentConfig {
    std::string group = "C2";  // model symmetry; "trivial" gives the unconstrained baseline
    DataConfig data;
    ModelConfig model;
    double gamma = 1e-2;
    double lr = 1e-3;
    int batch_size = 256;
    int epochs = 100;
    std::vector<std::uint64_t> seeds{0};
    EvaluationConfig evaluation;
    std::vector<int> train_sizes;
};

/// Throws InvalidParameter naming the offending field path.
ExperimentConfig parse_config(const json& j);
json config_to_json(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);
std::string config_digest(const ExperimentConfig& cfg);

struct SplitData {
    Dataset train, validation, test;
};

struct DataBundle {
    SplitData split;
    GroupPtr data_group;
    GroupRepresentation rep_x, rep_y;
    std::optional<SymmetricGmmSpec> spec;
};

/// Generates or loads the pool and applies a seeded 70/15/15 split.
DataBundle prepare_data(const ExperimentConfig& cfg);

/// Runs every (train size, seed) job, writes report.json, sweep.csv, checkpoints
/// and histories under out_dir, and returns the report.
json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Copy of a report with timing fields removed.
json strip_timing(const json& report);

}  // namespace encp
