#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gemgmm/analysis.hpp"
#include "gemgmm/dynamics.hpp"
#include "gemgmm/gmm.hpp"

namespace gemgmm::harness {

/// Process exit codes.
enum ExitCode : int {
    kSuccess = 0,
    kConfigError = 2,
    kNumericalFailure = 3,
    kNotConverged = 4,
};

/// Two-component model with means +-(1, 1), identity covariances and equal
/// weights; the default ground truth.
GmmParams symmetric_two_component_model();

struct InitSpec {
    enum class Kind { OrthogonalLine, Explicit };
    Kind kind = Kind::OrthogonalLine;
    /// Means start at +-distance * v with v a unit vector orthogonal to
    /// mu_1* - mu_2*. The default puts them at (-3, 3) and (3, -3) for the
    /// default model.
    double distance = 3.0 * 1.4142135623730951;
    std::optional<GmmParams> params;  // Kind::Explicit
};

/// Everything a subcommand needs. Built from defaults, then an optional JSON
/// config document, then command-line overrides (later wins).
///
/// JSON fields (all optional):
///   true_model        parameter object (see io::params_to_json)
///   true_model_path   path to a parameter file; ignored when true_model is set
///   data, data_header dataset CSV for fit/analyze and whether it has a header line
///   n_samples         samples drawn when no dataset is given (default 1000)
///   init              {"type": "orthogonal_line", "distance": d}
///                     or {"type": "explicit", "params": {...} | "path": "..."}
///   algorithm         "em" | "shifted-em" | "pb-gem" | "w-pb-gem" (default pb-gem)
///   beta              [beta_1, ..., beta_K] for w-pb-gem (default all 0.996)
///   tol, max_iters, snapshot_stride
///   seed              base seed (default 7)
///   out               output directory (default ".")
///   plot, inset       write SVG plots; inset window [first, last]
///   instances, vary_seed, threads    replicate options
///   fitted_params, trace, fd_step, sector_bounds {"m": .., "L": ..}, rate_grid_step
///                     analyze options
/// Relative paths inside a config file resolve against the file's directory.
struct ExperimentConfig {
    std::optional<GmmParams> true_model;
    std::optional<std::filesystem::path> data_path;
    bool data_header = false;
    int n_samples = 1000;
    InitSpec init;
    AlgorithmKind algorithm = AlgorithmKind::PbGem;
    std::optional<std::vector<double>> beta;
    StopCriteria stop;
    std::uint64_t seed = 7;
    std::filesystem::path out_dir = ".";
    bool plot = false;
    std::optional<std::pair<int, int>> inset;

    int instances = 30;
    bool vary_seed = true;
    int threads = 0;  // 0: hardware concurrency

    std::optional<std::filesystem::path> fitted_params;
    std::optional<std::filesystem::path> trace_path;
    double fd_step = 1e-6;
    std::optional<std::pair<double, double>> sector_bounds;
    double rate_grid_step = 1e-3;

    GmmParams truth() const;
    /// Weight design for w-pb-gem; betas default to 0.996 per component.
    WeightDesign design(int K) const;
    Algorithm algorithm_for(AlgorithmKind kind, int K) const;
};

/// Applies a JSON config document on top of `base`.
ExperimentConfig apply_config_json(ExperimentConfig base, const nlohmann::json& doc,
                                   const std::filesystem::path& base_dir = {});
/// Range checks on every field; throws InvalidArgument.
void validate_config(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Initial parameters for the chosen init spec.
GmmParams initial_params(const ExperimentConfig& config, int K, int m);

/// Dataset from config.data_path, or sampled from the truth with `seed`.
Dataset load_or_sample(const ExperimentConfig& config, std::uint64_t seed);

struct FitOutcome {
    std::optional<RunTrace> trace;  // partial when the run failed
    std::optional<GmmError> error;
    bool converged() const { return trace && !error && trace->reason == TerminationReason::Tolerance; }
};

FitOutcome fit(const GmmParams& init, const Dataset& data, const Algorithm& algorithm, const StopCriteria& stop);

struct InstanceResult {
    std::uint64_t seed = 0;
    FitOutcome pb;
    FitOutcome wpb;
};

struct ReplicationReport {
    std::vector<InstanceResult> instances;
    /// Rows 1..max iterations; runs shorter than the longest are carried at
    /// their terminal value.
    std::vector<double> mean_negll_pb, std_negll_pb, mean_negll_wpb, std_negll_wpb;
    int failures_pb = 0;
    int failures_wpb = 0;
    double mean_iters_pb = 0.0;
    double mean_iters_wpb = 0.0;

    bool wpb_faster() const { return mean_iters_wpb < mean_iters_pb; }
};

/// Runs PB-GEM and W-PB-GEM from the same initial point on `instances`
/// datasets (seed + i, or seed for every instance when vary_seed is false).
/// Instances run in parallel; results are ordered by instance.
ReplicationReport replicate(const ExperimentConfig& config);

// Subcommands. Each writes its files under config.out_dir, logs a short
// summary to `log` and returns an ExitCode.
int cmd_generate(const ExperimentConfig& config, std::ostream& log);
int cmd_fit(const ExperimentConfig& config, std::ostream& log);
int cmd_replicate(const ExperimentConfig& config, std::ostream& log);
int cmd_analyze(const ExperimentConfig& config, std::ostream& log);

/// Maps an error to its exit code.
int exit_code_for(const GmmError& error);

}  // namespace gemgmm::harness
