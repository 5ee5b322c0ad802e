// Command-line front end: generate, fit, replicate, analyze.
//
// Settings come from built-in defaults, then --config FILE, then the flags
// given on the command line (later wins).

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gemgmm/harness.hpp"
#include "gemgmm/io.hpp"

namespace {

using namespace gemgmm;
using harness::ExperimentConfig;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> algo;
    std::optional<std::string> beta;
    std::optional<double> tol;
    std::optional<int> max_iters;
    std::optional<std::string> out;
    bool plot = false;
    std::optional<std::string> inset;
    std::optional<std::string> data;
    bool data_header = false;
    std::optional<int> n_samples;
    std::optional<std::string> true_model;
    std::optional<std::string> init_params;
    std::optional<double> distance;
    std::optional<int> instances;
    bool same_seed = false;
    std::optional<int> threads;
    std::optional<std::string> params;
    std::optional<std::string> trace;
    std::optional<std::string> bounds;
    std::optional<double> fd_step;
};

std::vector<double> parse_csv_doubles(const std::string& text, const char* flag) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            values.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw GmmError(ErrorKind::InvalidArgument, std::string(flag) + ": not a number: '" + cell + "'");
        }
    }
    return values;
}

ExperimentConfig build_config(const Flags& f) {
    ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : harness::load_config(f.config);
    if (f.true_model) cfg.true_model = io::read_params(*f.true_model);
    if (f.data) cfg.data_path = *f.data;
    if (f.data_header) cfg.data_header = true;
    if (f.n_samples) cfg.n_samples = *f.n_samples;
    if (f.init_params) {
        cfg.init.kind = harness::InitSpec::Kind::Explicit;
        cfg.init.params = io::read_params(*f.init_params);
    }
    if (f.distance) {
        cfg.init.kind = harness::InitSpec::Kind::OrthogonalLine;
        cfg.init.distance = *f.distance;
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.algo) cfg.algorithm = parse_algorithm_kind(*f.algo);
    if (f.beta) cfg.beta = parse_csv_doubles(*f.beta, "--beta");
    if (f.tol) cfg.stop.rel_ll_tol = *f.tol;
    if (f.max_iters) cfg.stop.max_iters = *f.max_iters;
    if (f.out) cfg.out_dir = *f.out;
    if (f.plot) cfg.plot = true;
    if (f.inset) {
        const auto colon = f.inset->find(':');
        if (colon == std::string::npos) throw GmmError(ErrorKind::InvalidArgument, "--inset expects A:B");
        try {
            cfg.inset = std::make_pair(std::stoi(f.inset->substr(0, colon)), std::stoi(f.inset->substr(colon + 1)));
        } catch (const std::exception&) {
            throw GmmError(ErrorKind::InvalidArgument, "--inset expects A:B");
        }
    }
    if (f.instances) cfg.instances = *f.instances;
    if (f.same_seed) cfg.vary_seed = false;
    if (f.threads) cfg.threads = *f.threads;
    if (f.params) cfg.fitted_params = *f.params;
    if (f.trace) cfg.trace_path = *f.trace;
    if (f.bounds) {
        const auto b = parse_csv_doubles(*f.bounds, "--bounds");
        if (b.size() != 2) throw GmmError(ErrorKind::InvalidArgument, "--bounds expects m,L");
        cfg.sector_bounds = std::make_pair(b[0], b[1]);
    }
    if (f.fd_step) cfg.fd_step = *f.fd_step;
    harness::validate_config(cfg);
    return cfg;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--seed", f.seed, "Base random seed");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--true-model", f.true_model, "Ground-truth parameter JSON");
    cmd->add_option("--n-samples", f.n_samples, "Samples to draw when no dataset is given");
}

void add_fitting(CLI::App* cmd, Flags& f) {
    cmd->add_option("--algo", f.algo, "em | shifted-em | pb-gem | w-pb-gem");
    cmd->add_option("--beta", f.beta, "Comma-separated per-component mean weights for w-pb-gem");
    cmd->add_option("--tol", f.tol, "Relative log-likelihood change tolerance (default 1e-10)");
    cmd->add_option("--max-iters", f.max_iters, "Iteration cap (default 10000)");
    cmd->add_flag("--plot", f.plot, "Write SVG plots");
    cmd->add_option("--inset", f.inset, "Inset iteration window A:B");
    cmd->add_option("--data", f.data, "Dataset CSV (sampled from the true model if omitted)");
    cmd->add_flag("--data-header", f.data_header, "Dataset CSV has a header line");
    cmd->add_option("--init", f.init_params, "Explicit initial parameter JSON");
    cmd->add_option("--distance", f.distance, "Orthogonal-line init distance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generalized EM for Gaussian mixtures: fitting and convergence analysis"};
    app.require_subcommand(1);
    Flags flags;

    auto* generate = app.add_subcommand("generate", "Sample a dataset from the true model");
    add_common(generate, flags);

    auto* fit = app.add_subcommand("fit", "Run one algorithm and write trace, summary and plot");
    add_common(fit, flags);
    add_fitting(fit, flags);

    auto* rep = app.add_subcommand("replicate", "Compare pb-gem and w-pb-gem over many seeded instances");
    add_common(rep, flags);
    add_fitting(rep, flags);
    rep->add_option("--instances", flags.instances, "Number of instances (default 30)");
    rep->add_flag("--same-seed", flags.same_seed, "Use the base seed for every instance");
    rep->add_option("--threads", flags.threads, "Worker threads (default: hardware)");

    auto* analyze = app.add_subcommand("analyze", "Rate bounds and update-map Jacobian at fitted parameters");
    add_common(analyze, flags);
    add_fitting(analyze, flags);
    analyze->add_option("--params", flags.params, "Fitted parameter JSON");
    analyze->add_option("--trace", flags.trace, "Trace CSV for the empirical contraction factor");
    analyze->add_option("--bounds", flags.bounds, "Sector bounds m,L");
    analyze->add_option("--fd-step", flags.fd_step, "Finite-difference step (default 1e-6)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : harness::kConfigError;
    }

    try {
        const ExperimentConfig cfg = build_config(flags);
        if (*generate) return harness::cmd_generate(cfg, std::cout);
        if (*fit) return harness::cmd_fit(cfg, std::cout);
        if (*rep) return harness::cmd_replicate(cfg, std::cout);
        if (*analyze) return harness::cmd_analyze(cfg, std::cout);
    } catch (const GmmError& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return harness::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return harness::kConfigError;
    }
    return harness::kConfigError;
}
