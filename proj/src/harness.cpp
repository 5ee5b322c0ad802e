#include "gemgmm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "gemgmm/io.hpp"

namespace gemgmm::harness {

namespace fs = std::filesystem;

namespace {

GmmError config_error(const std::string& what) { return GmmError(ErrorKind::InvalidArgument, "config: " + what); }

fs::path resolve(const fs::path& base_dir, const std::string& value) {
    fs::path p(value);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
}

Vector orthogonal_direction(const Vector& delta) {
    const auto m = delta.size();
    if (m < 2) throw config_error("orthogonal-line init needs data dimension >= 2");
    if (delta.norm() == 0.0) throw config_error("orthogonal-line init needs distinct true means");
    Vector v;
    if (m == 2) {
        v = Vector(2);
        v << -delta(1), delta(0);
    } else {
        Eigen::Index k = 0;
        delta.cwiseAbs().minCoeff(&k);
        const Vector unit = delta.normalized();
        v = Vector::Unit(m, k) - unit(k) * unit;
    }
    return v.normalized();
}

std::vector<double> iteration_negll(const FitOutcome& outcome, int rows) {
    std::vector<double> out(rows, 0.0);
    const auto& recs = outcome.trace->records;
    double last = -outcome.trace->initial_log_likelihood;
    for (int r = 0; r < rows; ++r) {
        if (r < static_cast<int>(recs.size())) last = -recs[r].log_likelihood;
        out[r] = last;
    }
    return out;
}

void aggregate(const std::vector<const FitOutcome*>& runs, int rows, std::vector<double>& mean,
               std::vector<double>& stddev) {
    mean.assign(rows, 0.0);
    stddev.assign(rows, 0.0);
    if (runs.empty()) return;
    std::vector<std::vector<double>> series;
    for (const FitOutcome* run : runs) series.push_back(iteration_negll(*run, rows));
    const double n = static_cast<double>(series.size());
    for (int r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (const auto& s : series) sum += s[r];
        mean[r] = sum / n;
        double sq = 0.0;
        for (const auto& s : series) sq += (s[r] - mean[r]) * (s[r] - mean[r]);
        stddev[r] = series.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    }
}

nlohmann::json iteration_stats(const std::vector<int>& iters) {
    nlohmann::json j;
    j["count"] = iters.size();
    if (iters.empty()) return j;
    double sum = 0.0;
    for (int it : iters) sum += it;
    const double mean = sum / static_cast<double>(iters.size());
    double sq = 0.0;
    for (int it : iters) sq += (it - mean) * (it - mean);
    j["mean"] = mean;
    j["std"] = iters.size() > 1 ? std::sqrt(sq / static_cast<double>(iters.size() - 1)) : 0.0;
    j["min"] = *std::min_element(iters.begin(), iters.end());
    j["max"] = *std::max_element(iters.begin(), iters.end());
    j["per_instance"] = iters;
    return j;
}

void write_run_outputs(const ExperimentConfig& config, const RunTrace& trace, const std::string& algorithm,
                       const std::optional<GmmError>& error) {
    io::write_trace_csv(config.out_dir / "trace.csv", trace);
    nlohmann::json summary = io::summary_json(trace, algorithm);
    if (error) {
        summary["termination_reason"] = "error";
        summary["error"] = {{"kind", to_string(error->kind())}, {"message", error->what()}};
        if (error->index()) summary["error"]["iteration"] = *error->index();
    }
    summary["note"] =
        "datasets are seeded draws; iteration counts depend on the draw and are not comparable pointwise "
        "to other samplers";
    io::write_json(config.out_dir / "summary.json", summary);
    if (config.plot) {
        io::PlotSeries s{algorithm + " negative log-likelihood", {-trace.initial_log_likelihood}};
        for (const auto& r : trace.records) s.values.push_back(-r.log_likelihood);
        io::write_text(config.out_dir / "plot.svg",
                       io::render_svg("negative log-likelihood vs iteration", {s}, config.inset));
    }
}

}  // namespace

GmmParams symmetric_two_component_model() {
    Vector alpha(2);
    alpha << 0.5, 0.5;
    Vector mu1(2), mu2(2);
    mu1 << 1.0, 1.0;
    mu2 << -1.0, -1.0;
    return GmmParams(alpha, {mu1, mu2}, {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
}

GmmParams ExperimentConfig::truth() const { return true_model ? *true_model : symmetric_two_component_model(); }

WeightDesign ExperimentConfig::design(int K) const {
    if (!beta) return WeightDesign(Vector::Constant(K, 0.996));
    if (static_cast<int>(beta->size()) != K) {
        throw config_error("beta has " + std::to_string(beta->size()) + " entries, model has K = " + std::to_string(K));
    }
    return WeightDesign(Eigen::Map<const Vector>(beta->data(), K));
}

Algorithm ExperimentConfig::algorithm_for(AlgorithmKind kind, int K) const {
    if (kind == AlgorithmKind::WPbGem) return Algorithm::w_pb_gem(design(K));
    return {kind, std::nullopt};
}

ExperimentConfig apply_config_json(ExperimentConfig cfg, const nlohmann::json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw config_error("expected a JSON object");
    try {
        if (doc.contains("true_model")) {
            cfg.true_model = io::params_from_json(doc.at("true_model"));
        } else if (doc.contains("true_model_path")) {
            cfg.true_model = io::read_params(resolve(base_dir, doc.at("true_model_path").get<std::string>()));
        }
        if (doc.contains("data")) cfg.data_path = resolve(base_dir, doc.at("data").get<std::string>());
        if (doc.contains("data_header")) cfg.data_header = doc.at("data_header").get<bool>();
        if (doc.contains("n_samples")) cfg.n_samples = doc.at("n_samples").get<int>();
        if (doc.contains("init")) {
            const auto& init = doc.at("init");
            const auto type = init.value("type", std::string("orthogonal_line"));
            if (type == "orthogonal_line") {
                cfg.init.kind = InitSpec::Kind::OrthogonalLine;
                if (init.contains("distance")) cfg.init.distance = init.at("distance").get<double>();
            } else if (type == "explicit") {
                cfg.init.kind = InitSpec::Kind::Explicit;
                if (init.contains("params")) {
                    cfg.init.params = io::params_from_json(init.at("params"));
                } else if (init.contains("path")) {
                    cfg.init.params = io::read_params(resolve(base_dir, init.at("path").get<std::string>()));
                } else {
                    throw config_error("explicit init needs 'params' or 'path'");
                }
            } else {
                throw config_error("unknown init type '" + type + "'");
            }
        }
        if (doc.contains("algorithm")) cfg.algorithm = parse_algorithm_kind(doc.at("algorithm").get<std::string>());
        if (doc.contains("beta")) cfg.beta = doc.at("beta").get<std::vector<double>>();
        if (doc.contains("tol")) cfg.stop.rel_ll_tol = doc.at("tol").get<double>();
        if (doc.contains("max_iters")) cfg.stop.max_iters = doc.at("max_iters").get<int>();
        if (doc.contains("snapshot_stride")) cfg.stop.snapshot_stride = doc.at("snapshot_stride").get<int>();
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("out")) cfg.out_dir = resolve(base_dir, doc.at("out").get<std::string>());
        if (doc.contains("plot")) cfg.plot = doc.at("plot").get<bool>();
        if (doc.contains("inset")) {
            const auto window = doc.at("inset").get<std::vector<int>>();
            if (window.size() != 2) throw config_error("inset must be [first, last]");
            cfg.inset = std::make_pair(window[0], window[1]);
        }
        if (doc.contains("instances")) cfg.instances = doc.at("instances").get<int>();
        if (doc.contains("vary_seed")) cfg.vary_seed = doc.at("vary_seed").get<bool>();
        if (doc.contains("threads")) cfg.threads = doc.at("threads").get<int>();
        if (doc.contains("fitted_params")) {
            cfg.fitted_params = resolve(base_dir, doc.at("fitted_params").get<std::string>());
        }
        if (doc.contains("trace")) cfg.trace_path = resolve(base_dir, doc.at("trace").get<std::string>());
        if (doc.contains("fd_step")) cfg.fd_step = doc.at("fd_step").get<double>();
        if (doc.contains("sector_bounds")) {
            const auto& b = doc.at("sector_bounds");
            cfg.sector_bounds = std::make_pair(b.at("m").get<double>(), b.at("L").get<double>());
        }
        if (doc.contains("rate_grid_step")) cfg.rate_grid_step = doc.at("rate_grid_step").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(e.what());
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    if (!(cfg.stop.rel_ll_tol > 0.0)) throw config_error("tol must be positive");
    if (cfg.stop.max_iters < 1) throw config_error("max_iters must be at least 1");
    if (cfg.stop.snapshot_stride < 0) throw config_error("snapshot_stride must be non-negative");
    if (cfg.n_samples < 1) throw config_error("n_samples must be at least 1");
    if (cfg.instances < 1) throw config_error("instances must be at least 1");
    if (cfg.threads < 0) throw config_error("threads must be non-negative");
    if (!(cfg.fd_step > 0.0)) throw config_error("fd_step must be positive");
    if (!(cfg.rate_grid_step > 0.0 && cfg.rate_grid_step < 1.0)) throw config_error("rate_grid_step must lie in (0, 1)");
    if (!(cfg.init.distance > 0.0) || !std::isfinite(cfg.init.distance)) {
        throw config_error("init distance must be positive");
    }
    if (cfg.beta) {
        for (double b : *cfg.beta) {
            if (!(b > 0.0) || !std::isfinite(b)) throw config_error("beta values must be positive");
        }
    }
    if (cfg.inset && (cfg.inset->first < 0 || cfg.inset->second <= cfg.inset->first)) {
        throw config_error("inset must satisfy 0 <= first < last");
    }
}

ExperimentConfig load_config(const fs::path& path) {
    return apply_config_json(ExperimentConfig{}, io::read_json(path), path.parent_path());
}

GmmParams initial_params(const ExperimentConfig& config, int K, int m) {
    if (config.init.kind == InitSpec::Kind::Explicit) {
        if (!config.init.params) throw config_error("explicit init without parameters");
        if (config.init.params->K() != K || config.init.params->m() != m) {
            throw config_error("initial parameters do not match the model's K and m");
        }
        return *config.init.params;
    }
    const GmmParams truth = config.truth();
    if (truth.K() != 2) throw config_error("orthogonal-line init needs a two-component true model");
    if (truth.m() != m) throw config_error("true model dimension differs from the data");
    const Vector v = orthogonal_direction(truth.mu(0) - truth.mu(1));
    const Matrix I = Matrix::Identity(m, m);
    return GmmParams(Vector::Constant(2, 0.5), {Vector(config.init.distance * v), Vector(-config.init.distance * v)},
                     {I, I});
}

Dataset load_or_sample(const ExperimentConfig& config, std::uint64_t seed) {
    if (config.data_path) return io::read_dataset_csv(*config.data_path, config.data_header);
    if (config.n_samples < 1) throw config_error("n_samples must be at least 1");
    return sample(config.truth(), config.n_samples, seed);
}

FitOutcome fit(const GmmParams& init, const Dataset& data, const Algorithm& algorithm, const StopCriteria& stop) {
    FitOutcome outcome;
    try {
        outcome.trace = run(init, data, algorithm, stop);
    } catch (const RunFailure& failure) {
        outcome.trace = failure.partial_trace();
        outcome.error = static_cast<const GmmError&>(failure);
    } catch (const GmmError& e) {
        outcome.error = e;
    }
    return outcome;
}

ReplicationReport replicate(const ExperimentConfig& config) {
    if (config.instances < 2) throw config_error("replicate needs at least 2 instances");
    const GmmParams truth = config.truth();
    const Algorithm pb = config.algorithm_for(AlgorithmKind::PbGem, truth.K());
    const Algorithm wpb = config.algorithm_for(AlgorithmKind::WPbGem, truth.K());

    ReplicationReport report;
    report.instances.resize(config.instances);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < config.instances; i = next++) {
            InstanceResult& slot = report.instances[i];
            slot.seed = config.vary_seed ? config.seed + static_cast<std::uint64_t>(i) : config.seed;
            try {
                const Dataset data = load_or_sample(config, slot.seed);
                const GmmParams init = initial_params(config, truth.K(), data.m());
                slot.pb = fit(init, data, pb, config.stop);
                slot.wpb = fit(init, data, wpb, config.stop);
            } catch (const GmmError& e) {
                slot.pb.error = e;
                slot.wpb.error = e;
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int threads = std::clamp(config.threads > 0 ? config.threads : static_cast<int>(hw), 1, config.instances);
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    std::vector<const FitOutcome*> ok_pb, ok_wpb;
    int rows = 0;
    double iters_pb = 0.0, iters_wpb = 0.0;
    for (const auto& inst : report.instances) {
        if (inst.pb.error || !inst.pb.trace) {
            ++report.failures_pb;
        } else {
            ok_pb.push_back(&inst.pb);
            iters_pb += inst.pb.trace->iterations;
            rows = std::max(rows, inst.pb.trace->iterations);
        }
        if (inst.wpb.error || !inst.wpb.trace) {
            ++report.failures_wpb;
        } else {
            ok_wpb.push_back(&inst.wpb);
            iters_wpb += inst.wpb.trace->iterations;
            rows = std::max(rows, inst.wpb.trace->iterations);
        }
    }
    report.mean_iters_pb = ok_pb.empty() ? 0.0 : iters_pb / static_cast<double>(ok_pb.size());
    report.mean_iters_wpb = ok_wpb.empty() ? 0.0 : iters_wpb / static_cast<double>(ok_wpb.size());
    aggregate(ok_pb, rows, report.mean_negll_pb, report.std_negll_pb);
    aggregate(ok_wpb, rows, report.mean_negll_wpb, report.std_negll_wpb);
    return report;
}

int exit_code_for(const GmmError& error) {
    return error.numerical() ? kNumericalFailure : kConfigError;
}

int cmd_generate(const ExperimentConfig& config, std::ostream& log) {
    if (config.n_samples < 1) throw config_error("n_samples must be at least 1");
    const GmmParams truth = config.truth();
    const Dataset data = sample(truth, config.n_samples, config.seed);
    io::write_dataset_csv(config.out_dir / "data.csv", data);
    io::write_params(config.out_dir / "truth.json", truth);
    log << "wrote " << data.N() << " samples to " << (config.out_dir / "data.csv").string() << '\n';
    return kSuccess;
}

int cmd_fit(const ExperimentConfig& config, std::ostream& log) {
    const Dataset data = load_or_sample(config, config.seed);
    const GmmParams truth = config.truth();
    const int K = config.init.kind == InitSpec::Kind::Explicit && config.init.params ? config.init.params->K()
                                                                                      : truth.K();
    const GmmParams init = initial_params(config, K, data.m());
    const Algorithm algorithm = config.algorithm_for(config.algorithm, K);
    const FitOutcome outcome = fit(init, data, algorithm, config.stop);
    const std::string name = to_string(config.algorithm);

    if (!outcome.trace) throw *outcome.error;
    write_run_outputs(config, *outcome.trace, name, outcome.error);
    if (outcome.error) {
        log << name << " failed: " << outcome.error->what() << '\n';
        return exit_code_for(*outcome.error);
    }
    log << name << ": " << outcome.trace->iterations << " iterations, "
        << to_string(outcome.trace->reason) << ", final loglik "
        << io::format_double(outcome.trace->records.back().log_likelihood) << '\n';
    return outcome.converged() ? kSuccess : kNotConverged;
}

int cmd_replicate(const ExperimentConfig& config, std::ostream& log) {
    const ReplicationReport report = replicate(config);
    const auto rows = report.mean_negll_pb.size();

    std::string csv =
        "# iterations 1..max over all instances; a run shorter than the longest is carried at its terminal "
        "value; std is the sample standard deviation over successful instances\n"
        "iter,mean_negll_pb,std_negll_pb,mean_negll_wpb,std_negll_wpb\n";
    for (std::size_t r = 0; r < rows; ++r) {
        csv += std::to_string(r + 1) + "," + io::format_double(report.mean_negll_pb[r]) + "," +
               io::format_double(report.std_negll_pb[r]) + "," + io::format_double(report.mean_negll_wpb[r]) +
               "," + io::format_double(report.std_negll_wpb[r]) + "\n";
    }
    io::write_text(config.out_dir / "replicate.csv", csv);

    std::vector<int> iters_pb, iters_wpb;
    nlohmann::json failures = nlohmann::json::array();
    for (std::size_t i = 0; i < report.instances.size(); ++i) {
        const auto& inst = report.instances[i];
        if (!inst.pb.error && inst.pb.trace) iters_pb.push_back(inst.pb.trace->iterations);
        if (!inst.wpb.error && inst.wpb.trace) iters_wpb.push_back(inst.wpb.trace->iterations);
        for (const auto* run : {&inst.pb, &inst.wpb}) {
            if (run->error) {
                failures.push_back({{"instance", i},
                                    {"algorithm", run == &inst.pb ? "pb-gem" : "w-pb-gem"},
                                    {"kind", to_string(run->error->kind())},
                                    {"message", run->error->what()}});
            }
        }
    }
    nlohmann::json summary;
    summary["instances"] = report.instances.size();
    summary["base_seed"] = config.seed;
    summary["vary_seed"] = config.vary_seed;
    const Vector betas = config.design(config.truth().K()).betas();
    summary["beta"] = std::vector<double>(betas.begin(), betas.end());
    summary["iterations_pb"] = iteration_stats(iters_pb);
    summary["iterations_wpb"] = iteration_stats(iters_wpb);
    summary["failures_pb"] = report.failures_pb;
    summary["failures_wpb"] = report.failures_wpb;
    summary["failures"] = failures;
    summary["wpb_fewer_mean_iterations"] = report.wpb_faster();
    io::write_json(config.out_dir / "replicate.json", summary);

    if (config.plot) {
        std::vector<double> pb{report.mean_negll_pb}, wpb{report.mean_negll_wpb};
        io::write_text(config.out_dir / "replicate.svg",
                       io::render_svg("mean negative log-likelihood over instances",
                                      {{"pb-gem", pb, report.std_negll_pb}, {"w-pb-gem", wpb, report.std_negll_wpb}},
                                      config.inset));
    }
    log << "replicated " << report.instances.size() << " instances: mean iterations pb-gem "
        << report.mean_iters_pb << ", w-pb-gem " << report.mean_iters_wpb << " ("
        << (report.wpb_faster() ? "PASS" : "FAIL") << ": w-pb-gem faster on average)\n";
    return (report.failures_pb + report.failures_wpb) == 0 ? kSuccess : kNumericalFailure;
}

int cmd_analyze(const ExperimentConfig& config, std::ostream& log) {
    if (!config.fitted_params) throw config_error("analyze needs a fitted parameter file");
    // Either a parameter document or a fit summary carrying "final_params".
    const nlohmann::json doc = io::read_json(*config.fitted_params);
    const GmmParams fitted = io::params_from_json(doc.contains("final_params") ? doc.at("final_params") : doc);
    const Dataset data = load_or_sample(config, config.seed);
    AlgorithmKind kind = config.algorithm == AlgorithmKind::WPbGem ? AlgorithmKind::WPbGem : AlgorithmKind::PbGem;
    const Algorithm algorithm = config.algorithm_for(kind, fitted.K());

    nlohmann::json report;
    report["algorithm"] = to_string(kind);
    const JacobianReport jac = update_map_jacobian(fitted, data, algorithm, config.fd_step);
    report["jacobian"] = to_json(jac);

    std::optional<SectorBounds> bounds;
    if (config.sector_bounds) {
        bounds = SectorBounds(config.sector_bounds->first, config.sector_bounds->second);
        report["sector_bounds_source"] = "supplied";
    } else {
        bounds = estimate_sector_bounds({jac});
        report["sector_bounds_source"] = "estimated from the update-map Jacobian";
    }
    if (bounds) {
        report["sector_bounds"] = {{"m", bounds->m_lo}, {"L", bounds->L_hi}};
        report["mu_bound"] = rate_bound(*bounds);
        RateGrid grid;
        grid.mu_step = config.rate_grid_step;
        grid.lambda_step = config.rate_grid_step;
        report["certificate"] = to_json(min_feasible_rate(*bounds, grid));
    } else {
        report["sector_bounds"] = nullptr;
        report["mu_bound"] = nullptr;
        report["certificate"] = nullptr;
    }

    if (config.trace_path) {
        const RateEstimate rate = empirical_rate(io::read_trace_csv(*config.trace_path));
        report["empirical_rate"] = rate.factor ? nlohmann::json(*rate.factor) : nlohmann::json(nullptr);
        if (!rate.factor) report["empirical_rate_note"] = rate.note;
    }
    io::write_json(config.out_dir / "analysis.json", report);
    log << "max Jacobian eigenvalue modulus " << (jac.moduli.empty() ? 0.0 : jac.moduli.front()) << " ("
        << to_string(jac.classification) << ")\n";
    return kSuccess;
}

}  // namespace gemgmm::harness
