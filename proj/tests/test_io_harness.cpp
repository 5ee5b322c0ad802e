#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gemgmm/harness.hpp"
#include "gemgmm/io.hpp"

using namespace gemgmm;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on scope exit.
struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& name) {
        path = fs::temp_directory_path() / ("gemgmm_test_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

harness::ExperimentConfig quick_config(const fs::path& out) {
    harness::ExperimentConfig cfg;
    cfg.out_dir = out;
    cfg.n_samples = 300;
    cfg.stop.max_iters = 200;
    return cfg;
}

}  // namespace

TEST_CASE("parameter JSON") {
    const GmmParams p = harness::symmetric_two_component_model();
    SUBCASE("round trip is exact") {
        const auto doc = io::params_to_json(p);
        CHECK(doc["K"] == 2);
        CHECK(doc["m"] == 2);
        CHECK(io::params_from_json(doc) == p);
        CHECK(io::params_from_json(nlohmann::json::parse(doc.dump())) == p);
    }
    SUBCASE("asymmetric covariances keep their row order") {
        nlohmann::json doc = io::params_to_json(p);
        doc["sigma"][0] = {{2.0, 0.5}, {0.5, 1.0}};
        const GmmParams q = io::params_from_json(doc);
        CHECK(q.sigma(0)(0, 0) == 2.0);
        CHECK(q.sigma(0)(1, 1) == 1.0);
    }
    SUBCASE("schema errors") {
        nlohmann::json doc = io::params_to_json(p);
        doc["K"] = 3;
        CHECK_THROWS_AS(io::params_from_json(doc), GmmError);
        doc = io::params_to_json(p);
        doc.erase("mu");
        CHECK_THROWS_AS(io::params_from_json(doc), GmmError);
        doc = io::params_to_json(p);
        doc["alpha"] = {0.7, 0.7};
        CHECK_THROWS_AS(io::params_from_json(doc), GmmError);
        doc = io::params_to_json(p);
        doc["sigma"][1] = {{1.0, 0.0}, {0.3, 1.0}};
        try {
            io::params_from_json(doc);
            FAIL("expected an error");
        } catch (const GmmError& e) {
            CHECK(e.kind() == ErrorKind::InvalidCovariance);
        }
    }
    SUBCASE("missing file is an I/O error") {
        try {
            io::read_params("/nonexistent/params.json");
            FAIL("expected an error");
        } catch (const GmmError& e) {
            CHECK(e.kind() == ErrorKind::Io);
            CHECK(harness::exit_code_for(e) == harness::kConfigError);
        }
    }
}

TEST_CASE("dataset CSV") {
    ScratchDir dir("dataset");
    const Dataset data = sample(harness::symmetric_two_component_model(), 25, 3);
    io::write_dataset_csv(dir.path / "d.csv", data);
    CHECK(io::read_dataset_csv(dir.path / "d.csv").X() == data.X());

    io::write_text(dir.path / "h.csv", "x,y\n1.5,2\n-3,4e-1\n");
    const Dataset h = io::read_dataset_csv(dir.path / "h.csv", true);
    REQUIRE(h.N() == 2);
    CHECK(h.X()(1, 1) == 0.4);

    io::write_text(dir.path / "ragged.csv", "1,2\n3\n");
    CHECK_THROWS_AS(io::read_dataset_csv(dir.path / "ragged.csv"), GmmError);
    io::write_text(dir.path / "text.csv", "1,abc\n");
    CHECK_THROWS_AS(io::read_dataset_csv(dir.path / "text.csv"), GmmError);
}

TEST_CASE("trace CSV") {
    ScratchDir dir("trace");
    const Dataset data = sample(harness::symmetric_two_component_model(), 200, 5);
    harness::ExperimentConfig cfg;
    StopCriteria stop;
    stop.max_iters = 30;
    const RunTrace trace = run(harness::initial_params(cfg, 2, 2), data, Algorithm::pb_gem(), stop);
    io::write_trace_csv(dir.path / "t.csv", trace);

    const std::string text = slurp(dir.path / "t.csv");
    CHECK(text.rfind(std::string(io::kTraceHeader) + "\n0,", 0) == 0);

    const RunTrace back = io::read_trace_csv(dir.path / "t.csv");
    CHECK(back.initial_log_likelihood == trace.initial_log_likelihood);
    REQUIRE(back.records.size() == trace.records.size());
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        CHECK(back.records[i].iteration == trace.records[i].iteration);
        CHECK(back.records[i].log_likelihood == trace.records[i].log_likelihood);
        CHECK(back.records[i].step_norm == trace.records[i].step_norm);
    }
    CHECK(io::format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("configuration") {
    SUBCASE("defaults") {
        const harness::ExperimentConfig cfg;
        CHECK(cfg.seed == 7);
        CHECK(cfg.truth() == harness::symmetric_two_component_model());
        const GmmParams init = harness::initial_params(cfg, 2, 2);
        CHECK(init.mu(0)(0) == doctest::Approx(-3.0));
        CHECK(init.mu(0)(1) == doctest::Approx(3.0));
        CHECK(init.mu(1)(0) == doctest::Approx(3.0));
        CHECK(init.mu(1)(1) == doctest::Approx(-3.0));
        CHECK(init.alpha()(0) == 0.5);
        CHECK(cfg.design(2).betas()(0) == 0.996);
    }
    SUBCASE("JSON fields override defaults and paths resolve against the config") {
        ScratchDir dir("config");
        io::write_text(dir.path / "cfg.json",
                       R"({"seed": 11, "algorithm": "w-pb-gem", "beta": [0.9, 0.8], "tol": 1e-6,
                           "max_iters": 50, "data": "d.csv", "out": "results"})");
        const harness::ExperimentConfig cfg = harness::load_config(dir.path / "cfg.json");
        CHECK(cfg.seed == 11);
        CHECK(cfg.algorithm == AlgorithmKind::WPbGem);
        CHECK(cfg.stop.rel_ll_tol == 1e-6);
        CHECK(cfg.stop.max_iters == 50);
        CHECK(cfg.design(2).betas()(1) == 0.8);
        REQUIRE(cfg.data_path.has_value());
        CHECK(*cfg.data_path == dir.path / "d.csv");
        CHECK(cfg.out_dir == dir.path / "results");
    }
    SUBCASE("invalid values") {
        CHECK_THROWS_AS(harness::apply_config_json({}, nlohmann::json::parse(R"({"algorithm": "bfgs"})")), GmmError);
        CHECK_THROWS_AS(harness::apply_config_json({}, nlohmann::json::parse(R"({"tol": -1})")), GmmError);
        CHECK_THROWS_AS(harness::apply_config_json({}, nlohmann::json::parse(R"({"n_samples": "many"})")),
                        GmmError);
        CHECK_THROWS_AS(harness::load_config("/nonexistent/cfg.json"), GmmError);
    }
    SUBCASE("beta of the wrong length is rejected") {
        harness::ExperimentConfig cfg;
        cfg.beta = std::vector<double>{0.9, 0.9, 0.9};
        CHECK_THROWS_AS(cfg.algorithm_for(AlgorithmKind::WPbGem, 2), GmmError);
    }
}

TEST_CASE("generate subcommand") {
    ScratchDir a("gen_a"), b("gen_b");
    std::ostringstream log;
    CHECK(harness::cmd_generate(quick_config(a.path), log) == harness::kSuccess);
    CHECK(harness::cmd_generate(quick_config(b.path), log) == harness::kSuccess);
    CHECK(slurp(a.path / "data.csv") == slurp(b.path / "data.csv"));
    CHECK(io::read_dataset_csv(a.path / "data.csv").N() == 300);
    CHECK(io::read_params(a.path / "truth.json") == harness::symmetric_two_component_model());

    harness::ExperimentConfig bad = quick_config(a.path);
    bad.n_samples = 0;
    CHECK_THROWS_AS(harness::cmd_generate(bad, log), GmmError);
}

TEST_CASE("fit subcommand") {
    SUBCASE("starting at the truth converges almost immediately") {
        ScratchDir dir("fit_truth");
        harness::ExperimentConfig cfg = quick_config(dir.path);
        cfg.n_samples = 5000;
        cfg.init.kind = harness::InitSpec::Kind::Explicit;
        cfg.init.params = cfg.truth();
        cfg.stop.rel_ll_tol = 1e-4;
        std::ostringstream log;
        CHECK(harness::cmd_fit(cfg, log) == harness::kSuccess);
        const auto summary = io::read_json(dir.path / "summary.json");
        CHECK(summary["iterations"].get<int>() <= 3);
        CHECK(summary["termination_reason"] == "tolerance");
        CHECK(summary["algorithm"] == "pb-gem");
    }
    SUBCASE("iteration cap yields the not-converged code and still writes outputs") {
        ScratchDir dir("fit_cap");
        harness::ExperimentConfig cfg = quick_config(dir.path);
        cfg.stop.max_iters = 5;
        cfg.plot = true;
        std::ostringstream log;
        CHECK(harness::cmd_fit(cfg, log) == harness::kNotConverged);
        CHECK(fs::exists(dir.path / "trace.csv"));
        CHECK(fs::exists(dir.path / "plot.svg"));
        CHECK(io::read_json(dir.path / "summary.json")["termination_reason"] == "max_iters");
        CHECK(io::read_trace_csv(dir.path / "trace.csv").records.size() == 5);
    }
    SUBCASE("traces are byte-identical across runs") {
        ScratchDir a("fit_a"), b("fit_b");
        std::ostringstream log;
        harness::cmd_fit(quick_config(a.path), log);
        harness::cmd_fit(quick_config(b.path), log);
        CHECK(slurp(a.path / "trace.csv") == slurp(b.path / "trace.csv"));
        auto sa = io::read_json(a.path / "summary.json");
        auto sb = io::read_json(b.path / "summary.json");
        sa.erase("wall_seconds");
        sb.erase("wall_seconds");
        CHECK(sa == sb);
    }
    SUBCASE("a failing step gives the numerical-failure code and a partial trace") {
        ScratchDir dir("fit_fail");
        io::write_text(dir.path / "line.csv", "-1,0\n0.5,0\n1,0\n2,0\n");
        harness::ExperimentConfig cfg = quick_config(dir.path);
        cfg.data_path = dir.path / "line.csv";
        cfg.init.kind = harness::InitSpec::Kind::Explicit;
        cfg.init.params = GmmParams(Vector::Ones(1), {Vector::Zero(2)}, {Matrix::Identity(2, 2)});
        std::ostringstream log;
        CHECK(harness::cmd_fit(cfg, log) == harness::kNumericalFailure);
        CHECK(fs::exists(dir.path / "trace.csv"));
    }
}

TEST_CASE("replicate subcommand") {
    ScratchDir dir("replicate");
    harness::ExperimentConfig cfg = quick_config(dir.path);
    cfg.instances = 2;
    cfg.vary_seed = false;
    cfg.stop.max_iters = 40;
    cfg.threads = 2;
    std::ostringstream log;
    harness::cmd_replicate(cfg, log);

    std::istringstream csv(slurp(dir.path / "replicate.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line.rfind("#", 0) == 0);
    std::getline(csv, line);
    CHECK(line == "iter,mean_negll_pb,std_negll_pb,mean_negll_wpb,std_negll_wpb");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        CHECK(std::stoi(cells[0]) == rows);
        CHECK(std::stod(cells[2]) == 0.0);
        CHECK(std::stod(cells[4]) == 0.0);
        CHECK(std::stod(cells[1]) > 0.0);
    }
    CHECK(rows == 40);
    const auto summary = io::read_json(dir.path / "replicate.json");
    CHECK(summary["instances"] == 2);
    CHECK(summary["failures_pb"] == 0);
}

TEST_CASE("analyze subcommand") {
    ScratchDir dir("analyze");
    harness::ExperimentConfig cfg = quick_config(dir.path);
    std::ostringstream log;
    SUBCASE("supplied sector bounds") {
        io::write_params(dir.path / "fitted.json", cfg.truth());
        cfg.fitted_params = dir.path / "fitted.json";
        cfg.sector_bounds = std::make_pair(0.5, 1.5);
        cfg.rate_grid_step = 1e-2;
        CHECK(harness::cmd_analyze(cfg, log) == harness::kSuccess);
        const auto report = io::read_json(dir.path / "analysis.json");
        CHECK(report["mu_bound"].get<double>() == doctest::Approx(0.5));
        CHECK(report["certificate"]["feasible"] == true);
        CHECK(report["jacobian"]["eigenvalue_moduli"].size() == 11);
    }
    SUBCASE("missing fitted parameters") {
        cfg.fitted_params = dir.path / "absent.json";
        try {
            harness::cmd_analyze(cfg, log);
            FAIL("expected an error");
        } catch (const GmmError& e) {
            CHECK(harness::exit_code_for(e) == harness::kConfigError);
        }
    }
}
