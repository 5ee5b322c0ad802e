#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gemgmm/dynamics.hpp"
#include "gemgmm/gmm.hpp"

namespace gemgmm::io {

/// Parameter document:
///
///   {"K": 2, "m": 2,
///    "alpha": [a_1, ..., a_K],
///    "mu":    [[mu_1 (m values)], ..., [mu_K]],
///    "sigma": [[[row_1], ..., [row_m]], ...]}      // one m x m matrix per component, rows listed in order
///
/// K and m are checked against the array shapes.
nlohmann::json params_to_json(const GmmParams& params);
GmmParams params_from_json(const nlohmann::json& doc);

GmmParams read_params(const std::filesystem::path& path);
void write_params(const std::filesystem::path& path, const GmmParams& params);

/// One sample per row, comma separated. With `header` the first line is skipped.
Dataset read_dataset_csv(const std::filesystem::path& path, bool header = false);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

/// Text that round-trips the double exactly ("%.17g").
std::string format_double(double value);

inline constexpr const char* kTraceHeader = "iter,loglik,step_norm,alpha_residual,sym_residual";

/// Row 0 is the initial point (step norm 0), then one row per iteration.
void write_trace_csv(std::ostream& out, const RunTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace);
/// Reads a trace CSV back (no snapshots); row 0 becomes the initial log-likelihood.
RunTrace read_trace_csv(const std::filesystem::path& path);

/// Summary document: algorithm, iterations, termination reason, initial and
/// final log-likelihood, final parameters and wall time. Every field except
/// "wall_seconds" is a deterministic function of the inputs.
nlohmann::json summary_json(const RunTrace& trace, const std::string& algorithm);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

struct PlotSeries {
    std::string label;
    std::vector<double> values;       // indexed by iteration
    std::vector<double> spread = {};  // optional +/- band, same length as values
};

/// Standalone SVG of the series against iteration. When `inset` is set, a
/// second panel zooms into that iteration window.
std::string render_svg(const std::string& title, const std::vector<PlotSeries>& series,
                       std::optional<std::pair<int, int>> inset = std::nullopt);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gemgmm::io
