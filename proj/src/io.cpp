#include "gemgmm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gemgmm::io {

namespace {

GmmError io_error(const std::string& what) { return GmmError(ErrorKind::Io, what); }

GmmError schema_error(const std::string& what) {
    return GmmError(ErrorKind::InvalidArgument, "parameter document: " + what);
}

std::ifstream open_in(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw io_error("file not found: " + path.string());
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    return out;
}

std::vector<double> parse_row(const std::string& line, int line_no) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            row.push_back(std::stod(cell, &used));
            while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw GmmError(ErrorKind::InvalidArgument,
                           "line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
        }
    }
    return row;
}

}  // namespace

nlohmann::json params_to_json(const GmmParams& params) {
    nlohmann::json doc;
    doc["K"] = params.K();
    doc["m"] = params.m();
    doc["alpha"] = std::vector<double>(params.alpha().begin(), params.alpha().end());
    doc["mu"] = nlohmann::json::array();
    doc["sigma"] = nlohmann::json::array();
    for (int j = 0; j < params.K(); ++j) {
        doc["mu"].push_back(std::vector<double>(params.mu(j).begin(), params.mu(j).end()));
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < params.m(); ++r) {
            std::vector<double> row(params.m());
            for (int c = 0; c < params.m(); ++c) row[c] = params.sigma(j)(r, c);
            rows.push_back(row);
        }
        doc["sigma"].push_back(rows);
    }
    return doc;
}

GmmParams params_from_json(const nlohmann::json& doc) {
    try {
        if (!doc.is_object()) throw schema_error("expected an object");
        for (const char* key : {"K", "m", "alpha", "mu", "sigma"}) {
            if (!doc.contains(key)) throw schema_error(std::string("missing field '") + key + "'");
        }
        const int K = doc.at("K").get<int>();
        const int m = doc.at("m").get<int>();
        if (K < 1 || m < 1) throw schema_error("K and m must be positive");

        const auto alpha = doc.at("alpha").get<std::vector<double>>();
        const auto mu = doc.at("mu").get<std::vector<std::vector<double>>>();
        const auto sigma = doc.at("sigma").get<std::vector<std::vector<std::vector<double>>>>();
        if (static_cast<int>(alpha.size()) != K || static_cast<int>(mu.size()) != K ||
            static_cast<int>(sigma.size()) != K) {
            throw schema_error("alpha, mu and sigma must each list K entries");
        }
        std::vector<Vector> mu_v;
        std::vector<Matrix> sigma_m;
        for (int j = 0; j < K; ++j) {
            if (static_cast<int>(mu[j].size()) != m) throw schema_error("mean length differs from m");
            mu_v.emplace_back(Eigen::Map<const Vector>(mu[j].data(), m));
            if (static_cast<int>(sigma[j].size()) != m) throw schema_error("covariance is not m x m");
            Matrix S(m, m);
            for (int r = 0; r < m; ++r) {
                if (static_cast<int>(sigma[j][r].size()) != m) throw schema_error("covariance is not m x m");
                for (int c = 0; c < m; ++c) S(r, c) = sigma[j][r][c];
            }
            sigma_m.push_back(std::move(S));
        }
        return GmmParams(Eigen::Map<const Vector>(alpha.data(), K), std::move(mu_v), std::move(sigma_m));
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(e.what());
    }
}

GmmParams read_params(const std::filesystem::path& path) { return params_from_json(read_json(path)); }

void write_params(const std::filesystem::path& path, const GmmParams& params) {
    write_json(path, params_to_json(params));
}

Dataset read_dataset_csv(const std::filesystem::path& path, bool header) {
    std::ifstream in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (header && line_no == 1) continue;
        if (line.empty()) continue;
        rows.push_back(parse_row(line, line_no));
        if (rows.back().size() != rows.front().size()) {
            throw GmmError(ErrorKind::InvalidArgument, "line " + std::to_string(line_no) + ": ragged row");
        }
    }
    if (rows.empty()) throw GmmError(ErrorKind::InvalidArgument, "dataset " + path.string() + " is empty");
    Matrix X(rows.size(), rows.front().size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t d = 0; d < rows[t].size(); ++d) X(t, d) = rows[t][d];
    }
    return Dataset(std::move(X));
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out = open_out(path);
    for (int t = 0; t < data.N(); ++t) {
        for (int d = 0; d < data.m(); ++d) {
            if (d > 0) out << ',';
            out << format_double(data.X()(t, d));
        }
        out << '\n';
    }
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
    out << kTraceHeader << '\n';
    double alpha0 = 0.0;
    double sym0 = 0.0;
    if (trace.initial_snapshot) {
        const GmmParams p0 = unflatten(*trace.initial_snapshot);
        alpha0 = std::abs(p0.alpha().sum() - 1.0);
        for (const Matrix& S : p0.sigma()) sym0 = std::max(sym0, max_asymmetry(S));
    }
    out << 0 << ',' << format_double(trace.initial_log_likelihood) << ',' << format_double(0.0) << ','
        << format_double(alpha0) << ',' << format_double(sym0) << '\n';
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << format_double(r.log_likelihood) << ',' << format_double(r.step_norm) << ','
            << format_double(r.alpha_residual) << ',' << format_double(r.sym_residual) << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace) {
    std::ofstream out = open_out(path);
    write_trace_csv(out, trace);
}

RunTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kTraceHeader, 0) != 0) {
        throw GmmError(ErrorKind::InvalidArgument, path.string() + ": missing trace header");
    }
    RunTrace trace;
    int line_no = 1;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto row = parse_row(line, line_no);
        if (row.size() != 5) throw GmmError(ErrorKind::InvalidArgument, "trace row needs 5 columns");
        if (first && row[0] == 0.0) {
            trace.initial_log_likelihood = row[1];
        } else {
            IterationRecord rec;
            rec.iteration = static_cast<int>(row[0]);
            rec.log_likelihood = row[1];
            rec.step_norm = row[2];
            rec.alpha_residual = row[3];
            rec.sym_residual = row[4];
            trace.records.push_back(rec);
        }
        first = false;
    }
    trace.iterations = trace.records.empty() ? 0 : trace.records.back().iteration;
    return trace;
}

nlohmann::json summary_json(const RunTrace& trace, const std::string& algorithm) {
    nlohmann::json doc;
    doc["algorithm"] = algorithm;
    doc["iterations"] = trace.iterations;
    doc["termination_reason"] = to_string(trace.reason);
    doc["initial_loglik"] = trace.initial_log_likelihood;
    doc["final_loglik"] = trace.records.empty() ? trace.initial_log_likelihood : trace.records.back().log_likelihood;
    if (trace.final_params) doc["final_params"] = params_to_json(*trace.final_params);
    doc["wall_seconds"] = trace.wall_seconds;
    return doc;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw GmmError(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
}

namespace {

struct Frame {
    double x, y, w, h;
};

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, const Frame& f, double x_lo,
                     double x_hi, double y_lo, double y_hi) {
    std::ostringstream pts;
    const double dx = x_hi > x_lo ? x_hi - x_lo : 1.0;
    const double dy = y_hi > y_lo ? y_hi - y_lo : 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double px = f.x + (xs[i] - x_lo) / dx * f.w;
        const double py = f.y + f.h - (ys[i] - y_lo) / dy * f.h;
        pts << (i ? " " : "") << std::round(px * 100) / 100 << ',' << std::round(py * 100) / 100;
    }
    return pts.str();
}

const char* kPalette[] = {"#c0392b", "#2c3e50", "#27ae60", "#8e44ad", "#d35400"};

void draw_panel(std::ostringstream& svg, const std::vector<PlotSeries>& series, const Frame& f, int it_lo, int it_hi,
                bool labels) {
    double y_lo = std::numeric_limits<double>::infinity();
    double y_hi = -y_lo;
    for (const auto& s : series) {
        for (int i = it_lo; i <= it_hi && i < static_cast<int>(s.values.size()); ++i) {
            const double spread = s.spread.empty() ? 0.0 : s.spread[i];
            y_lo = std::min(y_lo, s.values[i] - spread);
            y_hi = std::max(y_hi, s.values[i] + spread);
        }
    }
    if (!std::isfinite(y_lo)) return;
    svg << "<rect x=\"" << f.x << "\" y=\"" << f.y << "\" width=\"" << f.w << "\" height=\"" << f.h
        << "\" fill=\"white\" stroke=\"#555\"/>\n";
    std::size_t colour = 0;
    for (const auto& s : series) {
        std::vector<double> xs, ys, upper, lower;
        for (int i = it_lo; i <= it_hi && i < static_cast<int>(s.values.size()); ++i) {
            xs.push_back(i);
            ys.push_back(s.values[i]);
            if (!s.spread.empty()) {
                upper.push_back(s.values[i] + s.spread[i]);
                lower.push_back(s.values[i] - s.spread[i]);
            }
        }
        const char* stroke = kPalette[colour++ % std::size(kPalette)];
        if (!upper.empty()) {
            std::vector<double> band_x = xs;
            std::vector<double> band_y = upper;
            band_x.insert(band_x.end(), xs.rbegin(), xs.rend());
            band_y.insert(band_y.end(), lower.rbegin(), lower.rend());
            svg << "<polygon fill=\"" << stroke << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\""
                << polyline(band_x, band_y, f, it_lo, it_hi, y_lo, y_hi) << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\""
            << polyline(xs, ys, f, it_lo, it_hi, y_lo, y_hi) << "\"/>\n";
    }
    if (labels) {
        svg << "<text x=\"" << f.x << "\" y=\"" << f.y + f.h + 16 << "\" font-size=\"11\">iteration " << it_lo
            << "</text>\n";
        svg << "<text x=\"" << f.x + f.w << "\" y=\"" << f.y + f.h + 16
            << "\" font-size=\"11\" text-anchor=\"end\">" << it_hi << "</text>\n";
        svg << "<text x=\"" << f.x - 6 << "\" y=\"" << f.y + 10 << "\" font-size=\"11\" text-anchor=\"end\">"
            << format_double(y_hi) << "</text>\n";
        svg << "<text x=\"" << f.x - 6 << "\" y=\"" << f.y + f.h << "\" font-size=\"11\" text-anchor=\"end\">"
            << format_double(y_lo) << "</text>\n";
    }
}

}  // namespace

std::string render_svg(const std::string& title, const std::vector<PlotSeries>& series,
                       std::optional<std::pair<int, int>> inset) {
    int last = 0;
    for (const auto& s : series) last = std::max(last, static_cast<int>(s.values.size()) - 1);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"480\" font-family=\"sans-serif\">\n";
    svg << "<rect width=\"760\" height=\"480\" fill=\"#fafafa\"/>\n";
    svg << "<text x=\"380\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">" << title << "</text>\n";
    draw_panel(svg, series, {150, 40, 580, 390}, 0, last, true);
    if (inset && inset->first < inset->second && inset->first <= last) {
        const int hi = std::min(inset->second, last);
        draw_panel(svg, series, {470, 60, 240, 150}, inset->first, hi, false);
        svg << "<text x=\"590\" y=\"225\" font-size=\"10\" text-anchor=\"middle\">iterations " << inset->first
            << "-" << hi << "</text>\n";
    }
    int row = 0;
    std::size_t colour = 0;
    for (const auto& s : series) {
        svg << "<text x=\"160\" y=\"" << 60 + 14 * row++ << "\" font-size=\"11\" fill=\""
            << kPalette[colour++ % std::size(kPalette)] << "\">" << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out = open_out(path);
    out << text;
}

}  // namespace gemgmm::io
