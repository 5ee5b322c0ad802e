#include "gemgmm/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace gemgmm {

SectorBounds::SectorBounds(double m, double L) : m_lo(m), L_hi(L) {
    if (!(m > 0.0) || !(L >= m) || !std::isfinite(L)) {
        throw GmmError(ErrorKind::InvalidArgument, "sector bounds need 0 < m <= L");
    }
}

double rate_bound(const SectorBounds& b) { return std::max(std::abs(1.0 - b.m_lo), std::abs(1.0 - b.L_hi)); }

Eigen::Matrix2d lmi_matrix(double mu, double lambda, const SectorBounds& b) {
    const double off = -1.0 + lambda * (b.L_hi + b.m_lo);
    Eigen::Matrix2d M;
    M << 1.0 - mu * mu - 2.0 * b.m_lo * b.L_hi * lambda, off, off, 1.0 - 2.0 * lambda;
    return M;
}

bool lmi_check(double mu, double lambda, const SectorBounds& bounds) {
    if (!(mu >= 0.0 && mu < 1.0)) throw GmmError(ErrorKind::InvalidArgument, "rate must lie in [0, 1)");
    const Eigen::Matrix2d M = lmi_matrix(mu, lambda, bounds);
    // Largest eigenvalue of a symmetric 2x2 matrix.
    const double mean = 0.5 * (M(0, 0) + M(1, 1));
    const double radius = std::hypot(0.5 * (M(0, 0) - M(1, 1)), M(0, 1));
    return mean + radius <= kLmiSlack;
}

RateCertificate min_feasible_rate(const SectorBounds& bounds, const RateGrid& grid) {
    if (!(grid.mu_step > 0.0) || !(grid.lambda_step > 0.0) || !(grid.lambda_hi >= grid.lambda_lo)) {
        throw GmmError(ErrorKind::InvalidArgument, "grid resolution must be positive");
    }
    const auto mu_points = static_cast<long>(std::ceil(1.0 / grid.mu_step));
    const auto lambda_points = static_cast<long>(std::floor((grid.lambda_hi - grid.lambda_lo) / grid.lambda_step)) + 1;
    const double s = bounds.L_hi + bounds.m_lo;
    const double p = bounds.m_lo * bounds.L_hi;
    const double curvature = -(bounds.L_hi - bounds.m_lo) * (bounds.L_hi - bounds.m_lo);
    for (long i = 0; i < mu_points; ++i) {
        const double mu = static_cast<double>(i) * grid.mu_step;
        if (mu >= 1.0) break;
        // det of the LMI matrix is concave in lambda; at the tightest rate the
        // feasible lambda shrinks to its maximizer, which a grid can miss.
        const double slope = 2.0 * (s - p - 1.0 + mu * mu);
        double best = curvature < 0.0 ? -slope / (2.0 * curvature) : 1.0 / s;
        best = std::clamp(best, grid.lambda_lo, grid.lambda_hi);
        if (lmi_check(mu, best, bounds)) return {true, mu, best};
        for (long l = 0; l < lambda_points; ++l) {
            const double lambda = grid.lambda_lo + static_cast<double>(l) * grid.lambda_step;
            if (lmi_check(mu, lambda, bounds)) return {true, mu, lambda};
        }
    }
    return {};
}

std::string to_string(ConvergenceClass c) {
    switch (c) {
        case ConvergenceClass::NewtonLike: return "newton_like";
        case ConvergenceClass::FirstOrder: return "first_order";
        case ConvergenceClass::Mixed: return "mixed";
    }
    return "mixed";
}

ConvergenceClass classify(double max_modulus) {
    if (max_modulus < kNewtonLikeModulus) return ConvergenceClass::NewtonLike;
    if (max_modulus > kFirstOrderModulus) return ConvergenceClass::FirstOrder;
    return ConvergenceClass::Mixed;
}

Matrix feasible_basis(const ThetaLayout& layout) {
    const int K = layout.K;
    const int m = layout.m;
    const int dim = (K - 1) + m * K + K * m * (m + 1) / 2;
    Matrix B = Matrix::Zero(layout.size(), dim);
    int col = 0;

    // Zero-sum alpha directions: orthonormalized e_i - e_{i+1} (Helmert form).
    for (int i = 1; i < K; ++i) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(i) * (i + 1));
        for (int r = 0; r < i; ++r) B(r, col) = scale;
        B(i, col) = -static_cast<double>(i) * scale;
        ++col;
    }
    for (int j = 0; j < K; ++j) {
        for (int d = 0; d < m; ++d) B(layout.mu_offset(j) + d, col++) = 1.0;
    }
    const double off = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < K; ++j) {
        const int base = layout.sigma_offset(j);
        for (int c = 0; c < m; ++c) {
            for (int r = c; r < m; ++r) {
                if (r == c) {
                    B(base + c * m + r, col) = 1.0;
                } else {
                    B(base + c * m + r, col) = off;
                    B(base + r * m + c, col) = off;
                }
                ++col;
            }
        }
    }
    return B;
}

JacobianReport map_jacobian(const GmmParams& params, const UpdateMap& map, double fd_step) {
    if (!(fd_step > 0.0)) throw GmmError(ErrorKind::InvalidArgument, "finite-difference step must be positive");
    const ThetaLayout layout = params.layout();
    const ThetaVector center = flatten(params);

    JacobianReport report;
    report.basis = feasible_basis(layout);
    const auto dim = report.basis.cols();
    Matrix JB(layout.size(), dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        try {
            ThetaVector plus = center;
            ThetaVector minus = center;
            plus.values += fd_step * report.basis.col(i);
            minus.values -= fd_step * report.basis.col(i);
            const ThetaVector up = map(unflatten(plus));
            const ThetaVector down = map(unflatten(minus));
            JB.col(i) = (up.values - down.values) / (2.0 * fd_step);
        } catch (const GmmError& e) {
            throw e.at_index(static_cast<long>(i), "probe");
        }
    }
    report.J = JB * report.basis.transpose();
    report.reduced = report.basis.transpose() * JB;

    Eigen::EigenSolver<Matrix> solver(report.reduced, false);
    for (const auto& ev : solver.eigenvalues()) report.moduli.push_back(std::abs(ev));
    std::sort(report.moduli.begin(), report.moduli.end(), std::greater<>());
    report.classification = classify(report.moduli.empty() ? 0.0 : report.moduli.front());
    return report;
}

JacobianReport update_map_jacobian(const GmmParams& params, const Dataset& data, const Algorithm& algorithm,
                                   double fd_step) {
    if (algorithm.kind != AlgorithmKind::PbGem && algorithm.kind != AlgorithmKind::WPbGem) {
        throw GmmError(ErrorKind::InvalidArgument, "update-map Jacobian supports pb-gem and w-pb-gem");
    }
    return map_jacobian(
        params, [&](const GmmParams& p) { return flatten(algorithm.step(p, data)); }, fd_step);
}

std::optional<SectorBounds> estimate_sector_bounds(const std::vector<JacobianReport>& reports) {
    if (reports.empty()) return std::nullopt;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : reports) {
        const Matrix field = Matrix::Identity(r.reduced.rows(), r.reduced.cols()) - r.reduced;
        const Matrix sym = 0.5 * (field + field.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
        lo = std::min(lo, solver.eigenvalues().minCoeff());
        hi = std::max(hi, solver.eigenvalues().maxCoeff());
    }
    if (!(lo > 0.0)) return std::nullopt;
    return SectorBounds(lo, hi);
}

RateEstimate empirical_rate(const RunTrace& trace, std::optional<double> terminal) {
    const auto& recs = trace.records;
    const auto n = static_cast<long>(recs.size());
    if (n < 10) return {std::nullopt, "fewer than 10 iterations"};
    const double target = terminal.value_or(recs.back().log_likelihood);

    const long start = (2 * n) / 3;
    for (long k = start + 1; k < n; ++k) {
        if (recs[k].log_likelihood < recs[k - 1].log_likelihood) return {std::nullopt, "non-monotone tail"};
    }

    // Least squares of log gap against iteration index.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long count = 0;
    for (long k = start; k < n; ++k) {
        const double gap = target - recs[k].log_likelihood;
        if (!(gap > 0.0)) continue;
        const double x = recs[k].iteration;
        const double y = std::log(gap);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    if (count < 3) return {std::nullopt, "tail has fewer than three positive gaps"};
    const double denom = count * sxx - sx * sx;
    const double slope = (count * sxy - sx * sy) / denom;
    return {std::exp(slope), ""};
}

nlohmann::json to_json(const RateCertificate& cert) {
    nlohmann::json j;
    j["feasible"] = cert.feasible;
    if (cert.feasible) {
        j["mu_bound"] = cert.mu_bound;
        j["lambda"] = cert.lambda;
    } else {
        j["mu_bound"] = nullptr;
        j["lambda"] = nullptr;
    }
    return j;
}

nlohmann::json to_json(const JacobianReport& report) {
    nlohmann::json j;
    j["dimension"] = report.J.rows();
    j["feasible_dimension"] = report.reduced.rows();
    j["eigenvalue_moduli"] = report.moduli;
    j["max_modulus"] = report.moduli.empty() ? 0.0 : report.moduli.front();
    j["classification"] = to_string(report.classification);
    j["classification_thresholds"] = {{"newton_like_below", kNewtonLikeModulus},
                                      {"first_order_above", kFirstOrderModulus}};
    return j;
}

}  // namespace gemgmm
