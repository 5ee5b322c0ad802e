#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gemgmm/dynamics.hpp"

namespace gemgmm {

/// Sector bounds 0 < m_lo <= L_hi on the step field: strong-convexity and
/// Lipschitz-gradient constants of the certifying function.
struct SectorBounds {
    double m_lo = 1.0;
    double L_hi = 1.0;

    /// Throws InvalidArgument unless 0 < m_lo <= L_hi.
    SectorBounds(double m_lo, double L_hi);
};

/// max(|1 - m|, |1 - L|).
double rate_bound(const SectorBounds& bounds);

/// Slack on the largest eigenvalue when deciding negative semidefiniteness.
inline constexpr double kLmiSlack = 1e-10;

/// The 2x2 LMI matrix with R = 1:
///   [[1 - mu^2 - 2 m L lambda, -1 + lambda (L + m)],
///    [-1 + lambda (L + m),      1 - 2 lambda      ]]
Eigen::Matrix2d lmi_matrix(double mu, double lambda, const SectorBounds& bounds);

/// True iff lmi_matrix(...) is negative semidefinite (largest eigenvalue
/// <= kLmiSlack). mu must lie in [0, 1).
bool lmi_check(double mu, double lambda, const SectorBounds& bounds);

struct RateCertificate {
    bool feasible = false;
    double mu_bound = 1.0;  // meaningful only when feasible
    double lambda = 0.0;
};

struct RateGrid {
    double mu_step = 1e-3;
    double lambda_lo = 0.5;
    double lambda_hi = 5.0;
    double lambda_step = 1e-3;
};

/// Smallest grid mu in [0, 1) for which some grid lambda passes lmi_check.
/// Reports feasible == false when no grid point in the contractive range
/// certifies a rate.
RateCertificate min_feasible_rate(const SectorBounds& bounds, const RateGrid& grid = {});

enum class ConvergenceClass { NewtonLike, FirstOrder, Mixed };
std::string to_string(ConvergenceClass c);

/// Reporting convention only: largest eigenvalue modulus below this is
/// called Newton-like, above kFirstOrderModulus first-order.
inline constexpr double kNewtonLikeModulus = 0.1;
inline constexpr double kFirstOrderModulus = 0.9;

ConvergenceClass classify(double max_modulus);

/// Finite-difference Jacobian of an update map at a feasible point.
///
/// Probes run along an orthonormal basis B of the feasible tangent space
/// (zero-sum alpha directions, every mean coordinate, symmetric covariance
/// directions), so every probe point stays a valid parameter set.
/// `reduced` = B^T J B is the Jacobian in those coordinates and carries the
/// eigenvalues; `J` = (J B) B^T is the same derivative in the full theta
/// layout, acting as zero on directions normal to the feasible set.
struct JacobianReport {
    Matrix J;
    Matrix basis;
    Matrix reduced;
    std::vector<double> moduli;  // descending
    ConvergenceClass classification = ConvergenceClass::Mixed;
};

using UpdateMap = std::function<ThetaVector(const GmmParams&)>;

/// Orthonormal basis of the feasible tangent space, one column per direction.
Matrix feasible_basis(const ThetaLayout& layout);

/// Central differences of `map` with absolute step fd_step. Probe failures
/// are rethrown with the probe index attached.
JacobianReport map_jacobian(const GmmParams& params, const UpdateMap& map, double fd_step);

/// Jacobian of the PB-GEM (or W-PB-GEM) update map.
JacobianReport update_map_jacobian(const GmmParams& params, const Dataset& data, const Algorithm& algorithm,
                                   double fd_step = 1e-6);

/// Sector bounds read off Jacobians sampled along a trajectory: the extreme
/// eigenvalues of the symmetrized I - reduced over all reports. Returns
/// nullopt when the smallest one is not positive.
std::optional<SectorBounds> estimate_sector_bounds(const std::vector<JacobianReport>& reports);

struct RateEstimate {
    std::optional<double> factor;  // per-iteration contraction
    std::string note;              // why the rate is undefined, if it is
};

/// Least-squares slope of log(L* - L(k)) over the final third of the
/// iterations, returned as exp(slope). L* defaults to the last recorded
/// log-likelihood. Undefined for fewer than 10 iterations, a non-monotone
/// tail, or a tail with fewer than three positive gaps.
RateEstimate empirical_rate(const RunTrace& trace, std::optional<double> terminal = std::nullopt);

nlohmann::json to_json(const RateCertificate& cert);
nlohmann::json to_json(const JacobianReport& report);

}  // namespace gemgmm
