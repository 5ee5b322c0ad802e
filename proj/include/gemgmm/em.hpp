#pragma once

#include "gemgmm/gmm.hpp"

namespace gemgmm {

/// Components whose responsibility mass falls below this fraction of N are
/// treated as degenerate.
inline constexpr double kDegenerateMassFraction = 1e-12;

/// dL/dtheta in the ThetaVector layout:
///   dL/dalpha_j      = sum_t h_j(t) / alpha_j   (unconstrained partial)
///   dL/dmu_j         = Sigma_j^-1 sum_t h_j(t) (x_t - mu_j)
///   dL/dvec(Sigma_j) = 1/2 vec(Sigma_j^-1 M_j Sigma_j^-1 - n_j Sigma_j^-1)
/// with n_j = sum_t h_j(t) and M_j = sum_t h_j(t) (x_t - mu_j)(x_t - mu_j)^T.
/// The Sigma partials treat all m*m entries as free coordinates.
struct GradientVector {
    ThetaLayout layout;
    Vector values;
};

/// Responsibility mass per component. Throws DegenerateComponent when some
/// component's mass is below kDegenerateMassFraction * N.
Vector checked_component_mass(const Responsibilities& resp);

/// Classic EM: closed-form M-step with covariance deviations about the new mean.
GmmParams em_step(const GmmParams& params, const Dataset& data);

/// EM with the covariance update taken about the previous mean mu_j^(k).
GmmParams shifted_em_step(const GmmParams& params, const Dataset& data);

GradientVector grad_log_likelihood(const GmmParams& params, const Dataset& data);

/// theta + eta * grad L(theta), returned raw. No constraint is enforced, so
/// the alpha block drifts off the simplex and Sigma blocks may lose
/// definiteness; this is the unconstrained baseline update.
ThetaVector grad_ascent_gem_step(const GmmParams& params, const Dataset& data, double eta);

}  // namespace gemgmm
