#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gemgmm/em.hpp"
#include "gemgmm/gmm.hpp"

namespace gemgmm {

/// Block-diagonal preconditioner P(theta) = diag[P_alpha, P_mu_1..P_mu_K, P_Sigma_1..P_Sigma_K]:
///
///   P_alpha   = (diag(alpha) - alpha alpha^T) / N
///   P_mu_j    = Sigma_j / n_j
///   P_Sigma_j = 2 (Sigma_j kron Sigma_j) / n_j
///
/// with n_j the responsibility mass of component j. The Sigma blocks are kept
/// implicit; apply() uses (S kron S) vec(G) = vec(S G S).
class Preconditioner {
public:
    Preconditioner(ThetaLayout layout, Matrix p_alpha, std::vector<Matrix> sigma, Vector mass);

    const ThetaLayout& layout() const { return layout_; }
    const Matrix& P_alpha() const { return p_alpha_; }
    Matrix P_mu(int j) const { return sigma_[j] / mass_(j); }
    /// Dense m^2 x m^2 Kronecker block.
    Matrix P_sigma(int j) const;

    /// P * g in block form.
    Vector apply(const Eigen::Ref<const Vector>& g) const;

    /// Dense (K + mK + m^2 K)-square matrix. Only analysis code needs this.
    Matrix assembled() const;

private:
    ThetaLayout layout_;
    Matrix p_alpha_;
    std::vector<Matrix> sigma_;
    Vector mass_;
};

Preconditioner build_preconditioner(const GmmParams& params, const Dataset& data);

/// E E^T for an orthonormal basis E of the zero-sum alpha subspace: centers the
/// alpha block and leaves the mu and Sigma blocks untouched. An alpha block
/// that already sums to zero up to roundoff is returned as is, so applying the
/// projection to its own output returns that output unchanged.
Vector apply_projection(const ThetaLayout& layout, const Eigen::Ref<const Vector>& v);

/// Per-component mean step scales beta_j > 0, i.e. D = diag(I_K, W, I) with
/// W = diag(beta_1 I_m, ..., beta_K I_m) and identity on the whole Sigma block.
class WeightDesign {
public:
    explicit WeightDesign(Vector betas);

    /// All-ones design (D = I).
    static WeightDesign uniform(int K);

    const Vector& betas() const { return betas_; }
    /// Diagonal of D in the theta layout.
    Vector diagonal(const ThetaLayout& layout) const;

private:
    Vector betas_;
};

/// E E^T D P(theta) grad L(theta); design == nullptr means D = I.
Vector gem_increment(const GmmParams& params, const Dataset& data, const WeightDesign* design = nullptr);

/// theta + increment, with the Sigma blocks symmetrized and the result
/// validated: SimplexViolation when some alpha_i <= 0 or the weights no
/// longer sum to 1, CovarianceViolation when a Sigma block is not PD.
GmmParams apply_increment(const GmmParams& params, const Vector& increment);

/// theta + E E^T P(theta) grad L(theta). Sigma blocks are symmetrized before
/// validation. Throws SimplexViolation when some alpha_i <= 0 or the weights
/// leave the simplex, CovarianceViolation when a Sigma block is not PD.
GmmParams pb_gem_step(const GmmParams& params, const Dataset& data);

/// theta + E E^T D P(theta) grad L(theta).
GmmParams w_pb_gem_step(const GmmParams& params, const Dataset& data, const WeightDesign& design);

enum class AlgorithmKind { Em, ShiftedEm, PbGem, WPbGem };

struct Algorithm {
    AlgorithmKind kind = AlgorithmKind::PbGem;
    std::optional<WeightDesign> design;  // required for WPbGem

    static Algorithm em() { return {AlgorithmKind::Em, std::nullopt}; }
    static Algorithm shifted_em() { return {AlgorithmKind::ShiftedEm, std::nullopt}; }
    static Algorithm pb_gem() { return {AlgorithmKind::PbGem, std::nullopt}; }
    static Algorithm w_pb_gem(WeightDesign design) { return {AlgorithmKind::WPbGem, std::move(design)}; }

    GmmParams step(const GmmParams& params, const Dataset& data) const;
};

/// "em", "shifted-em", "pb-gem", "w-pb-gem".
std::string to_string(AlgorithmKind kind);
AlgorithmKind parse_algorithm_kind(const std::string& name);

struct StopCriteria {
    double rel_ll_tol = 1e-10;
    int max_iters = 10000;
    /// Snapshot every this many iterations; 0 picks 1, or 10 once the layout
    /// exceeds 10^4 parameters.
    int snapshot_stride = 0;
};

enum class TerminationReason { Tolerance, MaxIterations };
std::string to_string(TerminationReason reason);

struct IterationRecord {
    int iteration = 0;
    double log_likelihood = 0.0;
    double step_norm = 0.0;
    double alpha_residual = 0.0;  // |sum(alpha) - 1|
    double sym_residual = 0.0;    // max_j max |Sigma_j - Sigma_j^T|
    std::optional<ThetaVector> snapshot;
};

struct RunTrace {
    double initial_log_likelihood = 0.0;
    std::optional<ThetaVector> initial_snapshot;
    std::vector<IterationRecord> records;
    int iterations = 0;
    TerminationReason reason = TerminationReason::MaxIterations;
    std::optional<GmmParams> final_params;
    double wall_seconds = 0.0;
};

/// Raised by run() when a step fails; carries the trace up to the failure.
class RunFailure : public GmmError {
public:
    RunFailure(const GmmError& cause, RunTrace partial)
        : GmmError(cause), partial_(std::move(partial)) {}
    const RunTrace& partial_trace() const { return partial_; }

private:
    RunTrace partial_;
};

/// Iterates the chosen update until |L(k+1) - L(k)| / |L(k)| < rel_ll_tol or
/// max_iters steps have been taken. Step failures are rethrown as RunFailure
/// with the (1-based) iteration index attached.
RunTrace run(const GmmParams& initial, const Dataset& data, const Algorithm& algorithm,
             const StopCriteria& stop);

}  // namespace gemgmm
