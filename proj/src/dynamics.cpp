#include "gemgmm/dynamics.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace gemgmm {

namespace {

Matrix kronecker(const Matrix& A, const Matrix& B) {
    Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        }
    }
    return out;
}

double max_sigma_asymmetry(const GmmParams& params) {
    double worst = 0.0;
    for (const Matrix& S : params.sigma()) worst = std::max(worst, max_asymmetry(S));
    return worst;
}

}  // namespace

GmmParams apply_increment(const GmmParams& params, const Vector& increment) {
    const ThetaLayout layout = params.layout();
    if (increment.size() != layout.size()) {
        throw GmmError(ErrorKind::DimensionMismatch, "increment does not match the theta layout");
    }
    ThetaVector next = flatten(params);
    next.values += increment;

    const auto alpha = next.values.head(layout.K);
    for (int i = 0; i < layout.K; ++i) {
        if (!(alpha(i) > 0.0)) {
            throw GmmError(ErrorKind::SimplexViolation,
                           "alpha[" + std::to_string(i) + "] = " + std::to_string(alpha(i)) +
                               " left the simplex");
        }
    }
    if (!(std::abs(alpha.sum() - 1.0) <= kSimplexTol)) {
        throw GmmError(ErrorKind::SimplexViolation, "alpha no longer sums to 1");
    }

    const int mm = layout.m * layout.m;
    for (int j = 0; j < layout.K; ++j) {
        auto block = next.values.segment(layout.sigma_offset(j), mm).reshaped(layout.m, layout.m);
        const Matrix S = block;
        block = 0.5 * (S + S.transpose());
        if (!is_positive_definite(block)) {
            throw GmmError(ErrorKind::CovarianceViolation,
                           "sigma[" + std::to_string(j) + "] is no longer positive definite");
        }
    }
    return unflatten(next);
}

Preconditioner::Preconditioner(ThetaLayout layout, Matrix p_alpha, std::vector<Matrix> sigma, Vector mass)
    : layout_(layout), p_alpha_(std::move(p_alpha)), sigma_(std::move(sigma)), mass_(std::move(mass)) {}

Matrix Preconditioner::P_sigma(int j) const { return (2.0 / mass_(j)) * kronecker(sigma_[j], sigma_[j]); }

Vector Preconditioner::apply(const Eigen::Ref<const Vector>& g) const {
    if (g.size() != layout_.size()) {
        throw GmmError(ErrorKind::DimensionMismatch, "gradient does not match the preconditioner layout");
    }
    const int K = layout_.K;
    const int m = layout_.m;
    Vector out(g.size());
    out.head(K) = p_alpha_ * g.head(K);
    for (int j = 0; j < K; ++j) {
        out.segment(layout_.mu_offset(j), m) = (sigma_[j] * g.segment(layout_.mu_offset(j), m)) / mass_(j);
        const Matrix G = g.segment(layout_.sigma_offset(j), m * m).reshaped(m, m);
        out.segment(layout_.sigma_offset(j), m * m) =
            ((2.0 / mass_(j)) * (sigma_[j] * G * sigma_[j])).reshaped();
    }
    return out;
}

Matrix Preconditioner::assembled() const {
    const int K = layout_.K;
    const int m = layout_.m;
    Matrix P = Matrix::Zero(layout_.size(), layout_.size());
    P.topLeftCorner(K, K) = p_alpha_;
    for (int j = 0; j < K; ++j) {
        P.block(layout_.mu_offset(j), layout_.mu_offset(j), m, m) = P_mu(j);
        P.block(layout_.sigma_offset(j), layout_.sigma_offset(j), m * m, m * m) = P_sigma(j);
    }
    return P;
}

Preconditioner build_preconditioner(const GmmParams& params, const Dataset& data) {
    const Vector mass = checked_component_mass(responsibilities(params, data));
    const Vector& alpha = params.alpha();
    Matrix p_alpha = (Matrix(alpha.asDiagonal()) - alpha * alpha.transpose()) / static_cast<double>(data.N());
    return Preconditioner(params.layout(), std::move(p_alpha), params.sigma(), mass);
}

Vector apply_projection(const ThetaLayout& layout, const Eigen::Ref<const Vector>& v) {
    if (v.size() != layout.size()) {
        throw GmmError(ErrorKind::DimensionMismatch, "vector does not match the theta layout");
    }
    Vector out = v;
    auto alpha = out.head(layout.K);
    // A block whose sum is already at roundoff level counts as centered, which
    // makes the projection exactly idempotent in floating point.
    auto centered = [&] {
        const double scale = alpha.size() == 0 ? 0.0 : alpha.cwiseAbs().maxCoeff();
        return std::abs(alpha.sum()) <= 8.0 * layout.K * std::numeric_limits<double>::epsilon() * scale;
    };
    for (int pass = 0; pass < 4 && !centered(); ++pass) alpha.array() -= alpha.mean();
    return out;
}

WeightDesign::WeightDesign(Vector betas) : betas_(std::move(betas)) {
    if (betas_.size() < 1) throw GmmError(ErrorKind::InvalidArgument, "weight design needs at least one beta");
    for (Eigen::Index i = 0; i < betas_.size(); ++i) {
        if (!(betas_(i) > 0.0) || !std::isfinite(betas_(i))) {
            throw GmmError(ErrorKind::InvalidArgument, "beta values must be positive and finite");
        }
    }
}

WeightDesign WeightDesign::uniform(int K) { return WeightDesign(Vector::Ones(K)); }

Vector WeightDesign::diagonal(const ThetaLayout& layout) const {
    if (betas_.size() != layout.K) {
        throw GmmError(ErrorKind::DimensionMismatch, "beta vector length must equal K");
    }
    Vector d = Vector::Ones(layout.size());
    for (int j = 0; j < layout.K; ++j) d.segment(layout.mu_offset(j), layout.m).setConstant(betas_(j));
    return d;
}

Vector gem_increment(const GmmParams& params, const Dataset& data, const WeightDesign* design) {
    const Preconditioner P = build_preconditioner(params, data);
    Vector step = P.apply(grad_log_likelihood(params, data).values);
    if (design != nullptr) step.array() *= design->diagonal(params.layout()).array();
    return apply_projection(params.layout(), step);
}

GmmParams pb_gem_step(const GmmParams& params, const Dataset& data) {
    return apply_increment(params, gem_increment(params, data));
}

GmmParams w_pb_gem_step(const GmmParams& params, const Dataset& data, const WeightDesign& design) {
    return apply_increment(params, gem_increment(params, data, &design));
}

GmmParams Algorithm::step(const GmmParams& params, const Dataset& data) const {
    switch (kind) {
        case AlgorithmKind::Em: return em_step(params, data);
        case AlgorithmKind::ShiftedEm: return shifted_em_step(params, data);
        case AlgorithmKind::PbGem: return pb_gem_step(params, data);
        case AlgorithmKind::WPbGem:
            if (!design) throw GmmError(ErrorKind::InvalidArgument, "w-pb-gem requires a weight design");
            return w_pb_gem_step(params, data, *design);
    }
    throw GmmError(ErrorKind::InvalidArgument, "unknown algorithm");
}

std::string to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::Em: return "em";
        case AlgorithmKind::ShiftedEm: return "shifted-em";
        case AlgorithmKind::PbGem: return "pb-gem";
        case AlgorithmKind::WPbGem: return "w-pb-gem";
    }
    return "unknown";
}

AlgorithmKind parse_algorithm_kind(const std::string& name) {
    for (auto kind : {AlgorithmKind::Em, AlgorithmKind::ShiftedEm, AlgorithmKind::PbGem, AlgorithmKind::WPbGem}) {
        if (to_string(kind) == name) return kind;
    }
    throw GmmError(ErrorKind::InvalidArgument, "unknown algorithm '" + name + "'");
}

std::string to_string(TerminationReason reason) {
    return reason == TerminationReason::Tolerance ? "tolerance" : "max_iters";
}

RunTrace run(const GmmParams& initial, const Dataset& data, const Algorithm& algorithm, const StopCriteria& stop) {
    if (!(stop.rel_ll_tol > 0.0)) throw GmmError(ErrorKind::InvalidArgument, "rel_ll_tol must be positive");
    if (stop.max_iters < 1) throw GmmError(ErrorKind::InvalidArgument, "max_iters must be at least 1");
    if (stop.snapshot_stride < 0) throw GmmError(ErrorKind::InvalidArgument, "snapshot stride must be >= 0");

    const auto started = std::chrono::steady_clock::now();
    const int stride = stop.snapshot_stride > 0 ? stop.snapshot_stride
                                                 : (initial.layout().size() > 10000 ? 10 : 1);

    RunTrace trace;
    trace.initial_log_likelihood = log_likelihood(initial, data);
    trace.initial_snapshot = flatten(initial);

    GmmParams current = initial;
    ThetaVector current_flat = flatten(initial);
    double current_ll = trace.initial_log_likelihood;

    for (int k = 1; k <= stop.max_iters; ++k) {
        try {
            GmmParams next = algorithm.step(current, data);
            const double next_ll = log_likelihood(next, data);
            ThetaVector next_flat = flatten(next);

            IterationRecord rec;
            rec.iteration = k;
            rec.log_likelihood = next_ll;
            rec.step_norm = (next_flat.values - current_flat.values).norm();
            rec.alpha_residual = std::abs(next.alpha().sum() - 1.0);
            rec.sym_residual = max_sigma_asymmetry(next);
            if (k % stride == 0) rec.snapshot = next_flat;
            trace.records.push_back(std::move(rec));

            const double change = std::abs(next_ll - current_ll) / std::abs(current_ll);
            current = std::move(next);
            current_flat = std::move(next_flat);
            current_ll = next_ll;
            trace.iterations = k;
            if (change < stop.rel_ll_tol) {
                trace.reason = TerminationReason::Tolerance;
                break;
            }
        } catch (const GmmError& e) {
            trace.final_params = current;
            trace.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            throw RunFailure(e.at_index(k, "iteration"), std::move(trace));
        }
    }
    trace.final_params = current;
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return trace;
}

}  // namespace gemgmm
