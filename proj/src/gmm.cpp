#include "gemgmm/gmm.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace gemgmm {

namespace {

GmmError invalid(const std::string& what) { return GmmError(ErrorKind::InvalidArgument, what); }

// Row-wise log(sum(exp(row))). Rows that are entirely -inf yield -inf.
Vector log_sum_exp_rows(const Matrix& A) {
    Vector out(A.rows());
    for (Eigen::Index t = 0; t < A.rows(); ++t) {
        const double peak = A.row(t).maxCoeff();
        if (!std::isfinite(peak)) {
            out(t) = peak;
            continue;
        }
        out(t) = peak + std::log((A.row(t).array() - peak).exp().sum());
    }
    return out;
}

void require_same_dim(const GmmParams& params, const Dataset& data) {
    if (params.m() != data.m()) {
        throw GmmError(ErrorKind::DimensionMismatch,
                       "dataset has " + std::to_string(data.m()) + " columns, model expects " +
                           std::to_string(params.m()));
    }
}

class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace

double max_asymmetry(const Matrix& S) { return (S - S.transpose()).cwiseAbs().maxCoeff(); }

bool is_positive_definite(const Matrix& S) {
    Eigen::LLT<Matrix> llt(S);
    return llt.info() == Eigen::Success;
}

GmmParams::GmmParams(Vector alpha, std::vector<Vector> mu, std::vector<Matrix> sigma)
    : alpha_(std::move(alpha)), mu_(std::move(mu)), sigma_(std::move(sigma)) {
    const auto K = alpha_.size();
    if (K < 1) throw invalid("mixture needs at least one component");
    if (mu_.size() != static_cast<std::size_t>(K) || sigma_.size() != static_cast<std::size_t>(K)) {
        throw invalid("alpha, mu and sigma must list the same number of components");
    }
    const auto m = mu_.front().size();
    if (m < 1) throw invalid("data dimension must be positive");

    if (!alpha_.allFinite()) throw invalid("alpha has non-finite entries");
    for (Eigen::Index i = 0; i < K; ++i) {
        if (!(alpha_(i) > 0.0) || alpha_(i) > 1.0) {
            throw invalid("alpha[" + std::to_string(i) + "] = " + std::to_string(alpha_(i)) +
                          " outside (0, 1]");
        }
    }
    if (std::abs(alpha_.sum() - 1.0) > kSimplexTol) throw invalid("alpha does not sum to 1");

    chol_.reserve(K);
    log_det_2pi_.reserve(K);
    for (Eigen::Index j = 0; j < K; ++j) {
        if (mu_[j].size() != m || !mu_[j].allFinite()) {
            throw invalid("mu[" + std::to_string(j) + "] has wrong length or non-finite entries");
        }
        const Matrix& S = sigma_[j];
        if (S.rows() != m || S.cols() != m || !S.allFinite()) {
            throw invalid("sigma[" + std::to_string(j) + "] has wrong shape or non-finite entries");
        }
        if (max_asymmetry(S) > kSymmetryTol) {
            throw GmmError(ErrorKind::InvalidCovariance,
                           "sigma[" + std::to_string(j) + "] is not symmetric");
        }
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success) {
            throw GmmError(ErrorKind::InvalidCovariance,
                           "sigma[" + std::to_string(j) + "] is not positive definite");
        }
        Matrix L = llt.matrixL();
        const double log_det = 2.0 * L.diagonal().array().log().sum();
        chol_.push_back(std::move(L));
        log_det_2pi_.push_back(static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + log_det);
    }
}

bool GmmParams::operator==(const GmmParams& other) const {
    if (K() != other.K() || m() != other.m()) return false;
    if (alpha_ != other.alpha_) return false;
    for (int j = 0; j < K(); ++j) {
        if (mu_[j] != other.mu_[j] || sigma_[j] != other.sigma_[j]) return false;
    }
    return true;
}

ThetaVector flatten(const GmmParams& params) {
    const ThetaLayout layout = params.layout();
    Vector v(layout.size());
    v.head(layout.K) = params.alpha();
    for (int j = 0; j < layout.K; ++j) {
        v.segment(layout.mu_offset(j), layout.m) = params.mu(j);
        v.segment(layout.sigma_offset(j), layout.m * layout.m) =
            params.sigma(j).reshaped();  // column-major == vec()
    }
    return {layout, std::move(v)};
}

GmmParams unflatten(const ThetaVector& theta) {
    const ThetaLayout& layout = theta.layout;
    if (layout.K < 1 || layout.m < 1 || theta.values.size() != layout.size()) {
        throw GmmError(ErrorKind::DimensionMismatch, "theta vector does not match its layout");
    }
    std::vector<Vector> mu;
    std::vector<Matrix> sigma;
    for (int j = 0; j < layout.K; ++j) {
        mu.emplace_back(theta.values.segment(layout.mu_offset(j), layout.m));
        sigma.emplace_back(
            theta.values.segment(layout.sigma_offset(j), layout.m * layout.m).reshaped(layout.m, layout.m));
    }
    return GmmParams(theta.values.head(layout.K), std::move(mu), std::move(sigma));
}

Dataset::Dataset(Matrix samples) : X_(std::move(samples)) {
    if (X_.rows() < 1 || X_.cols() < 1) throw invalid("dataset must have at least one sample and one column");
    if (!X_.allFinite()) throw invalid("dataset contains non-finite values");
}

double component_density(const GmmParams& params, int j, const Eigen::Ref<const Vector>& x) {
    if (j < 0 || j >= params.K()) throw invalid("component index out of range");
    if (x.size() != params.m()) throw GmmError(ErrorKind::DimensionMismatch, "point has wrong dimension");
    const Vector z = params.chol_lower(j).triangularView<Eigen::Lower>().solve(x - params.mu(j));
    const double log_value =
        std::log(params.alpha()(j)) - 0.5 * params.log_det_2pi_sigma(j) - 0.5 * z.squaredNorm();
    const double value = std::exp(log_value);
    if (!(value > 0.0)) {
        throw GmmError(ErrorKind::NumericUnderflow,
                       "component density underflows (log value " + std::to_string(log_value) + ")");
    }
    return value;
}

Matrix log_joint(const GmmParams& params, const Dataset& data) {
    require_same_dim(params, data);
    Matrix out(data.N(), params.K());
    for (int j = 0; j < params.K(); ++j) {
        Matrix deviations = (data.X().rowwise() - params.mu(j).transpose()).transpose();
        params.chol_lower(j).triangularView<Eigen::Lower>().solveInPlace(deviations);
        out.col(j) = (std::log(params.alpha()(j)) - 0.5 * params.log_det_2pi_sigma(j)) -
                     0.5 * deviations.colwise().squaredNorm().transpose().array();
    }
    return out;
}

double log_likelihood(const GmmParams& params, const Dataset& data) {
    const Vector per_point = log_sum_exp_rows(log_joint(params, data));
    const double total = per_point.sum();
    if (!std::isfinite(total)) {
        throw GmmError(ErrorKind::NumericUnderflow, "mixture density underflows at some sample");
    }
    return total;
}

Responsibilities responsibilities(const GmmParams& params, const Dataset& data) {
    Matrix lj = log_joint(params, data);
    const Vector norm = log_sum_exp_rows(lj);
    if (!norm.allFinite()) {
        throw GmmError(ErrorKind::NumericUnderflow, "all components underflow at some sample");
    }
    lj.colwise() -= norm;
    return {lj.array().exp().matrix()};
}

double q_function(const GmmParams& theta, const GmmParams& theta_prev, const Dataset& data) {
    if (theta.layout() != theta_prev.layout()) {
        throw GmmError(ErrorKind::DimensionMismatch, "parameter sets have different layouts");
    }
    const Matrix H = responsibilities(theta_prev, data).H;
    const Matrix lj = log_joint(theta, data);
    double total = 0.0;
    for (Eigen::Index t = 0; t < H.rows(); ++t) {
        for (Eigen::Index j = 0; j < H.cols(); ++j) {
            if (H(t, j) > 0.0) total += H(t, j) * lj(t, j);
        }
    }
    if (!std::isfinite(total)) throw GmmError(ErrorKind::NumericUnderflow, "Q-function is not finite");
    return total;
}

Dataset sample(const GmmParams& params, int n, std::uint64_t seed) {
    if (n < 1) throw invalid("sample count must be at least 1");
    NormalStream stream(seed);
    const int K = params.K();
    const int m = params.m();
    Matrix X(n, m);
    Vector z(m);
    for (int t = 0; t < n; ++t) {
        const double u = stream.uniform();
        int j = 0;
        double cumulative = params.alpha()(0);
        while (j < K - 1 && !(u < cumulative)) {
            ++j;
            cumulative += params.alpha()(j);
        }
        for (int d = 0; d < m; ++d) z(d) = stream.normal();
        X.row(t) = (params.mu(j) + params.chol_lower(j) * z).transpose();
    }
    return Dataset(std::move(X));
}

}  // namespace gemgmm
