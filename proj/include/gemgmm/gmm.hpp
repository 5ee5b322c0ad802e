#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gemgmm/error.hpp"

namespace gemgmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerances for the parameter invariants.
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kSymmetryTol = 1e-12;

/// Fixes the block order of the flat parameter vector
///
///   theta = [alpha_1..alpha_K, mu_1 (m), ..., mu_K (m), vec(Sigma_1) (m*m), ..., vec(Sigma_K) (m*m)]
///
/// where vec() stacks the columns of a matrix (column-major order). Component
/// indices are zero-based throughout the library.
struct ThetaLayout {
    int K = 0;
    int m = 0;

    int size() const { return K + m * K + m * m * K; }
    int alpha_offset() const { return 0; }
    int mu_offset(int j) const { return K + j * m; }
    int sigma_offset(int j) const { return K + m * K + j * m * m; }

    bool operator==(const ThetaLayout&) const = default;
};

/// Mixture weights, means and covariances. Construction validates the simplex
/// and SPD invariants and caches one Cholesky factor per component, so an
/// instance is always usable for density evaluation.
class GmmParams {
public:
    /// Throws GmmError(InvalidArgument) for shape or simplex violations and
    /// GmmError(InvalidCovariance) when a covariance is asymmetric or not PD.
    GmmParams(Vector alpha, std::vector<Vector> mu, std::vector<Matrix> sigma);

    int K() const { return static_cast<int>(alpha_.size()); }
    int m() const { return static_cast<int>(mu_.front().size()); }
    ThetaLayout layout() const { return {K(), m()}; }

    const Vector& alpha() const { return alpha_; }
    const std::vector<Vector>& mu() const { return mu_; }
    const std::vector<Matrix>& sigma() const { return sigma_; }
    const Vector& mu(int j) const { return mu_[j]; }
    const Matrix& sigma(int j) const { return sigma_[j]; }

    /// Lower Cholesky factor of sigma(j).
    const Matrix& chol_lower(int j) const { return chol_[j]; }
    /// log det(2*pi*Sigma_j).
    double log_det_2pi_sigma(int j) const { return log_det_2pi_[j]; }

    /// Exact comparison of every stored value.
    bool operator==(const GmmParams& other) const;

private:
    Vector alpha_;
    std::vector<Vector> mu_;
    std::vector<Matrix> sigma_;
    std::vector<Matrix> chol_;
    std::vector<double> log_det_2pi_;
};

struct ThetaVector {
    ThetaLayout layout;
    Vector values;
};

ThetaVector flatten(const GmmParams& params);
/// Validates the result as GmmParams; throws on a size mismatch or an
/// invalid parameter set.
GmmParams unflatten(const ThetaVector& theta);

/// N x m sample matrix, one i.i.d. sample per row.
class Dataset {
public:
    explicit Dataset(Matrix samples);

    int N() const { return static_cast<int>(X_.rows()); }
    int m() const { return static_cast<int>(X_.cols()); }
    const Matrix& X() const { return X_; }
    auto row(int t) const { return X_.row(t); }

private:
    Matrix X_;
};

/// N x K posterior membership matrix; each row lies on the probability simplex.
struct Responsibilities {
    Matrix H;

    /// Per-component responsibility mass sum_t h_j(t).
    Vector mass() const { return H.colwise().sum().transpose(); }
};

/// Largest |S - S^T| entry.
double max_asymmetry(const Matrix& S);

/// True if S admits a Cholesky factorization.
bool is_positive_definite(const Matrix& S);

/// alpha_j * N(x; mu_j, Sigma_j). Throws NumericUnderflow when the value is
/// not representable as a positive double.
double component_density(const GmmParams& params, int j, const Eigen::Ref<const Vector>& x);

/// log(alpha_j) + log N(x; mu_j, Sigma_j) for every sample (rows) and
/// component (columns).
Matrix log_joint(const GmmParams& params, const Dataset& data);

double log_likelihood(const GmmParams& params, const Dataset& data);

Responsibilities responsibilities(const GmmParams& params, const Dataset& data);

/// sum_t sum_j h_j(t; theta_prev) * log(alpha_j p(x_t | mu_j, Sigma_j)) under theta.
double q_function(const GmmParams& theta, const GmmParams& theta_prev, const Dataset& data);

/// Draws n samples. The stream is fully specified so that a seed reproduces
/// the same dataset on any conforming platform:
///
///   * engine: std::mt19937_64 seeded with `seed`;
///   * uniform: u = (draw >> 11) * 2^-53, in [0, 1);
///   * component: smallest j with u < alpha_1 + ... + alpha_j (last component
///     absorbs any rounding gap);
///   * standard normals: Box-Muller on pairs (u1, u2) as
///     sqrt(-2 log(1 - u1)) * {cos, sin}(2 pi u2), consumed cosine first with
///     the sine value cached for the next request;
///   * sample: mu_j + L_j z with L_j the lower Cholesky factor of Sigma_j.
///
/// Per sample the component draw precedes the m normal draws.
Dataset sample(const GmmParams& params, int n, std::uint64_t seed);

}  // namespace gemgmm
