#pragma once

// Test-only reference implementations. They evaluate the textbook formulas
// term by term (explicit inverse and determinant, linear-space densities,
// per-sample loops) and share no code with the library's numerical paths.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "gemgmm/gmm.hpp"

namespace oracle {

using gemgmm::Matrix;
using gemgmm::Vector;

/// Raw parameters, no invariants enforced (alpha may leave the simplex,
/// sigma may be asymmetric).
struct RawParams {
    std::vector<double> alpha;
    std::vector<Vector> mu;
    std::vector<Matrix> sigma;
};

inline RawParams raw(const gemgmm::GmmParams& p) {
    RawParams r;
    for (int j = 0; j < p.K(); ++j) {
        r.alpha.push_back(p.alpha()(j));
        r.mu.push_back(p.mu(j));
        r.sigma.push_back(p.sigma(j));
    }
    return r;
}

inline double gaussian(const Vector& x, const Vector& mu, const Matrix& sigma) {
    const auto m = static_cast<double>(x.size());
    const Vector d = x - mu;
    const double quad = d.dot(sigma.inverse() * d);
    return std::exp(-0.5 * quad) / std::sqrt(std::pow(2.0 * std::numbers::pi, m) * sigma.determinant());
}

inline double weighted_density(const RawParams& p, int j, const Vector& x) {
    return p.alpha[j] * gaussian(x, p.mu[j], p.sigma[j]);
}

inline double log_likelihood(const RawParams& p, const Matrix& X) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        double mix = 0.0;
        for (std::size_t j = 0; j < p.alpha.size(); ++j) mix += weighted_density(p, static_cast<int>(j), X.row(t).transpose());
        total += std::log(mix);
    }
    return total;
}

inline Matrix responsibilities(const RawParams& p, const Matrix& X) {
    const auto K = static_cast<Eigen::Index>(p.alpha.size());
    Matrix H(X.rows(), K);
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        double mix = 0.0;
        for (Eigen::Index j = 0; j < K; ++j) {
            H(t, j) = weighted_density(p, static_cast<int>(j), X.row(t).transpose());
            mix += H(t, j);
        }
        H.row(t) /= mix;
    }
    return H;
}

inline double q_function(const RawParams& theta, const RawParams& prev, const Matrix& X) {
    const Matrix H = responsibilities(prev, X);
    double total = 0.0;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        for (Eigen::Index j = 0; j < H.cols(); ++j) {
            total += H(t, j) * std::log(weighted_density(theta, static_cast<int>(j), X.row(t).transpose()));
        }
    }
    return total;
}

/// Closed-form EM update by explicit per-sample sums; `shifted` takes the
/// covariance about the previous mean.
inline RawParams em_update(const RawParams& p, const Matrix& X, bool shifted) {
    const Matrix H = responsibilities(p, X);
    RawParams out;
    const auto m = X.cols();
    for (Eigen::Index j = 0; j < H.cols(); ++j) {
        double n = 0.0;
        Vector s = Vector::Zero(m);
        for (Eigen::Index t = 0; t < X.rows(); ++t) {
            n += H(t, j);
            s += H(t, j) * X.row(t).transpose();
        }
        const Vector mean = s / n;
        const Vector& center = shifted ? p.mu[j] : mean;
        Matrix S = Matrix::Zero(m, m);
        for (Eigen::Index t = 0; t < X.rows(); ++t) {
            const Vector z = X.row(t).transpose() - center;
            S += H(t, j) * z * z.transpose();
        }
        out.alpha.push_back(n / static_cast<double>(X.rows()));
        out.mu.push_back(mean);
        out.sigma.push_back(S / n);
    }
    return out;
}

/// Flat theta in the library layout, built independently.
inline Vector flat(const RawParams& p) {
    const auto K = static_cast<int>(p.alpha.size());
    const auto m = static_cast<int>(p.mu.front().size());
    Vector v(K + m * K + m * m * K);
    int at = 0;
    for (double a : p.alpha) v(at++) = a;
    for (const auto& mu : p.mu) for (int d = 0; d < m; ++d) v(at++) = mu(d);
    for (const auto& S : p.sigma) for (int c = 0; c < m; ++c) for (int r = 0; r < m; ++r) v(at++) = S(r, c);
    return v;
}

/// Random valid parameters: Dirichlet-like weights bounded away from zero,
/// means in [-2, 2], covariances A A^T + 0.3 I.
inline gemgmm::GmmParams random_params(std::mt19937_64& rng, int K, int m) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector alpha(K);
    for (int j = 0; j < K; ++j) alpha(j) = 0.5 + unit(rng);
    alpha /= alpha.sum();
    std::vector<Vector> mu;
    std::vector<Matrix> sigma;
    for (int j = 0; j < K; ++j) {
        Vector v(m);
        for (int d = 0; d < m; ++d) v(d) = 4.0 * unit(rng) - 2.0;
        mu.push_back(v);
        Matrix A(m, m);
        for (int r = 0; r < m; ++r) for (int c = 0; c < m; ++c) A(r, c) = unit(rng) - 0.5;
        Matrix S = A * A.transpose() + 0.3 * Matrix::Identity(m, m);
        S = 0.5 * (S + S.transpose());
        sigma.push_back(S);
    }
    return gemgmm::GmmParams(alpha, mu, sigma);
}

/// Random instance: data drawn from one random model, parameters from another.
struct Instance {
    gemgmm::GmmParams params;
    gemgmm::Dataset data;
};

inline Instance random_instance(std::mt19937_64& rng, int K, int m, int N) {
    const gemgmm::GmmParams truth = random_params(rng, K, m);
    gemgmm::Dataset data = gemgmm::sample(truth, N, rng());
    return {random_params(rng, K, m), std::move(data)};
}

inline double rel_err(const Vector& got, const Vector& want) {
    return (got - want).norm() / std::max(want.norm(), 1e-300);
}

}  // namespace oracle
