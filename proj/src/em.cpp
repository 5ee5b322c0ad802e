#include "gemgmm/em.hpp"

#include <string>

namespace gemgmm {

namespace {

// Builds the stepped parameter set, reporting an indefinite covariance as a
// constraint violation of the iteration rather than as bad input.
GmmParams assemble(Vector alpha, std::vector<Vector> mu, std::vector<Matrix> sigma) {
    try {
        return GmmParams(std::move(alpha), std::move(mu), std::move(sigma));
    } catch (const GmmError& e) {
        if (e.kind() == ErrorKind::InvalidCovariance) {
            throw GmmError(ErrorKind::CovarianceViolation, e.what());
        }
        throw;
    }
}

// Weighted scatter sum_t h(t) (x_t - center)(x_t - center)^T.
Matrix weighted_scatter(const Matrix& X, const Eigen::Ref<const Vector>& h, const Vector& center) {
    const Matrix deviations = X.rowwise() - center.transpose();
    return deviations.transpose() * (deviations.array().colwise() * h.array()).matrix();
}

GmmParams closed_form_step(const GmmParams& params, const Dataset& data, bool shifted) {
    const Responsibilities resp = responsibilities(params, data);
    const Vector mass = checked_component_mass(resp);
    const int K = params.K();
    const double N = data.N();

    Vector alpha = mass / N;
    std::vector<Vector> mu;
    std::vector<Matrix> sigma;
    for (int j = 0; j < K; ++j) {
        const auto h = resp.H.col(j);
        Vector mean = (data.X().transpose() * h) / mass(j);
        const Vector& center = shifted ? params.mu(j) : mean;
        sigma.push_back(weighted_scatter(data.X(), h, center) / mass(j));
        mu.push_back(std::move(mean));
    }
    return assemble(std::move(alpha), std::move(mu), std::move(sigma));
}

}  // namespace

Vector checked_component_mass(const Responsibilities& resp) {
    const Vector mass = resp.mass();
    const double floor = kDegenerateMassFraction * static_cast<double>(resp.H.rows());
    for (Eigen::Index j = 0; j < mass.size(); ++j) {
        if (!(mass(j) >= floor)) {
            throw GmmError(ErrorKind::DegenerateComponent,
                           "component " + std::to_string(j) + " has responsibility mass " +
                               std::to_string(mass(j)));
        }
    }
    return mass;
}

GmmParams em_step(const GmmParams& params, const Dataset& data) {
    return closed_form_step(params, data, false);
}

GmmParams shifted_em_step(const GmmParams& params, const Dataset& data) {
    return closed_form_step(params, data, true);
}

GradientVector grad_log_likelihood(const GmmParams& params, const Dataset& data) {
    const Responsibilities resp = responsibilities(params, data);
    const ThetaLayout layout = params.layout();
    const Vector mass = resp.mass();
    Vector g(layout.size());

    g.head(layout.K) = mass.cwiseQuotient(params.alpha());
    for (int j = 0; j < layout.K; ++j) {
        const auto h = resp.H.col(j);
        const Eigen::LLT<Matrix> llt(params.sigma(j));
        if (llt.info() != Eigen::Success) {
            throw GmmError(ErrorKind::InvalidCovariance, "sigma[" + std::to_string(j) + "] is singular");
        }
        const Vector residual_sum = data.X().transpose() * h - mass(j) * params.mu(j);
        g.segment(layout.mu_offset(j), layout.m) = llt.solve(residual_sum);

        const Matrix sigma_inv = llt.solve(Matrix::Identity(layout.m, layout.m));
        const Matrix scatter = weighted_scatter(data.X(), h, params.mu(j));
        const Matrix block = 0.5 * (sigma_inv * scatter * sigma_inv - mass(j) * sigma_inv);
        g.segment(layout.sigma_offset(j), layout.m * layout.m) = block.reshaped();
    }
    return {layout, std::move(g)};
}

ThetaVector grad_ascent_gem_step(const GmmParams& params, const Dataset& data, double eta) {
    if (!(eta > 0.0)) throw GmmError(ErrorKind::InvalidArgument, "step size must be positive");
    const GradientVector grad = grad_log_likelihood(params, data);
    ThetaVector theta = flatten(params);
    theta.values += eta * grad.values;
    return theta;
}

}  // namespace gemgmm
