#include "gemgmm/error.hpp"

namespace gemgmm {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::InvalidCovariance: return "invalid-covariance";
        case ErrorKind::NumericUnderflow: return "numeric-underflow";
        case ErrorKind::DegenerateComponent: return "degenerate-component";
        case ErrorKind::SimplexViolation: return "simplex-violation";
        case ErrorKind::CovarianceViolation: return "covariance-violation";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

GmmError GmmError::at_index(long index, const std::string& label) const {
    GmmError copy(kind_, label + " " + std::to_string(index) + ": " + what());
    copy.index_ = index;
    return copy;
}

bool GmmError::numerical() const noexcept {
    switch (kind_) {
        case ErrorKind::InvalidCovariance:
        case ErrorKind::NumericUnderflow:
        case ErrorKind::DegenerateComponent:
        case ErrorKind::SimplexViolation:
        case ErrorKind::CovarianceViolation:
            return true;
        default:
            return false;
    }
}

}  // namespace gemgmm
