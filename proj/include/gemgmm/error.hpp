#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace gemgmm {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    InvalidCovariance,
    NumericUnderflow,
    DegenerateComponent,
    SimplexViolation,
    CovarianceViolation,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Structured failure raised by every library operation. Carries the kind so
/// callers (the CLI in particular) can map it to an exit code, and optionally
/// the iteration or probe index at which it surfaced.
class GmmError : public std::runtime_error {
public:
    GmmError(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::optional<long>& index() const noexcept { return index_; }

    /// Returns a copy with the index attached and the message prefixed.
    GmmError at_index(long index, const std::string& label) const;

    /// True for failures of the numerical iteration itself (as opposed to bad
    /// input or I/O).
    bool numerical() const noexcept;

private:
    ErrorKind kind_;
    std::optional<long> index_;
};

}  // namespace gemgmm
