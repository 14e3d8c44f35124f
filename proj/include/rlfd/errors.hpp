#pragma once

#include <stdexcept>
#include <string>

namespace rlfd {

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a least-squares fit is numerically meaningless.
class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, double condition_number, double spatial_extent)
        : std::runtime_error(what), condition_number_(condition_number), spatial_extent_(spatial_extent) {}

    double condition_number() const { return condition_number_; }
    double spatial_extent() const { return spatial_extent_; }

private:
    double condition_number_;
    double spatial_extent_;
};

/// Angle-axis rotation with a non-zero angle but a (numerically) zero axis.
class DegenerateAxisError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Dense reward evaluated at or inside its singular radius.
class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Gradient step produced non-finite values and was rolled back.
class NonFiniteUpdate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File or directory could not be read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rlfd
