#pragma once

#include <stdexcept>
#include <string>

namespace gldm {

/// Raised when an argument violates a documented precondition
/// (unsorted spectrum, dimension out of range, non-positive horizon, ...).
class precondition_error : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot produce a trustworthy result
/// (non-convergent eigensolver, indefinite covariance, singular remap).
class numeric_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration; names the key.
class config_error : public precondition_error {
  public:
    using precondition_error::precondition_error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw precondition_error(message);
    }
}

}  // namespace detail
}  // namespace gldm
