#ifndef NORMALNORM_ERRORS_HPP
#define NORMALNORM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace normalnorm {

// Bad values or files: non-finite inputs, out-of-image arguments,
// unnormalized samples, malformed CSV/IDX/checkpoints.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical degeneracy: zero/near-zero variance, singular covariance,
// flat curvature where an estimate is required.
class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace normalnorm

#endif
