#pragma once

#include <stdexcept>
#include <string>

namespace pardec {

/// Invalid input: bad parameters, unknown labels, constraint violations.
/// Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation ran but its result cannot be trusted (symplecticity lost,
/// Fock leakage, positivity drift). Maps to CLI exit code 2.
class NumericalTrustError : public std::runtime_error {
public:
    explicit NumericalTrustError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

}  // namespace detail
}  // namespace pardec
