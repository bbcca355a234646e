#pragma once

#include <stdexcept>
#include <string>

namespace exin {

// Invalid inputs, configuration, or file contents. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: explosive simulations, non-finite likelihoods. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace exin
