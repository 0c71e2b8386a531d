#pragma once

#include <stdexcept>
#include <string>

namespace sas {

// Bad user input: malformed config files, out-of-range parameters,
// mismatched layouts. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure detected while computing: integrator guards, zero denominators,
// non-convergent fits. CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// A reproduction target ran but an expected property of its output did not
// hold. CLI maps this to exit code 4.
class AcceptanceError : public std::runtime_error {
  public:
    explicit AcceptanceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sas
