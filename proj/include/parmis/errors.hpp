#pragma once

#include <stdexcept>
#include <string>

namespace parmis {

/// Violated precondition on caller-supplied data (dimension mismatch, empty input, bad file).
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Linear algebra failed even after jitter escalation.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Optimization loop aborted (e.g. too many consecutive evaluation failures).
class RunError : public std::runtime_error {
public:
    explicit RunError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace parmis
