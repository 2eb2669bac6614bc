#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fracstab {

struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Adaptive quadrature gave up; `estimate` is the best error bound reached.
struct AccuracyError : std::runtime_error {
    double value;
    double estimate;
    AccuracyError(const std::string& what, double value_, double estimate_)
        : std::runtime_error(what), value(value_), estimate(estimate_) {}
};

struct ConvergenceError : std::runtime_error {
    std::vector<double> history;
    ConvergenceError(const std::string& what, std::vector<double> h)
        : std::runtime_error(what), history(std::move(h)) {}
};

struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fracstab
