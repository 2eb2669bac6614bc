#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace fracstab {

enum class Regime { Low, Critical, High };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::Low: return "low";
    case Regime::Critical: return "critical";
    case Regime::High: return "high";
    }
    return "?";
}

struct SobolevParams {
    int n = 1;
    double s = 0.25;
    double p = 3.0;
    double alpha_ns = 0.0;
    double gamma_ns = 0.0;
    Regime regime = Regime::Low;

    // (n - 2s)/2, the decay exponent of the bubble
    double e() const { return 0.5 * (n - 2.0 * s); }
};

inline SobolevParams make_params(int n, double s) {
    if (n < 1 || n > 3)
        throw PreconditionError("make_params: n must be 1, 2 or 3");
    if (!(s > 0.0) || !(2.0 * s < n))
        throw PreconditionError("make_params: s must lie in (0, n/2)");

    SobolevParams P;
    P.n = n;
    P.s = s;
    const double a = 0.5 * (n + 2.0 * s), b = 0.5 * (n - 2.0 * s);

    // n = 6s is decided with a relative tolerance so that s = 1/6 in binary lands on it
    if (std::abs(n - 6.0 * s) <= 1e-12 * n) {
        P.regime = Regime::Critical;
        P.p = 2.0;
    } else {
        P.p = a / b;
        P.regime = P.p > 2.0 ? Regime::Low : Regime::High;
    }

    const double lg = std::lgamma(a) - std::lgamma(b);
    P.alpha_ns = std::pow(2.0, b) * std::exp(lg * b / (2.0 * s));
    P.gamma_ns = std::tgamma(b) /
                 (std::pow(std::numbers::pi, 0.5 * n) * std::pow(2.0, 2.0 * s) * std::tgamma(s));
    return P;
}

} // namespace fracstab
