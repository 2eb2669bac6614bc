#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bubble.hpp"
#include "grid.hpp"

namespace fracstab {

template <class G>
Field<G> bubble_field(std::shared_ptr<const G> g, const SobolevParams& P, const BubbleParams& b) {
    return sample(g, [&](const Point& x) { return bubble_value(P, b, x); });
}

template <class G>
Field<G> kernel_field(std::shared_ptr<const G> g, const SobolevParams& P, const BubbleParams& b, int a) {
    return sample(g, [&](const Point& x) { return z_deriv_value(P, b, a, x); });
}

template <class G>
Field<G> bubble_sum(std::shared_ptr<const G> g, const BubbleConfig& C) {
    Field<G> s(g);
    for (const auto& b : C.bubbles) s += bubble_field(g, C.params, b);
    return s;
}

// (sum u_i)^p - sum u_i^p for nonnegative profiles, written around the dominant
// profile so that the far field keeps its relative accuracy.
template <class G>
Field<G> interaction_error(const std::vector<Field<G>>& parts, double p) {
    Field<G> out(parts.front().grid);
    for (size_t j = 0; j < out.size(); ++j) {
        double m = 0, tot = 0, pw = 0;
        for (const auto& f : parts) {
            const double v = std::max(0.0, f.v[j]);
            m = std::max(m, v);
            tot += v;
            pw += std::pow(v, p);
        }
        if (m <= 0) continue;
        const double t = (tot - m) / m;
        // sigma^p - m^p - (others)^p
        out.v[j] = std::pow(m, p) * std::expm1(p * std::log1p(t)) - (pw - std::pow(m, p));
    }
    return out;
}

template <class G>
Field<G> gamma_residual(const Field<G>& u, const SobolevParams& P) {
    return fractional_laplacian(u, P.s) - signed_power(u, P.p);
}

template <class G>
double gamma_deficit(const Field<G>& u, const SobolevParams& P) {
    return hminus_s_norm(gamma_residual(u, P), P.s);
}

template <class G>
double sobolev_extremal_constant(const SobolevParams& P, std::shared_ptr<const G> g,
                                 const BubbleParams& b = {}) {
    auto U = bubble_field(g, P, b);
    return hs_norm(U, P.s) / lp_norm(U, P.p + 1.0);
}

template <class G>
double sobolev_deficit(const Field<G>& u, const SobolevParams& P, double S) {
    const double h = hs_norm(u, P.s), l = lp_norm(u, P.p + 1.0);
    return h * h - S * S * l * l;
}

struct DeficitReport {
    double gamma = 0;
    double sobolev_deficit = 0;
    double S_numeric = 0;
    std::vector<BubbleParams> fitted;
    double residual_hs = 0;
    std::map<std::string, double> notes; // error bars and diagnostics

    std::string to_kv(int n = 1) const {
        std::ostringstream os;
        os.precision(12);
        os << "gamma = " << gamma << '\n'
           << "sobolev_deficit = " << sobolev_deficit << '\n'
           << "S_numeric = " << S_numeric << '\n'
           << "residual_hs = " << residual_hs << '\n'
           << "bubbles = " << fitted.size() << '\n';
        for (size_t i = 0; i < fitted.size(); ++i) {
            os << "bubble" << i << ".lambda = " << fitted[i].lambda << '\n';
            for (int k = 0; k < n; ++k) os << "bubble" << i << ".z" << k << " = " << fitted[i].z[k] << '\n';
        }
        for (const auto& [k, v] : notes) os << k << " = " << v << '\n';
        return os.str();
    }
};

enum class NormKind { Star, DoubleStar };

struct WeightedNormEval {
    double value = 0;
    Point argmax_point{0, 0, 0};
    Regime regime = Regime::High;
};

namespace detail {

// weight contribution of bubble i at x; side = 0 uses the indicator, -1/+1 force in/out
inline double weight_piece(const BubbleConfig& C, NormKind kind, int i, const Point& x, int side) {
    const auto& P = C.params;
    const double s = P.s, n = P.n, R = C.R_min;
    const auto& b = C.bubbles[i];
    const double y = b.lambda * std::sqrt(dist2(x, b.z, P.n));
    const double br = std::sqrt(1.0 + y * y);
    const bool crit = P.regime == Regime::Critical;
    const double cut = crit ? R * R : R;
    const bool inside = side == 0 ? y < cut : side < 0;
    if (!crit) {
        if (kind == NormKind::DoubleStar)
            return std::pow(b.lambda, (n + 2 * s) / 2) *
                   (inside ? std::pow(R, 2 * s - n) * std::pow(br, -4 * s)
                           : std::pow(R, -4 * s) * std::pow(y, -(n - 2 * s)));
        return std::pow(b.lambda, (n - 2 * s) / 2) *
               (inside ? std::pow(R, 2 * s - n) * std::pow(br, -2 * s)
                       : std::pow(R, -4 * s) * std::pow(y, -(n - 4 * s)));
    }
    if (kind == NormKind::DoubleStar)
        return std::pow(b.lambda, 4 * s) *
               (inside ? std::pow(R, -4 * s) * std::pow(br, -4 * s) : std::pow(R, -2 * s) * std::pow(y, -5 * s));
    return std::pow(b.lambda, 2 * s) *
           (inside ? std::pow(R, -4 * s) * std::pow(br, -2 * s) : std::pow(R, -2 * s) * std::pow(y, -3 * s));
}

inline std::vector<Point> sphere_points(int n, const Point& c, double r, int count) {
    std::vector<Point> pts;
    if (n == 1) {
        pts.push_back({c[0] - r, 0, 0});
        pts.push_back({c[0] + r, 0, 0});
        return pts;
    }
    for (int k = 0; k < count; ++k) {
        Point x = c;
        if (n == 2) {
            const double t = 2 * std::numbers::pi * k / count;
            x[0] += r * std::cos(t);
            x[1] += r * std::sin(t);
        } else {
            const double zz = 1.0 - 2.0 * (k + 0.5) / count;
            const double rho = std::sqrt(1 - zz * zz);
            const double t = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
            x[0] += r * rho * std::cos(t);
            x[1] += r * rho * std::sin(t);
            x[2] += r * zz;
        }
        pts.push_back(x);
    }
    return pts;
}

} // namespace detail

// V (DoubleStar) or W (Star) at x
inline double weight_value(const BubbleConfig& C, NormKind kind, const Point& x) {
    double w = 0;
    for (int i = 0; i < C.nu(); ++i) w += detail::weight_piece(C, kind, i, x, 0);
    return w;
}

template <class G>
Field<G> weight_field(std::shared_ptr<const G> g, const BubbleConfig& C, NormKind kind) {
    return sample(g, [&](const Point& x) { return weight_value(C, kind, x); });
}

inline void require_weighted_regime(const BubbleConfig& C) {
    if (C.params.regime == Regime::Low)
        throw PreconditionError("weighted_norms: low regime uses the H^s and L^{2n/(n+2s)} norms");
    if (!std::isfinite(C.R_min))
        throw PreconditionError("weighted_norms: need at least two bubbles to define R");
}

// sup |g| / weight over grid points and over the cutoff spheres, where both one-sided
// weights are tried. Off-grid values come from `eval` when given, otherwise from the
// nearest grid sample.
template <class G>
WeightedNormEval weighted_norms(const Field<G>& g, const BubbleConfig& C, NormKind kind,
                                const std::function<double(const Point&)>& eval = {}) {
    require_weighted_regime(C);
    WeightedNormEval out;
    out.regime = C.params.regime;
    const auto& grid = *g.grid;
    const int n = C.params.n;
    for (size_t j = 0; j < g.size(); ++j) {
        const Point x = grid.point(j);
        const double r = std::abs(g.v[j]) / weight_value(C, kind, x);
        if (r > out.value) {
            out.value = r;
            out.argmax_point = x;
        }
    }
    auto nearest = [&](const Point& x) {
        size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < g.size(); ++j) {
            const double d = dist2(grid.point(j), x, n);
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        return g.v[best];
    };
    const double cut = C.params.regime == Regime::Critical ? C.R_min * C.R_min : C.R_min;
    for (int i = 0; i < C.nu(); ++i) {
        const auto& b = C.bubbles[i];
        for (const Point& x : detail::sphere_points(n, b.z, cut / b.lambda, 64)) {
            const double val = std::abs(eval ? eval(x) : nearest(x));
            double rest = 0;
            for (int k = 0; k < C.nu(); ++k)
                if (k != i) rest += detail::weight_piece(C, kind, k, x, 0);
            for (int side : {-1, 1}) {
                const double r = val / (rest + detail::weight_piece(C, kind, i, x, side));
                if (r > out.value) {
                    out.value = r;
                    out.argmax_point = x;
                }
            }
        }
    }
    return out;
}

template <class G>
Field<G> error_term(std::shared_ptr<const G> g, const BubbleConfig& C) {
    std::vector<Field<G>> parts;
    for (const auto& b : C.bubbles) parts.push_back(bubble_field(g, C.params, b));
    return interaction_error(parts, C.params.p);
}

inline double error_term_value(const BubbleConfig& C, const Point& x) {
    double m = 0, tot = 0, pw = 0;
    const double p = C.params.p;
    for (const auto& b : C.bubbles) {
        const double v = bubble_value(C.params, b, x);
        m = std::max(m, v);
        tot += v;
        pw += std::pow(v, p);
    }
    return std::pow(m, p) * std::expm1(p * std::log1p((tot - m) / m)) - (pw - std::pow(m, p));
}

template <class G>
double low_dim_error_norm(std::shared_ptr<const G> g, const BubbleConfig& C) {
    if (C.params.regime != Regime::Low) throw PreconditionError("low_dim_error_norm: low regime only");
    const int n = C.params.n;
    return lp_norm(error_term(g, C), 2.0 * n / (n + 2.0 * C.params.s));
}

} // namespace fracstab
