#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <queue>
#include <vector>

#include "bubble.hpp"
#include "errors.hpp"

namespace fracstab {

struct QuadOptions {
    double rel_tol = 1e-10;
    double abs_tol = 0.0;
    int max_panels = 4000;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    int panels = 0;
};

namespace detail {

inline constexpr std::array<double, 8> gk_x{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> gk_wk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gk_wg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double k = fc * gk_wk[7], g = fc * gk_wg[3];
    for (int j = 0; j < 7; ++j) {
        const double f1 = f(c - h * gk_x[j]), f2 = f(c + h * gk_x[j]);
        k += gk_wk[j] * (f1 + f2);
        if (j % 2 == 1) g += gk_wg[j / 2] * (f1 + f2);
    }
    return {a, b, k * h, std::abs((k - g) * h)};
}

} // namespace detail

// Globally adaptive G7-K15 on [a,b] seeded with the given interior break points.
template <class F>
QuadResult integrate_adaptive(F&& f, double a, double b, std::vector<double> breaks,
                              const QuadOptions& opt = {}) {
    breaks.push_back(a);
    breaks.push_back(b);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::priority_queue<detail::Panel> heap;
    double value = 0.0, error = 0.0;
    for (size_t k = 0; k + 1 < breaks.size(); ++k) {
        if (breaks[k] < a || breaks[k + 1] > b || !(breaks[k + 1] > breaks[k])) continue;
        auto P = detail::gk15(f, breaks[k], breaks[k + 1]);
        value += P.value;
        error += P.error;
        heap.push(P);
    }
    int panels = static_cast<int>(heap.size());
    while (error > std::max(opt.abs_tol, opt.rel_tol * std::abs(value))) {
        if (panels >= opt.max_panels)
            throw AccuracyError("integrate_adaptive: tolerance not met", value, error);
        auto P = heap.top();
        heap.pop();
        const double m = 0.5 * (P.a + P.b);
        if (!(m > P.a && m < P.b))
            throw AccuracyError("integrate_adaptive: panel underflow", value, error);
        auto L = detail::gk15(f, P.a, m), R = detail::gk15(f, m, P.b);
        value += L.value + R.value - P.value;
        error += L.error + R.error - P.error;
        heap.push(L);
        heap.push(R);
        ++panels;
    }
    // re-sum to shed the drift of incremental updates
    double v = 0.0, e = 0.0;
    while (!heap.empty()) {
        v += heap.top().value;
        e += heap.top().error;
        heap.pop();
    }
    return {v, e, panels};
}

// Integral over R via x = c + L tan t; `marks` are points in x worth splitting at.
template <class F>
QuadResult integrate_line(F&& f, double c, double L, const std::vector<double>& marks,
                          const QuadOptions& opt = {}) {
    const double h = 0.5 * std::numbers::pi;
    std::vector<double> br;
    br.reserve(marks.size());
    for (double m : marks) br.push_back(std::atan((m - c) / L));
    auto g = [&](double t) {
        const double u = std::tan(t);
        return f(c + L * u) * L * (1.0 + u * u);
    };
    return integrate_adaptive(g, -h, h, br, opt);
}

template <class F>
QuadResult integrate_halfline(F&& f, double L, const std::vector<double>& marks,
                              const QuadOptions& opt = {}) {
    std::vector<double> br;
    for (double m : marks)
        if (m > 0) br.push_back(std::atan(m / L));
    auto g = [&](double t) {
        const double u = std::tan(t);
        return f(L * u) * L * (1.0 + u * u);
    };
    return integrate_adaptive(g, 0.0, 0.5 * std::numbers::pi, br, opt);
}

namespace detail {

inline std::vector<double> axis_marks(const std::vector<BubbleParams>& bs, int axis) {
    std::vector<double> m;
    for (const auto& b : bs) {
        const double w = 1.0 / b.lambda;
        for (double k : {0.0, 1.0, 10.0, 100.0}) {
            m.push_back(b.z[axis] + k * w);
            m.push_back(b.z[axis] - k * w);
        }
    }
    return m;
}

inline double min_lambda(const std::vector<BubbleParams>& bs) {
    double l = bs.front().lambda;
    for (const auto& b : bs) l = std::min(l, b.lambda);
    return l;
}

} // namespace detail

// Nested per-axis whole-space integral of f over R^n, refined around the given bubbles.
inline QuadResult integrate_whole_space(int n, const std::function<double(const Point&)>& f,
                                        const std::vector<BubbleParams>& around,
                                        const QuadOptions& opt = {}) {
    const double L = 1.0 / detail::min_lambda(around);
    double c[3] = {0, 0, 0};
    for (const auto& b : around)
        for (int k = 0; k < n; ++k) c[k] += b.z[k] / around.size();
    QuadOptions inner = opt;
    inner.rel_tol = opt.rel_tol * 0.1;
    Point x{0, 0, 0};
    std::function<double(int)> level = [&](int axis) -> double {
        auto g = [&](double t) {
            x[axis] = t;
            return axis + 1 == n ? f(x) : level(axis + 1);
        };
        const auto& o = axis == 0 ? opt : inner;
        return integrate_line(g, c[axis], L, detail::axis_marks(around, axis), o).value;
    };
    if (n == 1) {
        auto g = [&](double t) {
            Point y{t, 0, 0};
            return f(y);
        };
        return integrate_line(g, c[0], L, detail::axis_marks(around, 0), opt);
    }
    auto g = [&](double t) {
        x[0] = t;
        return level(1);
    };
    return integrate_line(g, c[0], L, detail::axis_marks(around, 0), opt);
}

// Integral of an axisymmetric integrand f(xi, r) over R^n, n >= 2 (xi along the axis).
template <class F>
QuadResult integrate_axisymmetric(int n, F&& f, const std::vector<double>& axial_marks,
                                  const std::vector<double>& radial_marks, double L,
                                  const QuadOptions& opt = {}) {
    const double surf = n == 2 ? 2.0 : 2.0 * std::numbers::pi;
    QuadOptions inner = opt;
    inner.rel_tol = opt.rel_tol * 0.1;
    auto g = [&](double xi) {
        auto h = [&](double r) { return std::pow(r, n - 2) * f(xi, r); };
        return integrate_halfline(h, L, radial_marks, inner).value;
    };
    double c = 0.0;
    for (double m : axial_marks) c += m / axial_marks.size();
    auto R = integrate_line(g, c, L, axial_marks, opt);
    R.value *= surf;
    R.error *= surf;
    return R;
}

inline double bubble_power_integral(const SobolevParams& P, double power,
                                    const QuadOptions& opt = {}) {
    BubbleParams b;
    auto f = [&](const Point& x) { return std::pow(bubble_value(P, b, x), power); };
    if (P.n == 1) return integrate_whole_space(1, f, {b}, opt).value;
    auto g = [&](double xi, double r) { return f(Point{xi, r, 0}); };
    return integrate_axisymmetric(P.n, g, {0.0, 1.0, -1.0, 10.0, -10.0}, {1.0, 10.0}, 1.0, opt)
        .value;
}

// Integral of U_i^alpha U_j^beta over R^n with alpha + beta = p + 1.
inline double pair_integral(const SobolevParams& P, const BubbleParams& bi, const BubbleParams& bj,
                            double alpha, double beta, const QuadOptions& opt = {}) {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || alpha == beta ||
        std::abs(alpha + beta - (P.p + 1.0)) > 1e-12 * (P.p + 1.0))
        throw PreconditionError("pair_integral: need alpha, beta >= 0, alpha != beta, alpha+beta = p+1");
    if (bi.lambda == bj.lambda && dist2(bi.z, bj.z, P.n) == 0.0)
        throw PreconditionError("pair_integral: the two bubbles must differ");

    auto f = [&](const Point& x) {
        return std::pow(bubble_value(P, bi, x), alpha) * std::pow(bubble_value(P, bj, x), beta);
    };
    if (P.n == 1) return integrate_whole_space(1, f, {bi, bj}, opt).value;

    // rotate so that the centres lie on the first axis
    const double d = std::sqrt(dist2(bi.z, bj.z, P.n));
    Point e{1, 0, 0};
    if (d > 0)
        for (int k = 0; k < P.n; ++k) e[k] = (bj.z[k] - bi.z[k]) / d;
    BubbleParams ai{{0, 0, 0}, bi.lambda}, aj{{d, 0, 0}, bj.lambda};
    auto g = [&](double xi, double r) {
        const Point x{xi, r, 0};
        return std::pow(bubble_value(P, ai, x), alpha) * std::pow(bubble_value(P, aj, x), beta);
    };
    const double L = 1.0 / std::min(bi.lambda, bj.lambda);
    auto ax = detail::axis_marks({ai, aj}, 0);
    std::vector<double> rad;
    for (const auto& b : {ai, aj})
        for (double k : {1.0, 10.0, 100.0}) rad.push_back(k / b.lambda);
    rad.push_back(d);
    return integrate_axisymmetric(P.n, g, ax, rad, L, opt).value;
}

// Integral of U_i^{p-1} U_j U_k over R^n.
inline double three_bubble_integral(const SobolevParams& P, const BubbleParams& bi,
                                    const BubbleParams& bj, const BubbleParams& bk,
                                    const QuadOptions& opt = {}) {
    auto f = [&](const Point& x) {
        return std::pow(bubble_value(P, bi, x), P.p - 1.0) * bubble_value(P, bj, x) *
               bubble_value(P, bk, x);
    };
    return integrate_whole_space(P.n, f, {bi, bj, bk}, opt).value;
}

} // namespace fracstab
