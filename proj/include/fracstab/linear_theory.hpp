#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bubble.hpp"
#include "grid.hpp"
#include "krylov.hpp"
#include "norms.hpp"

namespace fracstab {

// Bubble data sampled on a grid together with the constraint machinery:
// g_b = U_i^{p-1} Z_i^a, y_b = (-Delta)^{-s} g_b and M_ab = int g_a y_b.
// Index b = i*(n+1) + (a-1).
template <class G>
struct LinearContext {
    std::shared_ptr<const G> grid;
    BubbleConfig config;
    std::vector<Field<G>> U, Z, g, y;
    Field<G> sigma;
    Eigen::MatrixXd M;
    Eigen::PartialPivLU<Eigen::MatrixXd> Mlu;

    LinearContext(std::shared_ptr<const G> gr, const BubbleConfig& C) : grid(std::move(gr)), config(C) {
        const auto& P = C.params;
        sigma = Field<G>(grid);
        for (const auto& b : C.bubbles) {
            U.push_back(bubble_field(grid, P, b));
            sigma += U.back();
            for (int a = 1; a <= P.n + 1; ++a) {
                Z.push_back(kernel_field(grid, P, b, a));
                Field<G> gb = Z.back();
                const auto& Ui = U.back();
                for (size_t j = 0; j < gb.size(); ++j) gb.v[j] *= std::pow(Ui.v[j], P.p - 1.0);
                g.push_back(gb);
                y.push_back(riesz_convolve(gb, P.s));
            }
        }
        const int m = static_cast<int>(g.size());
        M.resize(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) M(a, b) = l2_pair(g[a], y[b]);
        M = 0.5 * (M + M.transpose()).eval();
        Mlu = M.partialPivLu();
    }

    int count() const { return static_cast<int>(g.size()); }

    Eigen::VectorXd constraints(const Field<G>& f) const {
        Eigen::VectorXd c(count());
        for (int a = 0; a < count(); ++a) c(a) = l2_pair(g[a], f);
        return c;
    }

    // oblique projector onto {int f g_a = 0} along span{y_b}
    Field<G> project(const Field<G>& f) const {
        Eigen::VectorXd t = Mlu.solve(constraints(f));
        Field<G> out = f;
        for (int b = 0; b < count(); ++b) out.axpy(-t(b), y[b]);
        return out;
    }

    // multipliers c minimizing ||r - sum c g||_{H^{-s}}
    Eigen::VectorXd multipliers(const Field<G>& r) const {
        Eigen::VectorXd rhs(count());
        for (int a = 0; a < count(); ++a) rhs(a) = l2_pair(y[a], r);
        return Mlu.solve(rhs);
    }

    double max_constraint_defect(const Field<G>& f) const {
        const double fn = hs_norm(f, config.params.s);
        if (fn == 0) return 0;
        double worst = 0;
        for (int a = 0; a < count(); ++a) {
            const double gn = std::sqrt(std::max(0.0, M(a, a)));
            worst = std::max(worst, std::abs(l2_pair(g[a], f)) / (gn * fn));
        }
        return worst;
    }
};

template <class G>
struct LinearSolveResult {
    Field<G> f;
    Eigen::MatrixXd c; // nu x (n+1)
    double star_norm_f = 0;
    double doublestar_norm_h = 0;
    double kkt_residual = 0;
    double constraint_defect = 0;
    int iterations = 0;
    std::vector<double> history;
};

struct LinearOptions {
    KrylovOptions krylov{};
    double Q_limit = 0.1;
    double singular_floor = 1e-10;
    bool compute_norms = true;
};

template <class G>
double star_norm(const Field<G>& f, const BubbleConfig& C) {
    if (C.params.regime == Regime::Low || C.nu() < 2) return hs_norm(f, C.params.s);
    return weighted_norms(f, C, NormKind::Star).value;
}

template <class G>
double doublestar_norm(const Field<G>& h, const BubbleConfig& C,
                       const std::function<double(const Point&)>& eval = {}) {
    const int n = C.params.n;
    if (C.params.regime == Regime::Low || C.nu() < 2) return lp_norm(h, 2.0 * n / (n + 2.0 * C.params.s));
    return weighted_norms(h, C, NormKind::DoubleStar, eval).value;
}

inline Eigen::MatrixXd reshape_multipliers(const Eigen::VectorXd& c, int nu, int n) {
    Eigen::MatrixXd out(nu, n + 1);
    for (int i = 0; i < nu; ++i)
        for (int a = 0; a <= n; ++a) out(i, a) = c(i * (n + 1) + a);
    return out;
}

// Solves (-Delta)^s f - V f = h + sum c g, int f g_a = 0.
template <class G>
LinearSolveResult<G> solve_with_potential(const LinearContext<G>& ctx, const Field<G>& h,
                                          const Field<G>& V, const LinearOptions& opt = {},
                                          const Field<G>* guess = nullptr) {
    const double s = ctx.config.params.s;
    auto A = [&](const Field<G>& f) {
        Field<G> vf = f;
        for (size_t j = 0; j < vf.size(); ++j) vf.v[j] *= V.v[j];
        Field<G> out = f;
        out -= riesz_convolve(vf, s);
        return ctx.project(out);
    };
    auto dual = [&](const Field<G>& v) { return fractional_laplacian(v, s); };
    auto pair = [](const Field<G>& a, const Field<G>& b) { return l2_pair(a, b); };

    const Field<G> Rh = riesz_convolve(h, s);
    const Field<G> b = ctx.project(Rh);
    Field<G> f = guess ? ctx.project(*guess) : Field<G>(ctx.grid);
    // roundoff floor: data absorbed by the multipliers leaves b at noise level
    KrylovOptions kopt = opt.krylov;
    kopt.abs_tol = std::max(kopt.abs_tol, 1e-13 * hs_norm(Rh, s));
    auto kr = gmres(A, b, f, dual, pair, kopt);
    if (!kr.converged)
        throw ConvergenceError("solve_linear: Krylov iteration did not converge", kr.history);
    if (kr.min_singular < opt.singular_floor)
        throw DegeneracyError("solve_linear: projected operator is near-singular");
    f = ctx.project(f);

    LinearSolveResult<G> R;
    Field<G> vf = f;
    for (size_t j = 0; j < vf.size(); ++j) vf.v[j] *= V.v[j];
    Field<G> pde = fractional_laplacian(f, s);
    pde -= vf;
    pde -= h;
    Eigen::VectorXd c = ctx.multipliers(pde);
    for (int a = 0; a < ctx.count(); ++a) pde.axpy(-c(a), ctx.g[a]);
    const double hn = hminus_s_norm(h, s);
    R.kkt_residual = hminus_s_norm(pde, s) / (hn > 0 ? hn : 1.0);
    R.c = reshape_multipliers(c, ctx.config.nu(), ctx.config.params.n);
    R.constraint_defect = ctx.max_constraint_defect(f);
    R.iterations = kr.iterations;
    R.history = kr.history;
    R.f = std::move(f);
    return R;
}

template <class G>
Field<G> linear_potential(const LinearContext<G>& ctx) {
    const double p = ctx.config.params.p;
    return map(ctx.sigma, [p](double x) { return p * std::pow(x, p - 1.0); });
}

template <class G>
LinearSolveResult<G> solve_linear(const Field<G>& h, const BubbleConfig& C, const LinearOptions& opt = {}) {
    if (C.Q_max > opt.Q_limit) throw PreconditionError("solve_linear: configuration is not delta-interacting (Q > limit)");
    LinearContext<G> ctx(h.grid, C);
    auto R = solve_with_potential(ctx, h, linear_potential(ctx), opt);
    if (opt.compute_norms) {
        R.star_norm_f = star_norm(R.f, C);
        R.doublestar_norm_h = doublestar_norm(h, C);
    }
    return R;
}

enum class CorrectionMethod { FixedPoint, Newton, Auto };

inline CorrectionMethod parse_correction_method(const std::string& s) {
    if (s == "fixed_point") return CorrectionMethod::FixedPoint;
    if (s == "newton") return CorrectionMethod::Newton;
    if (s == "auto") return CorrectionMethod::Auto;
    throw PreconditionError("unknown correction method: " + s);
}

struct CorrectionOptions {
    CorrectionMethod method = CorrectionMethod::FixedPoint;
    double tol = 1e-10;
    int max_iter = 200;
    std::optional<double> damping; // default 0.5 when p < 2, else 1
    LinearOptions linear{};
};

template <class G>
struct CorrectionResult {
    Field<G> rho0;
    Eigen::MatrixXd c;
    double rho0_hs = 0;
    double rho0_star = 0;
    int fixed_point_iters = 0;
    double residual = 0; // relative H^{-s} residual of the correction equation
    double constraint_defect = 0;
    std::vector<double> increments;
    std::string method;
};

// |sigma+rho|^{p-1}(sigma+rho) - sigma^p - p sigma^{p-1} rho
template <class G>
Field<G> nonlinear_remainder(const Field<G>& sigma, const Field<G>& rho, double p) {
    Field<G> out(sigma.grid);
    for (size_t j = 0; j < out.size(); ++j) {
        const double a = sigma.v[j], r = rho.v[j], u = a + r;
        out.v[j] = std::copysign(std::pow(std::abs(u), p), u) - std::pow(a, p) - p * std::pow(a, p - 1.0) * r;
    }
    return out;
}

// (-Delta)^s rho - [|sigma+rho|^{p-1}(sigma+rho) - sigma^p] - E, before multipliers
template <class G>
Field<G> correction_defect(const LinearContext<G>& ctx, const Field<G>& rho, const Field<G>& E) {
    const double p = ctx.config.params.p;
    Field<G> r = fractional_laplacian(rho, ctx.config.params.s);
    for (size_t j = 0; j < r.size(); ++j) {
        const double a = ctx.sigma.v[j], u = a + rho.v[j];
        r.v[j] -= std::copysign(std::pow(std::abs(u), p), u) - std::pow(a, p);
    }
    r -= E;
    return r;
}

template <class G>
CorrectionResult<G> finish_correction(const LinearContext<G>& ctx, Field<G> rho, const Field<G>& E,
                                      CorrectionResult<G> R) {
    const auto& C = ctx.config;
    const double s = C.params.s;
    Field<G> d = correction_defect(ctx, rho, E);
    Eigen::VectorXd c = ctx.multipliers(d);
    for (int a = 0; a < ctx.count(); ++a) d.axpy(-c(a), ctx.g[a]);
    const double en = hminus_s_norm(E, s);
    R.residual = en > 0 ? hminus_s_norm(d, s) / en : hminus_s_norm(d, s);
    R.c = reshape_multipliers(c, C.nu(), C.params.n);
    R.constraint_defect = ctx.max_constraint_defect(rho);
    R.rho0_hs = hs_norm(rho, s);
    R.rho0_star = C.nu() > 1 ? star_norm(rho, C) : 0.0;
    R.rho0 = std::move(rho);
    return R;
}

template <class G>
CorrectionResult<G> solve_rho0_in(const LinearContext<G>& ctx, const CorrectionOptions& opt) {
    const auto& C = ctx.config;
    const double s = C.params.s, p = C.params.p;
    if (C.Q_max > opt.linear.Q_limit)
        throw PreconditionError("solve_rho0: configuration is not delta-interacting (Q > limit)");
    const Field<G> E = error_term(ctx.grid, C);
    CorrectionResult<G> R;
    if (C.nu() == 1) {
        R.method = "trivial";
        return finish_correction(ctx, Field<G>(ctx.grid), E, R);
    }
    const Field<G> V0 = linear_potential(ctx);
    Field<G> rho(ctx.grid);

    auto fixed_point = [&]() {
        R.method = "fixed_point";
        const double damp = opt.damping.value_or(p < 2.0 ? 0.5 : 1.0);
        int growth = 0;
        for (int k = 0; k < opt.max_iter; ++k) {
            Field<G> rhs = E;
            rhs += nonlinear_remainder(ctx.sigma, rho, p);
            auto L = solve_with_potential(ctx, rhs, V0, opt.linear, &rho);
            Field<G> next = rho;
            next *= 1.0 - damp;
            next.axpy(damp, L.f);
            Field<G> inc = next - rho;
            const double in = hs_norm(inc, s), nn = hs_norm(next, s);
            rho = std::move(next);
            R.increments.push_back(in / std::max(nn, 1e-300));
            R.fixed_point_iters = k + 1;
            if (in <= opt.tol * nn) return true;
            const size_t m = R.increments.size();
            growth = (m >= 2 && R.increments[m - 1] > R.increments[m - 2]) ? growth + 1 : 0;
            if (growth >= 3 || !std::isfinite(in)) return false;
        }
        return false;
    };

    auto newton = [&]() {
        R.method = "newton";
        // inexact solves: the outer iteration supplies the accuracy
        LinearOptions lo = opt.linear;
        lo.krylov.rel_tol = std::max(lo.krylov.rel_tol, 1e-8);
        lo.krylov.abs_tol = 1e-3 * opt.tol * hs_norm(riesz_convolve(E, s), s);
        for (int k = 0; k < opt.max_iter; ++k) {
            Field<G> d = correction_defect(ctx, rho, E);
            Field<G> V = ctx.sigma;
            for (size_t j = 0; j < V.size(); ++j) V.v[j] = p * std::pow(std::abs(ctx.sigma.v[j] + rho.v[j]), p - 1.0);
            d *= -1.0;
            auto L = solve_with_potential(ctx, d, V, lo);
            rho += L.f;
            const double in = hs_norm(L.f, s), nn = hs_norm(rho, s);
            R.increments.push_back(in / std::max(nn, 1e-300));
            R.fixed_point_iters = k + 1;
            if (!std::isfinite(in)) return false;
            if (in <= opt.tol * nn) return true;
            const size_t m = R.increments.size();
            if (m >= 4 && R.increments[m - 1] > R.increments[m - 2] && R.increments[m - 2] > R.increments[m - 3] &&
                R.increments[m - 3] > R.increments[m - 4])
                return false;
        }
        return false;
    };

    bool ok = false;
    switch (opt.method) {
    case CorrectionMethod::FixedPoint: ok = fixed_point(); break;
    case CorrectionMethod::Newton: ok = newton(); break;
    case CorrectionMethod::Auto:
        ok = fixed_point();
        if (!ok) {
            rho = Field<G>(ctx.grid);
            auto fp_hist = R.increments;
            R.increments.clear();
            ok = newton();
            if (ok) R.method = "newton_after_fixed_point";
        }
        break;
    }
    if (!ok) throw ConvergenceError("solve_rho0: iteration failed to contract (" + R.method + ")", R.increments);
    return finish_correction(ctx, std::move(rho), E, std::move(R));
}

template <class G>
CorrectionResult<G> solve_rho0(std::shared_ptr<const G> grid, const BubbleConfig& C, const CorrectionOptions& opt = {}) {
    LinearContext<G> ctx(grid, C);
    return solve_rho0_in(ctx, opt);
}

struct MultiplierReport {
    double sum_abs_c = 0;
    double scale = 0; // regime bound scale
    double ratio = 0;
    Regime regime = Regime::High;
};

// Low: scale Q. High/critical: ||h||_** R^{2s-n} + ||f||_* (R^{-(n+2s)} or R^{-8s} log R).
inline MultiplierReport multiplier_bound_check(const Eigen::MatrixXd& c, const BubbleConfig& C, double h_doublestar = 0,
                                               double f_star = 0) {
    MultiplierReport M;
    M.regime = C.params.regime;
    M.sum_abs_c = c.cwiseAbs().sum();
    if (C.nu() < 2) return M;
    const double n = C.params.n, s = C.params.s, R = C.R_min;
    if (C.params.regime == Regime::Low)
        M.scale = C.Q_max;
    else if (C.params.regime == Regime::High)
        M.scale = h_doublestar * std::pow(R, 2 * s - n) + f_star * std::pow(R, -(n + 2 * s));
    else
        M.scale = h_doublestar * std::pow(R, 2 * s - n) + f_star * std::pow(R, -8 * s) * std::log(R);
    M.ratio = M.scale > 0 ? M.sum_abs_c / M.scale : 0.0;
    return M;
}

} // namespace fracstab
