#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "norms.hpp"

namespace fracstab {

template <class G>
struct FitResult {
    BubbleConfig fitted;
    Field<G> residual;
    double residual_hs = 0;
    double ortho_defect = 0;
    double gradient_norm = 0;
    double amplitude = 1.0; // single-bubble fit only
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective; // accepted steps
};

struct FitOptions {
    double grad_tol = 1e-10; // relative to ||u||^2_{H^s}
    double step_tol = 1e-12;
    double exact_tol = 1e-11; // residual_hs / ||u|| below this counts as an exact fit
    double ortho_tol = 1e-6;
    double collapse_q = 0.9; // on q / 2^{-e}
    int max_iter = 200;
};

namespace detail {

inline void sort_bubbles(std::vector<BubbleParams>& b) {
    std::stable_sort(b.begin(), b.end(), [](const BubbleParams& x, const BubbleParams& y) {
        if (x.lambda != y.lambda) return x.lambda < y.lambda;
        return x.z < y.z;
    });
}

inline std::vector<BubbleParams> unpack(const Eigen::VectorXd& th, int nu, int n) {
    std::vector<BubbleParams> b(nu);
    for (int i = 0; i < nu; ++i) {
        for (int a = 0; a < n; ++a) b[i].z[a] = th(i * (n + 1) + a);
        b[i].lambda = std::exp(th(i * (n + 1) + n));
    }
    return b;
}

inline Eigen::VectorXd pack(const std::vector<BubbleParams>& b, int n) {
    Eigen::VectorXd th(b.size() * (n + 1));
    for (size_t i = 0; i < b.size(); ++i) {
        for (int a = 0; a < n; ++a) th(i * (n + 1) + a) = b[i].z[a];
        th(i * (n + 1) + n) = std::log(b[i].lambda);
    }
    return th;
}

// q relative to its value 2^{-e} for coinciding bubbles
inline void check_collapse(const SobolevParams& P, const std::vector<BubbleParams>& b, double qmax) {
    const double top = std::pow(2.0, -P.e());
    for (size_t i = 0; i < b.size(); ++i)
        for (size_t j = i + 1; j < b.size(); ++j)
            if (interaction_q(P, b[i], b[j]) / top > qmax)
                throw DegeneracyError("fit_bubbles: bubbles collapsing (q > " + std::to_string(qmax) + ")");
}

// Tangent fields d sigma / d theta for theta = (z_i, log lambda_i).
template <class G>
std::vector<Field<G>> tangents(std::shared_ptr<const G> g, const SobolevParams& P,
                               const std::vector<BubbleParams>& b) {
    std::vector<Field<G>> J;
    for (const auto& bi : b)
        for (int a = 1; a <= P.n + 1; ++a) {
            auto Z = kernel_field(g, P, bi, a);
            if (a <= P.n) Z *= bi.lambda;
            J.push_back(std::move(Z));
        }
    return J;
}

template <class G>
double max_ortho_defect(const Field<G>& rho, std::shared_ptr<const G> g, const SobolevParams& P,
                        const std::vector<BubbleParams>& b) {
    const double s = P.s;
    const double rn = hs_norm(rho, s);
    if (rn == 0) return 0;
    const auto Drho = fractional_laplacian(rho, s);
    double worst = 0;
    for (const auto& bi : b)
        for (int a = 1; a <= P.n + 1; ++a) {
            auto Z = kernel_field(g, P, bi, a);
            const double zn = hs_norm(Z, s);
            worst = std::max(worst, std::abs(l2_pair(Z, Drho)) / (rn * zn));
        }
    return worst;
}

} // namespace detail

// Levenberg-damped Gauss-Newton on ||u - sum U[z_i, lambda_i]||^2_{H^s} over (z_i, log lambda_i).
template <class G>
FitResult<G> fit_bubbles(const Field<G>& u, int nu, const BubbleConfig& init, const FitOptions& opt = {}) {
    const auto& P = init.params;
    const int n = P.n, np = nu * (n + 1);
    const double s = P.s;
    if (init.nu() != nu) throw PreconditionError("fit_bubbles: init must carry nu bubbles");
    auto g = u.grid;
    const double unorm2 = l2_pair(u, fractional_laplacian(u, s));

    detail::check_collapse(P, init.bubbles, opt.collapse_q);
    auto th = detail::pack(init.bubbles, n);
    auto objective = [&](const std::vector<BubbleParams>& b, Field<G>& r, Field<G>& Dr) {
        r = u;
        for (const auto& bi : b) r -= bubble_field(g, P, bi);
        Dr = fractional_laplacian(r, s);
        return 0.5 * l2_pair(r, Dr);
    };

    FitResult<G> res;
    Field<G> r, Dr;
    auto b = detail::unpack(th, nu, n);
    double F = objective(b, r, Dr);
    res.objective.push_back(F);
    double mu = 1e-6;
    std::vector<double> gnorms;
    for (int it = 1; it <= opt.max_iter; ++it) {
        res.iterations = it;
        const auto J = detail::tangents(g, P, b);
        std::vector<Field<G>> DJ;
        for (const auto& Jk : J) DJ.push_back(fractional_laplacian(Jk, s));
        Eigen::MatrixXd H(np, np);
        Eigen::VectorXd grad(np);
        for (int k = 0; k < np; ++k) {
            grad(k) = -l2_pair(DJ[k], r);
            for (int l = k; l < np; ++l)
                H(k, l) = H(l, k) = 0.5 * (l2_pair(J[k], DJ[l]) + l2_pair(J[l], DJ[k]));
        }
        res.gradient_norm = grad.norm();
        gnorms.push_back(res.gradient_norm);
        const double rn = std::sqrt(std::max(0.0, 2 * F));
        const bool exact = rn <= opt.exact_tol * std::sqrt(unorm2);
        if (exact || res.gradient_norm <= opt.grad_tol * unorm2) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        Eigen::VectorXd step;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd A = H;
            A.diagonal() *= 1 + mu;
            step = A.ldlt().solve(-grad);
            auto bt = detail::unpack(th + step, nu, n);
            detail::check_collapse(P, bt, opt.collapse_q);
            Field<G> rt, Drt;
            const double Ft = objective(bt, rt, Drt);
            if (Ft <= F) {
                th += step;
                b = std::move(bt);
                F = Ft;
                r = std::move(rt);
                Dr = std::move(Drt);
                res.objective.push_back(F);
                mu = std::max(mu * 0.1, 1e-12);
                accepted = true;
            } else {
                mu *= 10;
            }
        }
        if (!accepted) {
            res.converged = detail::max_ortho_defect(r, g, P, b) <= opt.ortho_tol;
            break;
        }
        if (step.norm() <= opt.step_tol * (1 + th.norm()) &&
            detail::max_ortho_defect(r, g, P, b) <= opt.ortho_tol) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) throw ConvergenceError("fit_bubbles: no convergence", gnorms);
    detail::sort_bubbles(b);
    res.fitted = make_config(P, b, init.tree_threshold);
    res.residual = std::move(r);
    res.residual_hs = hs_norm(res.residual, s);
    res.ortho_defect = detail::max_ortho_defect(res.residual, g, P, b);
    if (res.residual_hs > opt.exact_tol * std::sqrt(unorm2) && res.ortho_defect > opt.ortho_tol)
        throw ConvergenceError("fit_bubbles: orthogonality defect above tolerance", gnorms);
    return res;
}

// inf over (z, lambda, c) of ||u - c U[z, lambda]||_{H^s}; c eliminated in closed form.
template <class G>
FitResult<G> fit_single_bubble_BE(const Field<G>& u, const SobolevParams& P, const BubbleParams& init,
                                  const FitOptions& opt = {}) {
    const int n = P.n, np = n + 1;
    const double s = P.s;
    auto g = u.grid;
    const auto Du = fractional_laplacian(u, s);
    const double unorm2 = l2_pair(u, Du);
    if (!(unorm2 > 0)) throw PreconditionError("fit_single_bubble_BE: u must be nonzero");

    struct Eval {
        double F, c, UU;
        Field<G> U, DU;
    };
    auto eval = [&](const BubbleParams& b) {
        Eval e;
        e.U = bubble_field(g, P, b);
        e.DU = fractional_laplacian(e.U, s);
        e.UU = l2_pair(e.U, e.DU);
        e.c = l2_pair(e.DU, u) / e.UU;
        Field<G> r = u;
        r.axpy(-e.c, e.U);
        e.F = 0.5 * l2_pair(r, fractional_laplacian(r, s));
        return e;
    };

    std::vector<BubbleParams> b{init};
    auto th = detail::pack(b, n);
    auto E = eval(b[0]);
    FitResult<G> res;
    res.objective.push_back(E.F);
    double mu = 1e-6;
    std::vector<double> gnorms;
    for (int it = 1; it <= opt.max_iter; ++it) {
        res.iterations = it;
        // reduced residual r = u - cU; Kaufman Jacobian c (I - Pi_U) dU
        Field<G> r = u;
        r.axpy(-E.c, E.U);
        const auto Dr = fractional_laplacian(r, s);
        auto T = detail::tangents(g, P, b);
        std::vector<Field<G>> DT;
        for (auto& t : T) {
            const double proj = l2_pair(E.DU, t) / E.UU;
            t.axpy(-proj, E.U);
            t *= E.c;
            DT.push_back(fractional_laplacian(t, s));
        }
        Eigen::MatrixXd H(np, np);
        Eigen::VectorXd grad(np);
        for (int k = 0; k < np; ++k) {
            grad(k) = -l2_pair(DT[k], r);
            for (int l = k; l < np; ++l) H(k, l) = H(l, k) = 0.5 * (l2_pair(T[k], DT[l]) + l2_pair(T[l], DT[k]));
        }
        res.gradient_norm = grad.norm();
        gnorms.push_back(res.gradient_norm);
        const bool exact = std::sqrt(2 * E.F) <= opt.exact_tol * std::sqrt(unorm2);
        if (exact || res.gradient_norm <= opt.grad_tol * unorm2) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        Eigen::VectorXd step;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd A = H;
            A.diagonal() *= 1 + mu;
            step = A.ldlt().solve(-grad);
            auto bt = detail::unpack(th + step, 1, n);
            auto Et = eval(bt[0]);
            if (Et.F <= E.F) {
                th += step;
                b = std::move(bt);
                E = std::move(Et);
                res.objective.push_back(E.F);
                mu = std::max(mu * 0.1, 1e-12);
                accepted = true;
            } else {
                mu *= 10;
            }
        }
        if (!accepted) {
            res.converged = res.gradient_norm <= 1e3 * opt.grad_tol * unorm2;
            break;
        }
        if (step.norm() <= opt.step_tol * (1 + th.norm())) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) throw ConvergenceError("fit_single_bubble_BE: no convergence", gnorms);
    res.fitted = make_config(P, b);
    res.amplitude = E.c;
    res.residual = u;
    res.residual.axpy(-E.c, E.U);
    res.residual_hs = hs_norm(res.residual, s);
    res.ortho_defect = detail::max_ortho_defect(res.residual, g, P, b);
    return res;
}

} // namespace fracstab
