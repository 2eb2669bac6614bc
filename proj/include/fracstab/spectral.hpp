#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "linear_theory.hpp"

namespace fracstab {

// Generalized eigenvalues mu of (-Delta)^s phi = mu W phi, ascending.
struct EigenReport {
    std::vector<double> eigenvalues;
    int kernel_multiplicity = 0;
    double rayleigh_max = 0;
    double tol = 1e-2;
    double next_eigenvalue = std::numeric_limits<double>::quiet_NaN();
    double ground_similarity = std::numeric_limits<double>::quiet_NaN();
    double kernel_angle = std::numeric_limits<double>::quiet_NaN(); // sine of largest principal angle
    double max_residual = 0;
    double symmetry_defect = 0;
    double ortho_defect = 0;
    int applications = 0;
};

struct LanczosOptions {
    int basis = 80;
    double tol = 1e-9;
    int max_runs = 60;
    double weight_floor = 1e-12; // relative to max W
    std::uint64_t seed = 0x5eed;
};

template <class G>
struct HsEigenPairs {
    std::vector<double> kappa; // eigenvalues of (-Delta)^{-s}(W .), descending
    std::vector<Field<G>> vecs;
    std::vector<double> residuals;
    int applications = 0;
};

namespace detail {

template <class G>
Field<G> masked_weight(Field<G> W, double floor) {
    const double m = sup_norm(W);
    for (auto& x : W.v)
        if (x < floor * m) x = 0;
    return W;
}

// Orthonormalize in H^s; keeps D = (-Delta)^s of each vector alongside (recomputed, not tracked).
template <class G>
struct HsBasis {
    double s;
    std::vector<Field<G>> v, Dv;

    void project(Field<G>& w, Field<G>& Dw) const {
        for (int pass = 0; pass < 2; ++pass)
            for (size_t i = 0; i < v.size(); ++i) {
                const double c = 0.5 * (l2_pair(Dw, v[i]) + l2_pair(w, Dv[i]));
                w.axpy(-c, v[i]);
                Dw.axpy(-c, Dv[i]);
            }
    }
    bool add(Field<G> w, Field<G> Dw, double drop = 1e-10) {
        const double n0 = std::sqrt(std::max(0.0, l2_pair(w, Dw)));
        project(w, Dw);
        const double n1 = std::sqrt(std::max(0.0, l2_pair(w, Dw)));
        if (!(n1 > drop * n0)) return false;
        w *= 1.0 / n1;
        Dv.push_back(fractional_laplacian(w, s));
        v.push_back(std::move(w));
        return true;
    }
};

} // namespace detail

// Top k eigenpairs of K = (-Delta)^{-s}(W .) restricted to the H^s-orthogonal complement of
// `constraints`. K is self-adjoint in H^s. Lanczos with full reorthogonalization; converged
// Ritz pairs are locked and the next run starts orthogonal to them.
template <class G>
HsEigenPairs<G> hs_top_eigen(const Field<G>& W, double s, const std::vector<Field<G>>& constraints, int k,
                             const LanczosOptions& opt = {}) {
    auto g = W.grid;
    detail::HsBasis<G> lock{s, {}, {}};
    for (const auto& c : constraints) lock.add(c, fractional_laplacian(c, s));

    HsEigenPairs<G> out;
    auto applyK = [&](const Field<G>& x, Field<G>& Kx, Field<G>& DKx) {
        Field<G> wx(g);
        for (size_t j = 0; j < x.size(); ++j) wx.v[j] = W.v[j] * x.v[j];
        Kx = riesz_convolve(wx, s);
        DKx = fractional_laplacian(Kx, s);
        ++out.applications;
        lock.project(Kx, DKx);
    };

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Field<G> restart_vec;
    bool have_restart = false;

    for (int run = 0; run < opt.max_runs; ++run) {
        std::vector<double> prev = out.kappa;
        std::sort(prev.rbegin(), prev.rend());
        Field<G> x(g);
        if (have_restart) {
            x = restart_vec;
        } else {
            for (auto& t : x.v) t = unif(rng);
            Field<G> Kx, DKx;
            applyK(x, Kx, DKx);
            x = std::move(Kx);
        }
        detail::HsBasis<G> B{s, {}, {}};
        {
            auto Dx = fractional_laplacian(x, s);
            lock.project(x, Dx);
            if (!B.add(std::move(x), std::move(Dx), 1e-14)) break; // complement exhausted
        }
        std::vector<double> alpha, beta;
        double lastbeta = 0;
        for (int j = 0; j < opt.basis; ++j) {
            Field<G> w, Dw;
            applyK(B.v[j], w, Dw);
            const double a = 0.5 * (l2_pair(Dw, B.v[j]) + l2_pair(w, B.Dv[j]));
            alpha.push_back(a);
            B.project(w, Dw);
            const double b = std::sqrt(std::max(0.0, l2_pair(w, Dw)));
            lastbeta = b;
            if (j + 1 == opt.basis) break;
            if (!(b > 1e-14 * std::abs(alpha[0]))) break;
            beta.push_back(b);
            w *= 1.0 / b;
            B.Dv.push_back(fractional_laplacian(w, s));
            B.v.push_back(std::move(w));
        }
        const int m = static_cast<int>(B.v.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        int locked_now = 0;
        for (int r = m - 1; r >= 0; --r) {
            const double kap = es.eigenvalues()(r);
            const double est = std::abs(lastbeta * es.eigenvectors()(m - 1, r));
            if (!(est <= opt.tol * std::max(std::abs(kap), 1e-300))) break;
            Field<G> y(g), Dy(g);
            for (int i = 0; i < m; ++i) {
                y.axpy(es.eigenvectors()(i, r), B.v[i]);
                Dy.axpy(es.eigenvectors()(i, r), B.Dv[i]);
            }
            Field<G> Ky, DKy;
            applyK(y, Ky, DKy);
            Field<G> res = Ky;
            res.axpy(-kap, y);
            const double rn = hs_norm(res, s);
            if (!lock.add(y, Dy)) break;
            out.kappa.push_back(kap);
            out.vecs.push_back(lock.v.back());
            out.residuals.push_back(rn / std::max(std::abs(kap), 1e-300));
            ++locked_now;
        }
        have_restart = false;
        if (locked_now == 0) {
            // restart from the leading Ritz vector
            restart_vec = Field<G>(g);
            for (int i = 0; i < m; ++i) restart_vec.axpy(es.eigenvectors()(i, m - 1), B.v[i]);
            have_restart = true;
            continue;
        }
        if (static_cast<int>(prev.size()) >= k && es.eigenvalues()(m - 1) <= prev[k - 1] * (1 + 1e-8)) break;
    }
    if (static_cast<int>(out.kappa.size()) < k)
        throw ConvergenceError("hs_top_eigen: Lanczos did not converge", out.residuals);
    std::vector<size_t> idx(out.kappa.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return out.kappa[a] > out.kappa[b]; });
    HsEigenPairs<G> sorted;
    sorted.applications = out.applications;
    for (int i = 0; i < k; ++i) {
        sorted.kappa.push_back(out.kappa[idx[i]]);
        sorted.vecs.push_back(out.vecs[idx[i]]);
        sorted.residuals.push_back(out.residuals[idx[i]]);
    }
    return sorted;
}

namespace detail {

// sine of the largest principal angle between span(A) and span(B), both H^s-orthonormalized
template <class G>
double subspace_sine(const std::vector<Field<G>>& A, const std::vector<Field<G>>& Bv, double s) {
    HsBasis<G> a{s, {}, {}}, b{s, {}, {}};
    for (const auto& x : A) a.add(x, fractional_laplacian(x, s));
    for (const auto& x : Bv) b.add(x, fractional_laplacian(x, s));
    if (a.v.size() != b.v.size() || a.v.empty()) return 1.0;
    Eigen::MatrixXd M(a.v.size(), b.v.size());
    for (size_t i = 0; i < a.v.size(); ++i)
        for (size_t j = 0; j < b.v.size(); ++j) M(i, j) = l2_pair(a.v[i], b.Dv[j]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const double cmin = std::min(1.0, svd.singularValues().minCoeff());
    return std::sqrt(std::max(0.0, 1 - cmin * cmin));
}

template <class G>
void fill_bubble_report(EigenReport& R, const std::vector<Field<G>>& vecs, std::shared_ptr<const G> g,
                        const SobolevParams& P, const BubbleParams& b) {
    const double p = P.p;
    auto& mu = R.eigenvalues;
    R.kernel_multiplicity = 0;
    std::vector<Field<G>> kern;
    for (size_t i = 0; i < mu.size(); ++i)
        if (std::abs(mu[i] - p) <= R.tol * p) {
            ++R.kernel_multiplicity;
            if (i < vecs.size()) kern.push_back(vecs[i]);
        }
    for (double m : mu)
        if (m > p * (1 + R.tol)) {
            R.next_eigenvalue = m;
            break;
        }
    R.rayleigh_max = 1.0 / R.next_eigenvalue;
    if (!vecs.empty()) {
        const auto U = bubble_field(g, P, b);
        R.ground_similarity = std::abs(hs_inner(vecs[0], U, P.s)) / (hs_norm(vecs[0], P.s) * hs_norm(U, P.s));
        std::vector<Field<G>> Z;
        for (int a = 1; a <= P.n + 1; ++a) Z.push_back(kernel_field(g, P, b, a));
        if (!kern.empty()) R.kernel_angle = subspace_sine(kern, Z, P.s);
        double od = 0;
        for (size_t i = 0; i < vecs.size(); ++i)
            for (size_t j = 0; j < i; ++j)
                od = std::max(od, std::abs(hs_inner(vecs[i], vecs[j], P.s)) /
                                      (hs_norm(vecs[i], P.s) * hs_norm(vecs[j], P.s)));
        R.ortho_defect = od;
    }
}

} // namespace detail

// Lowest k eigenvalues of (-Delta)^s phi = mu U^{p-1} phi; iterative path.
template <class G>
EigenReport linearized_spectrum(std::shared_ptr<const G> g, const SobolevParams& P, const BubbleParams& b,
                                int k, const LanczosOptions& opt = {}) {
    if (k < 1 || k > 40) throw PreconditionError("linearized_spectrum: need 1 <= k <= 40");
    const auto U = bubble_field(g, P, b);
    const auto W = detail::masked_weight(signed_power(U, P.p - 1), opt.weight_floor);
    auto E = hs_top_eigen(W, P.s, {}, k, opt);
    EigenReport R;
    for (double kap : E.kappa) R.eigenvalues.push_back(1.0 / kap);
    for (double r : E.residuals) R.max_residual = std::max(R.max_residual, r);
    R.applications = E.applications;
    detail::fill_bubble_report(R, E.vecs, g, P, b);
    return R;
}

// Dense oracle: symmetric reduction S A^{-1} S of the pencil on points with W above the floor.
template <class G>
EigenReport linearized_spectrum_dense(std::shared_ptr<const G> g, const SobolevParams& P, const BubbleParams& b,
                                      int k, double weight_floor = 1e-12) {
    const size_t N = g->size();
    if (N > 4096) throw PreconditionError("linearized_spectrum_dense: grid too large for the dense path");
    const auto U = bubble_field(g, P, b);
    const auto W = detail::masked_weight(signed_power(U, P.p - 1), weight_floor);
    const auto& w = g->weights();
    std::vector<size_t> keep;
    for (size_t j = 0; j < N; ++j)
        if (W.v[j] > 0) keep.push_back(j);
    const size_t m = keep.size();
    Eigen::MatrixXd A(N, N); // A_ij = w_i (-Delta)^{-s}_ij
    Field<G> e(g);
    for (size_t j = 0; j < N; ++j) {
        std::fill(e.v.begin(), e.v.end(), 0.0);
        e.v[j] = 1.0;
        const auto col = riesz_convolve(e, P.s);
        for (size_t i = 0; i < N; ++i) A(i, j) = w[i] * col.v[i];
    }
    EigenReport R;
    const Eigen::MatrixXd As = 0.5 * (A + A.transpose());
    R.symmetry_defect = (A - A.transpose()).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff();
    Eigen::MatrixXd M(m, m);
    std::vector<double> sc(m);
    for (size_t a = 0; a < m; ++a) sc[a] = std::sqrt(W.v[keep[a]] / w[keep[a]]);
    for (size_t a = 0; a < m; ++a)
        for (size_t c = 0; c < m; ++c) M(a, c) = sc[a] * As(keep[a], keep[c]) * sc[c];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    std::vector<Field<G>> vecs;
    for (int r = 0; r < k && r < static_cast<int>(m); ++r) {
        const int col = static_cast<int>(m) - 1 - r;
        const double kap = es.eigenvalues()(col);
        R.eigenvalues.push_back(1.0 / kap);
        Field<G> wphi(g);
        for (size_t a = 0; a < m; ++a)
            wphi.v[keep[a]] = W.v[keep[a]] * es.eigenvectors()(a, col) / std::sqrt(w[keep[a]] * W.v[keep[a]]);
        auto phi = riesz_convolve(wphi, P.s);
        phi *= 1.0 / kap;
        vecs.push_back(std::move(phi));
    }
    detail::fill_bubble_report(R, vecs, g, P, b);
    return R;
}

// sup of int sigma^{p-1} rho^2 / ||rho||^2_{H^s} over rho H^s-orthogonal to all U_i, Z_i^a.
// c0 = p * rayleigh_max. `drop_U` removes U_i for the listed i from the constraint set.
template <class G>
EigenReport constrained_rayleigh_max(std::shared_ptr<const G> g, const BubbleConfig& C, int k = 3,
                                     const LanczosOptions& opt = {}, const std::vector<int>& drop_U = {}) {
    const auto& P = C.params;
    if (C.Q_max > 0.1) throw PreconditionError("constrained_rayleigh_max: need Q <= 0.1");
    const auto sigma = bubble_sum(g, C);
    const auto W = detail::masked_weight(signed_power(sigma, P.p - 1), opt.weight_floor);
    std::vector<Field<G>> cons;
    for (int i = 0; i < C.nu(); ++i) {
        if (std::find(drop_U.begin(), drop_U.end(), i) == drop_U.end())
            cons.push_back(bubble_field(g, P, C.bubbles[i]));
        for (int a = 1; a <= P.n + 1; ++a) cons.push_back(kernel_field(g, P, C.bubbles[i], a));
    }
    auto E = hs_top_eigen(W, P.s, cons, k, opt);
    EigenReport R;
    for (double kap : E.kappa) R.eigenvalues.push_back(1.0 / kap);
    for (double r : E.residuals) R.max_residual = std::max(R.max_residual, r);
    R.applications = E.applications;
    R.rayleigh_max = E.kappa.front();
    R.next_eigenvalue = 1.0 / E.kappa.front();
    return R;
}

inline double c0_from(const EigenReport& R, const SobolevParams& P) { return P.p * R.rayleigh_max; }

} // namespace fracstab
