#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace fracstab {

struct KrylovOptions {
    double rel_tol = 1e-10;
    double abs_tol = 0.0; // in the same norm as the residual
    int restart = 40;
    int max_iter = 600;
};

struct KrylovResult {
    bool converged = false;
    int iterations = 0;
    std::vector<double> history; // relative residual per iteration
    double min_singular = 0.0;   // smallest singular value of the first Hessenberg block
};

// Restarted GMRES in the inner product <a,b> = pair(a, dual(b)).
// V needs copy, operator*=(double) and axpy(double, const V&).
template <class V, class Op, class Dual, class Pair>
KrylovResult gmres(Op&& A, const V& b, V& x, Dual&& dual, Pair&& pair, const KrylovOptions& opt = {}) {
    KrylovResult out;
    auto norm = [&](const V& v, V& dv) {
        dv = dual(v);
        return std::sqrt(std::max(0.0, pair(v, dv)));
    };
    V db = dual(b);
    const double bnorm = std::sqrt(std::max(0.0, pair(b, db)));
    if (bnorm == 0.0) {
        x *= 0.0;
        out.converged = true;
        out.min_singular = std::numeric_limits<double>::infinity();
        out.history.push_back(0.0);
        return out;
    }
    const double target = std::max(opt.rel_tol * bnorm, opt.abs_tol);
    const int m = opt.restart;
    bool first_cycle = true;
    out.min_singular = std::numeric_limits<double>::infinity();

    while (out.iterations < opt.max_iter) {
        V r = b;
        r.axpy(-1.0, A(x));
        V dr = r;
        const double beta = norm(r, dr);
        if (out.history.empty()) out.history.push_back(beta / bnorm);
        if (beta <= target) {
            out.converged = true;
            return out;
        }
        std::vector<V> Q, DQ;
        r *= 1.0 / beta;
        dr *= 1.0 / beta;
        Q.push_back(std::move(r));
        DQ.push_back(std::move(dr));
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
        Eigen::MatrixXd Hraw = H;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1), cs(m), sn(m);
        g(0) = beta;
        int k = 0;
        bool done = false;
        for (; k < m && out.iterations < opt.max_iter; ++k) {
            V w = A(Q[k]);
            for (int pass = 0; pass < 2; ++pass)
                for (int i = 0; i <= k; ++i) {
                    const double h = pair(w, DQ[i]);
                    H(i, k) += h;
                    w.axpy(-h, Q[i]);
                }
            V dw = w;
            const double hn = norm(w, dw);
            H(k + 1, k) = hn;
            Hraw.col(k) = H.col(k);
            for (int i = 0; i < k; ++i) {
                const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
                H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
                H(i, k) = t;
            }
            const double rr = std::hypot(H(k, k), H(k + 1, k));
            cs(k) = rr > 0 ? H(k, k) / rr : 1.0;
            sn(k) = rr > 0 ? H(k + 1, k) / rr : 0.0;
            H(k, k) = rr;
            H(k + 1, k) = 0.0;
            g(k + 1) = -sn(k) * g(k);
            g(k) = cs(k) * g(k);
            ++out.iterations;
            out.history.push_back(std::abs(g(k + 1)) / bnorm);
            if (hn > 1e-300) {
                w *= 1.0 / hn;
                dw *= 1.0 / hn;
            }
            Q.push_back(std::move(w));
            DQ.push_back(std::move(dw));
            if (std::abs(g(k + 1)) <= target || hn <= 1e-14 * bnorm) {
                ++k;
                done = true;
                break;
            }
        }
        if (first_cycle && k > 0) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(Hraw.topLeftCorner(k + 1, k));
            out.min_singular = svd.singularValues()(k - 1);
            first_cycle = false;
        }
        Eigen::VectorXd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        for (int i = 0; i < k; ++i) x.axpy(y(i), Q[i]);
        if (done) {
            // confirm with the true residual
            V rt = b;
            rt.axpy(-1.0, A(x));
            V drt = rt;
            const double tr = norm(rt, drt);
            out.history.push_back(tr / bnorm);
            if (tr <= 10.0 * target) {
                out.converged = true;
                return out;
            }
        }
    }
    return out;
}

} // namespace fracstab
