#pragma once

#include <cmath>

#include "fit.hpp"
#include "linear_theory.hpp"

namespace fracstab {

template <class G>
struct SharpnessWitness {
    Field<G> u;
    double gamma = 0;        // ||sum c U^{p-1} Z||_{H^{-s}}
    double gamma_direct = 0; // gamma_deficit(u)
    double gamma_mismatch = 0;
    double rho_best = 0;
    bool flagged = false; // mismatch above 5%
    FitResult<G> fit;
};

// u = sigma + rho0 solves the critical equation up to sum c U^{p-1} Z; rho_best is the
// distance from u to the nearest nu-bubble sum.
template <class G>
SharpnessWitness<G> sharpness_witness(const CorrectionResult<G>& R, const BubbleConfig& C,
                                      const FitOptions& fopt = {}) {
    const auto& P = C.params;
    auto g = R.rho0.grid;
    SharpnessWitness<G> W;
    W.u = bubble_sum(g, C);
    W.u += R.rho0;
    Field<G> rhs(g);
    for (int i = 0; i < C.nu(); ++i) {
        const auto Ui = bubble_field(g, P, C.bubbles[i]);
        const auto Wi = signed_power(Ui, P.p - 1);
        for (int a = 1; a <= P.n + 1; ++a) {
            const double c = R.c(i, a - 1);
            if (c == 0) continue;
            const auto Z = kernel_field(g, P, C.bubbles[i], a);
            for (size_t j = 0; j < rhs.size(); ++j) rhs.v[j] += c * Wi.v[j] * Z.v[j];
        }
    }
    W.gamma = hminus_s_norm(rhs, P.s);
    W.gamma_direct = gamma_deficit(W.u, P);
    const double scale = std::max(W.gamma, W.gamma_direct);
    W.gamma_mismatch = scale > 0 ? std::abs(W.gamma - W.gamma_direct) / scale : 0.0;
    W.flagged = W.gamma_mismatch > 0.05;
    W.fit = fit_bubbles(W.u, C.nu(), C, fopt);
    W.rho_best = W.fit.residual_hs;
    return W;
}

} // namespace fracstab
