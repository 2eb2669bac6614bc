// Acceptance criteria 1-9. One PASS/FAIL line per criterion, details indented below.
#include <fracstab.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

using namespace fracstab;

namespace {

using Clock = std::chrono::steady_clock;
double secs(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(const std::string& id, bool pass, const std::string& what) {
    std::printf("criterion %-12s %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
    failures += !pass;
}

template <class... A>
void detail(const char* fmt, A... a) {
    std::printf("    ");
    std::printf(fmt, a...);
    std::printf("\n");
    std::fflush(stdout);
}

template <class G>
double rel_l2(const Field<G>& a, const Field<G>& b) {
    return lp_norm(a - b, 2) / lp_norm(b, 2);
}

// criterion 1: (-Delta)^s U = U^p and Riesz(U^p) = U
void bubble_pde() {
    bool ok = true;
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        const auto t0 = Clock::now();
        const auto P = make_params(1, s);
        auto g = std::make_shared<const CompactGrid>(1 << 14, 1.0);
        auto U = bubble_field(g, P, BubbleParams{});
        auto Up = signed_power(U, P.p);
        const double e1 = rel_l2(fractional_laplacian(U, s), Up), e2 = rel_l2(riesz_convolve(Up, s), U);
        const double t = secs(t0);
        ok = ok && e1 <= 1e-3 && e2 <= 1e-3 && t < 5;
        detail("compact N=2^14  s=%.4f  pde %.2e  riesz %.2e  (tol 1e-3)  %.2f s", s, e1, e2, t);
    }
    verdict("1", ok, "bubble equation and Riesz identity, compact grid N=2^14");

    ok = true;
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        const auto t0 = Clock::now();
        const auto P = make_params(1, s);
        auto g = std::make_shared<const TorusGrid>(1, 1 << 14, 64.0);
        auto U = bubble_field(g, P, BubbleParams{});
        auto Up = signed_power(U, P.p);
        const double e1 = rel_l2(fractional_laplacian(U, s), Up), e2 = rel_l2(riesz_convolve(Up, s), U);
        const double t = secs(t0);
        ok = ok && e1 <= 1e-3 && e2 <= 1e-3 && t < 5;
        detail("torus N=2^14 L=64  s=%.4f  pde %.2e  riesz %.2e  (tol 1e-3)  %.2f s", s, e1, e2, t);
    }
    verdict("1/torus", ok, "same check on the periodic box N=2^14, L=64 (periodized algebraic tail)");
}

// criterion 2: ||U||^2_{H^s} = ||U||^{p+1}_{p+1}, invariant in (z, lambda)
void norm_identity() {
    bool ok = true;
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        const auto P = make_params(1, s);
        std::vector<double> h;
        double worst = 0;
        for (double lambda : {0.5, 1.0, 2.0}) {
            const BubbleParams b{{0.37, 0, 0}, lambda};
            auto g = std::make_shared<const CompactGrid>(1 << 14, 1 / lambda, b.z[0]);
            auto U = bubble_field(g, P, b);
            const double a = std::pow(hs_norm(U, s), 2), c = std::pow(lp_norm(U, P.p + 1), P.p + 1);
            worst = std::max(worst, std::abs(a - c) / c);
            h.push_back(a);
        }
        const double spread = (*std::max_element(h.begin(), h.end()) - *std::min_element(h.begin(), h.end())) / h[1];
        // quadrature oracle: int U^{p+1} = alpha^{p+1} pi in one dimension
        const double quad = bubble_power_integral(P, P.p + 1);
        const double qdev = std::abs(h[1] - quad) / quad;
        ok = ok && worst <= 1e-3 && spread <= 1e-3 && qdev <= 1e-3;
        detail("s=%.4f  identity %.2e  lambda-spread %.2e  vs quadrature %.2e  (tol 1e-3)", s, worst, spread, qdev);
    }
    verdict("2", ok, "H^s / L^{p+1} norm identity and (z, lambda) invariance");
}

// criterion 3: non-degeneracy of the linearized operator
void nondegeneracy() {
    bool ok = true;
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        const auto P = make_params(1, s);
        const auto t0 = Clock::now();
        auto g = std::make_shared<const CompactGrid>(2048, 1.0);
        const auto R = linearized_spectrum(g, P, BubbleParams{}, 6);
        const double t = secs(t0);
        auto gc = std::make_shared<const CompactGrid>(1024, 1.0);
        const auto It = linearized_spectrum(gc, P, BubbleParams{}, 6);
        const auto Dn = linearized_spectrum_dense(gc, P, BubbleParams{}, 6);
        double dev = 0;
        for (int k = 0; k < 6; ++k) dev = std::max(dev, std::abs(It.eigenvalues[k] - Dn.eigenvalues[k]) / Dn.eigenvalues[k]);
        const bool simple = std::abs(R.eigenvalues[0] - 1) < 1e-3 && R.eigenvalues[1] > 1 + 1e-2;
        const bool pass = simple && R.ground_similarity >= 0.999 && R.kernel_multiplicity == P.n + 1 &&
                          R.next_eigenvalue > P.p * (1 + R.tol) && dev <= 1e-3 && t < 60;
        ok = ok && pass;
        detail("s=%.4f  mu0 %.8f  sim %.8f  mult(p=%.4g) %d  next %.6f  dense-vs-iter %.2e  %.1f s", s,
               R.eigenvalues[0], R.ground_similarity, P.p, R.kernel_multiplicity, R.next_eigenvalue, dev, t);
    }
    verdict("3", ok, "mu=1 simple, mu=p with multiplicity n+1, gap above p, dense oracle agrees");
}

// criterion 4: constrained spectral inequality for equal pairs
void spectral_inequality() {
    const auto P = make_params(1, 0.1);
    auto g1 = std::make_shared<const CompactGrid>(2048, 1.0);
    const double c_single = c0_from(constrained_rayleigh_max(g1, make_config(P, {BubbleParams{}})), P);
    bool ok = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double Q : {0.1, 0.05, 0.01}) {
        const double d = std::sqrt(std::pow(Q, -1 / P.e()) - 2);
        int N = 4096;
        while (N < 16 * d) N *= 2;
        auto g = std::make_shared<const CompactGrid>(N, std::max(1.0, d / 2));
        const double c0 = c0_from(constrained_rayleigh_max(g, pair_config(P, d)), P);
        ok = ok && c0 < 1 && c0 < prev && c0 > c_single;
        prev = c0;
        detail("s=0.1  Q=%.3g  d=%.4g  c0 %.6f", Q, d, c0);
    }
    detail("single-bubble value p/mu_2 = %.6f", c_single);
    verdict("4", ok, "c0 < 1 along Q in {0.1, 0.05, 0.01}, decreasing toward the single-bubble value");
}

// criterion 5: interaction integral law
void interaction(const std::string& dir) {
    const auto R = run_interaction_check(Config::load(dir + "/interaction.ini"));
    write_interaction_outputs(R, output_stem(Config::load(dir + "/interaction.ini"), "interaction"));
    const auto& f = R.regressions.at("pair_vs_Q");
    const double decades = R.manifest["Q_decades"].get<double>();
    double swap = 0;
    for (const auto& r : R.rows) swap = std::max(swap, std::abs(r.value - r.swapped) / r.value);
    detail("pair (p,1): slope %.4f  r2 %.6f  Q decades %.2f  swap deviation %.1e  failed rows %d", f.slope, f.r2, decades,
           swap, R.failed);
    verdict("5", std::abs(f.slope - 1) <= 0.1 && f.r2 >= 0.99 && decades >= 2 && R.failed == 0,
            "int U_i^p U_j against Q: slope 1 +- 0.1, r2 >= 0.99");
}

struct SweepRun {
    SweepResult R;
    SobolevParams P;
    double seconds = 0;
};

SweepRun sweep(const std::string& path) {
    SweepRun S;
    const auto cfg = Config::load(path);
    S.P = params_from(cfg);
    const auto t0 = Clock::now();
    S.R = run_scaling_sweep(cfg);
    S.seconds = secs(t0);
    write_sweep_outputs(S.R, output_stem(cfg, "sweep"), S.P);
    for (const auto& r : S.R.rows)
        detail("d=%-9.4g N=%-8d Q=%.4e  rho0=%.4e  gamma=%.4e  rho_best=%.4e  sum|c|=%.3e  %s", r.d, r.N, r.Q_max, r.rho0_hs,
               r.gamma, r.rho_best, r.sum_abs_c, r.status.c_str());
    return S;
}

void scaling(const SweepRun& H, const SweepRun& L, const SweepRun& C, double total) {
    const auto& h = H.R.regressions.at("rho0_vs_Q");
    const auto& l = L.R.regressions.at("rho0_vs_Q");
    const auto& c = C.R.regressions.at("rho0_vs_Q");
    const auto& cl = C.R.regressions.at("rho0_vs_Qlog");
    const double band = C.R.bands.at("rho0_over_Qlog");
    const bool hp = std::abs(h.slope - H.P.p / 2) <= 0.1 && H.R.failed == 0;
    const bool lp = std::abs(l.slope - 1) <= 0.1 && L.R.failed == 0;
    const bool cp = band <= 3 && cl.r2 > c.r2 && C.R.failed == 0;
    detail("high s=0.1: slope %.4f (target %.2f +- 0.1), r2 %.6f", h.slope, H.P.p / 2, h.r2);
    detail("low s=0.25: slope %.4f (target 1 +- 0.1), r2 %.6f", l.slope, l.r2);
    detail("critical s=1/6: ratio band %.3f (<= 3), r2 log-corrected %.8f vs power law %.8f", band, cl.r2, c.r2);
    detail("sweep time %.1f s (limit 600 s)", total);
    verdict("6/high", hp, "|rho0|_{H^s} vs Q slope p/2");
    verdict("6/low", lp, "|rho0|_{H^s} vs Q slope 1");
    verdict("6/critical", cp && total < 600, "log-corrected model, bounded band, better r2");
}

void sharpness(const SweepRun& H, const SweepRun& L, const SweepRun& C) {
    const auto& h = H.R.regressions.at("rhobest_vs_gamma");
    const auto& l = L.R.regressions.at("rhobest_vs_gamma");
    const auto& c = C.R.regressions.at("rhobest_vs_gamma");
    const auto& cl = C.R.regressions.at("rhobest_vs_gammalog");
    const double band = C.R.bands.at("rhobest_over_gammalog");
    detail("high: slope %.4f (target %.2f +- 0.1)", h.slope, H.P.p / 2);
    detail("low: slope %.4f (target 1 +- 0.1)", l.slope);
    detail("critical: ratio band %.3f (<= 3), r2 log-corrected %.8f vs power law %.8f", band, cl.r2, c.r2);
    verdict("7/high", std::abs(h.slope - H.P.p / 2) <= 0.1, "rho_best vs gamma slope p/2");
    verdict("7/low", std::abs(l.slope - 1) <= 0.1, "rho_best vs gamma slope 1");
    verdict("7/critical", band <= 3 && cl.r2 > c.r2, "rho_best vs gamma log-corrected band");
}

void boundedness(const SweepRun& H, const SweepRun& L, const SweepRun& C) {
    bool ok = true;
    for (const SweepRun* S : {&H, &C}) {
        std::vector<double> ratio, Q;
        for (const auto& r : S->R.rows)
            if (r.ok()) ratio.push_back(r.rho0_star / r.h_doublestar), Q.push_back(r.Q_max);
        auto sorted = ratio;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                              : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
        double worst = 0;
        for (double x : ratio) worst = std::max(worst, std::max(x / med, med / x));
        const double decades = std::log10(*std::max_element(Q.begin(), Q.end()) / *std::min_element(Q.begin(), Q.end()));
        const double mb = S->R.bands.at("multiplier_ratio");
        ok = ok && worst <= 2 && decades >= 2 && mb <= 3;
        detail("%s: |f|_*/|h|_** median %.4g, worst factor %.3f (<= 2) over %.2f Q decades; sum|c|/bound band %.3f (<= 3)",
               to_string(S->P.regime), med, worst, decades, mb);
    }
    const double lb = L.R.bands.at("sumc_over_Q");
    ok = ok && lb <= 3;
    detail("low: sum|c|/Q band %.3f (<= 3)", lb);
    verdict("8", ok, "linear-theory a-priori ratio and multiplier bands");
}

void infrastructure(const SweepRun& H, const SweepRun& L, const SweepRun& C) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(-1, 1);
    double pars = 0;
    {
        auto t = std::make_shared<const TorusGrid>(3, 32, 5.0);
        Field<TorusGrid> u(t);
        for (auto& x : u.v) x = ud(rng);
        pars = std::max(pars, std::abs(spectral_field(u).l2_norm2() / std::pow(lp_norm(u, 2), 2) - 1));
        auto c = std::make_shared<const CompactGrid>(4096, 3.0);
        Field<CompactGrid> w(c);
        for (auto& x : w.v) x = ud(rng);
        pars = std::max(pars, std::abs(spectral_field(w).l2_norm2() / std::pow(lp_norm(w, 2), 2) - 1));
    }
    detail("Parseval relative defect %.2e (tol 1e-12)", pars);
    bool doubling = true;
    for (const SweepRun* S : {&H, &L, &C}) {
        const double tol = S->R.manifest["tolerances"]["doubling_tol"].get<double>();
        for (const auto& e : S->R.manifest["error_estimates"]) {
            double worst = 0;
            for (const char* k : {"rho0_hs", "gamma", "rho_best", "sum_abs_c"})
                if (e[k].is_number()) worst = std::max(worst, e[k].get<double>());
            doubling = doubling && e["status"] == "ok" && worst <= tol;
            detail("%s d=%.4g: resolution-doubling change %.2e (declared %.0e)", to_string(S->P.regime),
                   e["d"].get<double>(), worst, tol);
        }
        if (S->R.manifest["error_estimates"].empty()) doubling = false;
    }
    // identical config, different worker count
    auto text = [](int workers) {
        std::ostringstream o;
        o << "[run]\nworkers = " << workers << "\ntiming = false\noutput_dir = rerun\nname = w" << workers
          << "\n[params]\nn = 1\ns = 0.1\n[sweep]\nd_min = 1000\nd_max = 3000\npoints = 4\n[grid]\nmin_points = 8192\n"
             "points_per_unit = 8\n[solver]\nmethod = newton\n";
        return o.str();
    };
    std::string csv[2];
    for (int k = 0; k < 2; ++k) {
        const auto cfg = Config::from_string(text(k == 0 ? 1 : 3));
        write_sweep_outputs(run_scaling_sweep(cfg), output_stem(cfg, "rerun"), params_from(cfg));
        std::ifstream is(output_stem(cfg, "rerun") + ".csv", std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        csv[k] = ss.str();
    }
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    detail("rerun CSV (1 vs 3 workers): %s, %zu bytes", same ? "byte-identical" : "DIFFERENT", csv[0].size());
    verdict("9", pars <= 1e-12 && doubling && same, "Parseval, resolution doubling, byte-identical reruns");
}

} // namespace

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "configs";
    try {
        bubble_pde();
        norm_identity();
        nondegeneracy();
        spectral_inequality();
        interaction(dir);
        const auto t0 = Clock::now();
        std::printf("sweep high\n");
        const auto H = sweep(dir + "/high.ini");
        std::printf("sweep low\n");
        const auto L = sweep(dir + "/low.ini");
        std::printf("sweep critical\n");
        const auto C = sweep(dir + "/critical.ini");
        const double total = secs(t0);
        scaling(H, L, C, total);
        sharpness(H, L, C);
        boundedness(H, L, C);
        infrastructure(H, L, C);
    } catch (const std::exception& e) {
        std::printf("aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d criterion line(s) failed\n", failures);
    return failures ? 1 : 0;
}
