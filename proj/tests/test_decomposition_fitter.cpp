#include <doctest.h>
#include <fracstab.hpp>

using namespace fracstab;
using doctest::Approx;

TEST_CASE("exact pair is recovered") {
    const auto P = make_params(1, 0.25);
    const auto truth = make_config(P, {BubbleParams{{-20, 0, 0}, 1.0}, BubbleParams{{20, 0, 0}, 1.5}});
    auto g = std::make_shared<const CompactGrid>(4096, 20.0);
    const auto u = bubble_sum(g, truth);
    const auto init = make_config(P, {BubbleParams{{-20.2, 0, 0}, 1.01}, BubbleParams{{19.8, 0, 0}, 1.485}});
    const auto F = fit_bubbles(u, 2, init);
    for (int i = 0; i < 2; ++i) {
        CHECK(F.fitted.bubbles[i].z[0] == Approx(truth.bubbles[i].z[0]).epsilon(1e-8));
        CHECK(F.fitted.bubbles[i].lambda == Approx(truth.bubbles[i].lambda).epsilon(1e-8));
    }
    CHECK(F.residual_hs < 1e-9 * hs_norm(u, P.s));
}

TEST_CASE("orthogonal bump leaves the bubble in place") {
    const auto P = make_params(1, 0.25);
    const BubbleParams b{};
    auto g = std::make_shared<const CompactGrid>(2048, 1.0);
    // bump H^s-orthogonal to Z^1, Z^2
    auto phi = sample(g, [](const Point& x) { return std::exp(-(x[0] - 0.8) * (x[0] - 0.8)); });
    std::vector<Field<CompactGrid>> Z{kernel_field(g, P, b, 1), kernel_field(g, P, b, 2)};
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& z : Z) phi.axpy(-hs_inner(phi, z, P.s) / hs_inner(z, z, P.s), z);
    phi *= 1 / hs_norm(phi, P.s);
    auto u = bubble_field(g, P, b);
    u.axpy(0.01, phi);
    const auto F = fit_bubbles(u, 1, make_config(P, {b}));
    const auto& fb = F.fitted.bubbles[0];
    CHECK(std::abs(fb.z[0]) < 1e-3);
    CHECK(std::abs(fb.lambda - 1) < 1e-3);
    CHECK(F.residual_hs == Approx(0.01).epsilon(0.02));
    // brute force over (z, lambda)
    double best = 1e300;
    for (int i = -10; i <= 10; ++i)
        for (int j = -10; j <= 10; ++j) {
            const BubbleParams c{{fb.z[0] + 2e-3 * i, 0, 0}, fb.lambda * std::exp(2e-3 * j)};
            best = std::min(best, hs_norm(u - bubble_field(g, P, c), P.s));
        }
    CHECK(F.residual_hs <= best * (1 + 1e-12));
}

TEST_CASE("fit of a corrected pair matches the correction size") {
    const auto P = make_params(1, 0.25);
    const double d = 5000;
    const auto C = pair_config(P, d);
    auto g = std::make_shared<const CompactGrid>(65536, d / 2);
    CorrectionOptions co;
    co.method = CorrectionMethod::Newton;
    const auto R = solve_rho0(g, C, co);
    auto u = bubble_sum(g, C);
    u += R.rho0;
    const auto F = fit_bubbles(u, 2, C);
    CHECK(F.residual_hs == Approx(R.rho0_hs).epsilon(0.1));
}

TEST_CASE("single bubble with free amplitude") {
    const auto P = make_params(1, 0.25);
    auto g = std::make_shared<const CompactGrid>(2048, 0.5, 1.0);
    auto u = 3.0 * bubble_field(g, P, BubbleParams{{1, 0, 0}, 2});
    const auto F = fit_single_bubble_BE(u, P, BubbleParams{{1.05, 0, 0}, 1.9});
    CHECK(F.fitted.bubbles[0].z[0] == Approx(1.0).epsilon(1e-8));
    CHECK(F.fitted.bubbles[0].lambda == Approx(2.0).epsilon(1e-8));
    CHECK(F.amplitude == Approx(3.0).epsilon(1e-8));
}

TEST_CASE("collapsing bubbles") {
    const auto P = make_params(1, 0.25);
    auto g = std::make_shared<const CompactGrid>(1024, 1.0);
    const auto u = bubble_field(g, P, BubbleParams{});
    const auto init = make_config(P, {BubbleParams{{0, 0, 0}, 1}, BubbleParams{{0.5, 0, 0}, 1.3}});
    CHECK_THROWS_AS(fit_bubbles(u, 2, init), DegeneracyError);
}
