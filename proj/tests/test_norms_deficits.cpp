#include <doctest.h>
#include <fracstab.hpp>

using namespace fracstab;
using doctest::Approx;

TEST_CASE("norm identity and scale invariance") {
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        const auto P = make_params(1, s);
        double ref = 0;
        for (double lambda : {0.5, 1.0, 2.0}) {
            const BubbleParams b{{-1.3, 0, 0}, lambda};
            auto g = std::make_shared<const CompactGrid>(2048, 1 / lambda, b.z[0]);
            auto U = bubble_field(g, P, b);
            const double h2 = std::pow(hs_norm(U, s), 2);
            CHECK(h2 == Approx(std::pow(lp_norm(U, P.p + 1), P.p + 1)).epsilon(1e-10));
            CHECK(h2 == Approx(std::pow(P.alpha_ns, P.p + 1) * std::numbers::pi).epsilon(1e-10));
            if (ref == 0) ref = h2;
            CHECK(h2 == Approx(ref).epsilon(1e-10));
        }
    }
}

TEST_CASE("deficits vanish on bubbles") {
    const auto P = make_params(1, 0.25);
    const BubbleParams b{{0.4, 0, 0}, 1.5};
    auto g = std::make_shared<const CompactGrid>(2048, 1 / b.lambda, b.z[0]);
    auto U = bubble_field(g, P, b);
    CHECK(gamma_deficit(U, P) < 1e-10);
    CHECK(gamma_deficit(Field<CompactGrid>(g), P) == 0.0);
    const double S = sobolev_extremal_constant(P, g, b);
    CHECK(std::abs(sobolev_deficit(U, P, S)) < 1e-10);
    // 2U is not critical but is still extremal for the inequality
    auto U2 = 2.0 * U;
    CHECK(gamma_deficit(U2, P) > 0.1);
    CHECK(std::abs(sobolev_deficit(U2, P, S)) < 1e-9);
}

TEST_CASE("deficit of a small perturbation of zero") {
    const auto P = make_params(1, 0.25);
    auto g = std::make_shared<const CompactGrid>(1024, 1.0);
    auto phi = sample(g, [](const Point& x) { return x[0] * std::exp(-x[0] * x[0]); });
    const double lin = hminus_s_norm(fractional_laplacian(phi, P.s), P.s);
    const double non = hminus_s_norm(signed_power(phi, P.p), P.s);
    for (double eps : {1e-2, 1e-3}) {
        const double G = gamma_deficit(eps * phi, P);
        CHECK(G <= eps * lin + std::pow(eps, P.p) * non + 1e-14);
        CHECK(G >= eps * lin - std::pow(eps, P.p) * non - 1e-14);
    }
}

TEST_CASE("interaction error term") {
    const auto P = make_params(1, 0.25);
    auto g = std::make_shared<const CompactGrid>(2048, 20.0);
    CHECK(sup_norm(error_term(g, make_config(P, {BubbleParams{}}))) == 0.0);
    double prev = 1e300;
    for (double d : {10.0, 100.0, 1000.0}) {
        auto h = std::make_shared<const CompactGrid>(4096, d / 2);
        const double v = sup_norm(error_term(h, make_config(P, {BubbleParams{{-d / 2, 0, 0}, 1}, BubbleParams{{d / 2, 0, 0}, 1}})));
        CHECK(v < prev);
        prev = v;
    }
    // disjoint bumps: no overlap, no error
    std::vector<Field<CompactGrid>> parts;
    for (double c : {-5.0, 5.0})
        parts.push_back(sample(g, [c](const Point& x) { return std::abs(x[0] - c) < 1 ? 1 - std::abs(x[0] - c) : 0.0; }));
    CHECK(sup_norm(interaction_error(parts, P.p)) < 1e-15);
}

TEST_CASE("weighted norms") {
    for (double s : {0.1, 1.0 / 6}) {
        const auto P = make_params(1, s);
        const double d = 200;
        const auto C = make_config(P, {BubbleParams{{-d / 2, 0, 0}, 1}, BubbleParams{{d / 2, 0, 0}, 1}});
        auto g = std::make_shared<const CompactGrid>(4096, d / 2);
        for (auto kind : {NormKind::Star, NormKind::DoubleStar}) {
            auto W = weight_field(g, C, kind);
            const double w = weighted_norms(W, C, kind, [&](const Point& x) { return weight_value(C, kind, x); }).value;
            // one-sided limits at the cutoff sphere differ by sqrt(1 + R^2)/R
            CHECK(w == Approx(1.0).epsilon(1 / (C.R_min * C.R_min)));
            CHECK(w >= 1.0 - 1e-14);
            auto f = sample(g, [](const Point& x) { return std::exp(-x[0] * x[0] / 50); });
            CHECK(weighted_norms(2.0 * f, C, kind).value == Approx(2 * weighted_norms(f, C, kind).value).epsilon(1e-14));
        }
    }
    // error term stays bounded in the ** norm along a separation sweep
    const auto P = make_params(1, 0.1);
    std::vector<double> vals;
    for (double d : {100.0, 1000.0, 10000.0}) {
        const auto C = make_config(P, {BubbleParams{{-d / 2, 0, 0}, 1}, BubbleParams{{d / 2, 0, 0}, 1}});
        auto g = std::make_shared<const CompactGrid>(1 << 14, d / 2);
        vals.push_back(weighted_norms(error_term(g, C), C, NormKind::DoubleStar,
                                      [&](const Point& x) { return error_term_value(C, x); }).value);
    }
    CHECK(*std::max_element(vals.begin(), vals.end()) / *std::min_element(vals.begin(), vals.end()) < 3.0);
}
