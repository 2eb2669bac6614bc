#include <doctest.h>
#include <fracstab.hpp>

using namespace fracstab;
using doctest::Approx;

namespace {
// mu_k for the one-dimensional bubble, multiplicity 2 for k >= 1
std::vector<double> closed_form(double s, int count) {
    std::vector<double> mu;
    const double a = 0.5;
    for (int k = 0; (int)mu.size() < count; ++k) {
        const double m = std::exp(std::lgamma(k + a + s) + std::lgamma(a - s) - std::lgamma(k + a - s) - std::lgamma(a + s));
        mu.push_back(m);
        if (k > 0 && (int)mu.size() < count) mu.push_back(m);
    }
    return mu;
}
}

TEST_CASE("closed-form oracle reproduces the kernel") {
    for (double s : {0.1, 0.25}) CHECK(closed_form(s, 3)[1] == Approx(make_params(1, s).p).epsilon(1e-13));
}

TEST_CASE("linearized spectrum of one bubble") {
    for (double s : {0.1, 1.0 / 6, 0.25}) {
        CAPTURE(s);
        const auto P = make_params(1, s);
        const BubbleParams b{{0.5, 0, 0}, 1.3};
        auto g = std::make_shared<const CompactGrid>(2048, 1 / b.lambda, b.z[0]);
        const auto R = linearized_spectrum(g, P, b, 8);
        const auto mu = closed_form(s, 8);
        for (int k = 0; k < 8; ++k) CHECK(R.eigenvalues[k] == Approx(mu[k]).epsilon(1e-6));
        CHECK(R.kernel_multiplicity == 2);
        CHECK(R.ground_similarity > 0.999999);
        CHECK(R.kernel_angle < 1e-5);
        CHECK(R.next_eigenvalue > P.p * 1.01);
        CHECK(R.rayleigh_max == Approx(1 / mu[3]).epsilon(1e-6));
    }
}

TEST_CASE("dense and iterative paths agree") {
    const auto P = make_params(1, 0.25);
    auto g = std::make_shared<const CompactGrid>(512, 1.0);
    const auto A = linearized_spectrum(g, P, BubbleParams{}, 6);
    const auto B = linearized_spectrum_dense(g, P, BubbleParams{}, 6);
    for (int k = 0; k < 6; ++k) CHECK(A.eigenvalues[k] == Approx(B.eigenvalues[k]).epsilon(1e-8));
    CHECK(B.kernel_multiplicity == 2);
    CHECK(B.symmetry_defect < 1e-10);
}

TEST_CASE("constrained Rayleigh quotient") {
    const auto P = make_params(1, 0.1);
    auto g = std::make_shared<const CompactGrid>(2048, 1.0);
    const auto C1 = make_config(P, {BubbleParams{}});
    const auto R1 = constrained_rayleigh_max(g, C1);
    const auto S1 = linearized_spectrum(g, P, BubbleParams{}, 4);
    CHECK(R1.rayleigh_max == Approx(1 / S1.next_eigenvalue).epsilon(1e-3));
    CHECK(R1.rayleigh_max < 1 / P.p);
    // without orthogonality to U the gap is lost
    CHECK(constrained_rayleigh_max(g, C1, 3, {}, {0}).rayleigh_max >= 1 / P.p);

    const double Q = 0.05, d = std::sqrt(std::pow(Q, -1 / P.e()) - 2);
    auto h = std::make_shared<const CompactGrid>(4096, d / 2);
    const auto C2 = pair_config(P, d);
    CHECK(C2.Q_max == Approx(Q).epsilon(1e-12));
    const double c0 = c0_from(constrained_rayleigh_max(h, C2), P);
    CHECK(c0 < 1.0);
    CHECK(c0 > P.p / S1.next_eigenvalue);
}
