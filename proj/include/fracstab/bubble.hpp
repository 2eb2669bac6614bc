#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "errors.hpp"
#include "sobolev_params.hpp"

namespace fracstab {

using Point = std::array<double, 3>; // unused trailing coordinates stay 0

inline double dist2(const Point& a, const Point& b, int n) {
    double r = 0;
    for (int k = 0; k < n; ++k) r += (a[k] - b[k]) * (a[k] - b[k]);
    return r;
}

struct BubbleParams {
    Point z{0.0, 0.0, 0.0};
    double lambda = 1.0;
};

inline double bubble_value(const SobolevParams& P, const BubbleParams& b, const Point& x) {
    const double l = b.lambda;
    return P.alpha_ns * std::pow(l / (1.0 + l * l * dist2(x, b.z, P.n)), P.e());
}

// a in 1..n: lambda^{-1} d/dz^a U; a = n+1: lambda d/dlambda U
inline double z_deriv_value(const SobolevParams& P, const BubbleParams& b, int a, const Point& x) {
    if (a < 1 || a > P.n + 1) throw std::out_of_range("z_deriv_value: index a out of range");
    const double l = b.lambda;
    const double r2 = dist2(x, b.z, P.n);
    const double den = 1.0 + l * l * r2;
    const double U = P.alpha_ns * std::pow(l / den, P.e());
    if (a <= P.n) return 2.0 * P.e() * l * (x[a - 1] - b.z[a - 1]) * U / den;
    return P.e() * U * (1.0 - l * l * r2) / den;
}

struct BubbleConfig {
    SobolevParams params;
    std::vector<BubbleParams> bubbles;
    std::vector<std::vector<double>> q;      // diagonal unused (0)
    std::vector<std::vector<double>> R_pair; // diagonal unused (0)
    double Q_max = 0.0;
    double R_min = std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> tree_order; // (i, j) means i precedes j
    double tree_threshold = 1e3;

    int nu() const { return static_cast<int>(bubbles.size()); }
    bool precedes(int i, int j) const {
        return std::find(tree_order.begin(), tree_order.end(), std::pair{i, j}) != tree_order.end();
    }
};

inline double interaction_q(const SobolevParams& P, const BubbleParams& a, const BubbleParams& b) {
    const double li = a.lambda, lj = b.lambda;
    const double t = li / lj + lj / li + li * lj * dist2(a.z, b.z, P.n);
    return std::pow(t, -P.e());
}

inline double interaction_R(const SobolevParams& P, const BubbleParams& a, const BubbleParams& b) {
    const double li = a.lambda, lj = b.lambda;
    return std::max({std::sqrt(li / lj), std::sqrt(lj / li),
                     std::sqrt(li * lj * dist2(a.z, b.z, P.n))});
}

inline BubbleConfig make_config(const SobolevParams& P, std::vector<BubbleParams> bubbles,
                                double tree_threshold = 1e3) {
    if (bubbles.empty()) throw PreconditionError("make_config: need at least one bubble");
    for (const auto& b : bubbles)
        if (!(b.lambda > 0.0) || !std::isfinite(b.lambda))
            throw PreconditionError("make_config: lambda must be positive");

    BubbleConfig C;
    C.params = P;
    C.bubbles = std::move(bubbles);
    C.tree_threshold = tree_threshold;
    const int nu = C.nu();
    C.q.assign(nu, std::vector<double>(nu, 0.0));
    C.R_pair.assign(nu, std::vector<double>(nu, 0.0));
    double rmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nu; ++i)
        for (int j = i + 1; j < nu; ++j) {
            const double q = interaction_q(P, C.bubbles[i], C.bubbles[j]);
            const double R = interaction_R(P, C.bubbles[i], C.bubbles[j]);
            C.q[i][j] = C.q[j][i] = q;
            C.R_pair[i][j] = C.R_pair[j][i] = R;
            C.Q_max = std::max(C.Q_max, q);
            rmin = std::min(rmin, R);
        }
    C.R_min = 0.5 * rmin;

    // base relation, then transitive closure; both sit inside the total order (lambda, index)
    std::vector<std::vector<char>> rel(nu, std::vector<char>(nu, 0));
    auto below = [&](int i, int j) {
        const double li = C.bubbles[i].lambda, lj = C.bubbles[j].lambda;
        return li < lj || (li == lj && i < j);
    };
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nu; ++j)
            if (i != j && below(i, j) &&
                C.bubbles[i].lambda * std::sqrt(dist2(C.bubbles[j].z, C.bubbles[i].z, P.n)) <=
                    tree_threshold)
                rel[i][j] = 1;
    for (int k = 0; k < nu; ++k)
        for (int i = 0; i < nu; ++i)
            if (rel[i][k])
                for (int j = 0; j < nu; ++j)
                    if (rel[k][j]) rel[i][j] = 1;
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nu; ++j)
            if (rel[i][j]) C.tree_order.emplace_back(i, j);
    return C;
}

struct BubbleTree {
    int root = 0;
    std::vector<int> descendants;
};

struct BubbleForest {
    std::vector<int> parent; // -1 for roots
    std::vector<BubbleTree> trees;
};

// Parent of j is its nearest ancestor in the (lambda, index) order.
inline BubbleForest bubble_tree(const BubbleConfig& C) {
    const int nu = C.nu();
    BubbleForest F;
    F.parent.assign(nu, -1);
    auto below = [&](int i, int j) {
        const double li = C.bubbles[i].lambda, lj = C.bubbles[j].lambda;
        return li < lj || (li == lj && i < j);
    };
    for (auto [i, j] : C.tree_order) {
        int& pj = F.parent[j];
        if (pj < 0 || below(pj, i)) pj = i;
    }
    for (int r = 0; r < nu; ++r) {
        if (F.parent[r] >= 0) continue;
        BubbleTree T;
        T.root = r;
        for (int j = 0; j < nu; ++j) {
            int a = F.parent[j];
            while (a >= 0 && a != r) a = F.parent[a];
            if (a == r) T.descendants.push_back(j);
        }
        F.trees.push_back(std::move(T));
    }
    return F;
}

} // namespace fracstab
