#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bubble.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "quadrature.hpp"

namespace fracstab {

// A grid exposes sample points, quadrature weights and the multiplier calculus
// (-Delta)^sigma. Everything else (inner products, norms) is derived from these.
template <class G>
concept SpectralGrid = requires(const G& g, const std::vector<double>& u, std::vector<double>& out,
                                size_t j, double sigma) {
    { g.dim() } -> std::convertible_to<int>;
    { g.size() } -> std::convertible_to<size_t>;
    { g.point(j) } -> std::convertible_to<Point>;
    { g.weights() } -> std::convertible_to<const std::vector<double>&>;
    g.apply_power(u, out, sigma);
    { g.header() } -> std::convertible_to<std::string>;
};

inline bool is_pow2(int N) { return N >= 8 && (N & (N - 1)) == 0; }

// Gamma(a)/Gamma(b) for a > 0 and any real b
inline double gamma_ratio(double a, double b) {
    if (b > 0) return std::exp(std::lgamma(a) - std::lgamma(b));
    if (b == std::floor(b)) return 0.0;
    return std::sin(std::numbers::pi * b) / std::numbers::pi *
           std::exp(std::lgamma(a) + std::lgamma(1.0 - b));
}

// Real line compactified onto the circle by x = c + R tan(theta/2), theta on a
// uniform cell-centred grid. (-Delta)^sigma is conjugated to the diagonal operator
// on spherical harmonics of the circle, with eigenvalues Gamma(k+1/2+sigma)/Gamma(k+1/2-sigma).
class CompactGrid {
public:
    CompactGrid(int N, double R, double center = 0.0)
        : N_(N), R_(R), c_(center), fft_({N}) {
        if (!is_pow2(N)) throw PreconditionError("CompactGrid: N must be a power of two >= 8");
        if (!(R > 0)) throw PreconditionError("CompactGrid: scale must be positive");
        dth_ = 2.0 * std::numbers::pi / N;
        x_.resize(N);
        logJ_.resize(N);
        w_.resize(N);
        for (int j = 0; j < N; ++j) {
            const double th = -std::numbers::pi + (j + 0.5) * dth_;
            const double t = std::tan(0.5 * th);
            x_[j] = c_ + R * t;
            // J = dtheta/dx = 2R/(R^2 + (x-c)^2) = (2/R) / (1 + t^2)
            logJ_[j] = std::log(2.0 / R) - std::log1p(t * t);
            w_[j] = dth_ * std::exp(-logJ_[j]);
        }
    }

    int dim() const { return 1; }
    size_t size() const { return static_cast<size_t>(N_); }
    int N() const { return N_; }
    double scale() const { return R_; }
    double center() const { return c_; }
    Point point(size_t j) const { return {x_[j], 0.0, 0.0}; }
    const std::vector<double>& weights() const { return w_; }
    double dtheta() const { return dth_; }

    std::string header() const {
        std::ostringstream os;
        os.precision(17);
        os << "1 " << N_ << ' ' << R_ << " compact";
        if (c_ != 0.0) os << ' ' << c_;
        return os.str();
    }

    bool same_as(const CompactGrid& o) const { return N_ == o.N_ && R_ == o.R_ && c_ == o.c_; }

    std::vector<double> multipliers(double sigma) const {
        if (!(sigma > -0.5) || sigma > 32.0)
            throw PreconditionError("CompactGrid: sigma must lie in (-1/2, 32]");
        const int K = N_ / 2;
        std::vector<double> m(K + 1);
        const int K0 = std::min(K, 64);
        for (int k = 0; k <= K0; ++k) m[k] = gamma_ratio(k + 0.5 + sigma, k + 0.5 - sigma);
        for (int k = K0; k < K; ++k) m[k + 1] = m[k] * (k + 0.5 + sigma) / (k + 0.5 - sigma);
        return m;
    }

    // exp(a * log J), cached per exponent
    const std::vector<double>& jpow(double a) const {
        std::lock_guard lock(mtx_);
        auto it = jcache_.find(a);
        if (it != jcache_.end()) return *it->second;
        auto v = std::make_unique<std::vector<double>>(N_);
        for (int j = 0; j < N_; ++j) (*v)[j] = std::exp(a * logJ_[j]);
        auto& ref = *v;
        jcache_.emplace(a, std::move(v));
        return ref;
    }

    void apply_power(const std::vector<double>& u, std::vector<double>& out, double sigma) const {
        const auto m = multipliers(sigma);
        const auto& pre = jpow(-(1.0 - 2.0 * sigma) / 2.0);
        const auto& post = jpow((1.0 + 2.0 * sigma) / 2.0);
        auto in = fft_.real_buffer();
        auto sp = fft_.complex_buffer();
        for (int j = 0; j < N_; ++j) in[j] = pre[j] * u[j];
        fft_.forward(in.get(), sp.get());
        for (int k = 0; k <= N_ / 2; ++k) {
            const double f = m[k] / N_;
            sp[k][0] *= f;
            sp[k][1] *= f;
        }
        fft_.backward(sp.get(), in.get());
        out.resize(N_);
        for (int j = 0; j < N_; ++j) out[j] = post[j] * in[j];
    }

    // Coefficients of J^{-1/2} u on the circle; sum of mode_weight * multiplicity * |c|^2
    // equals the quadrature L^2 norm.
    void spectrum(const std::vector<double>& u, std::vector<std::complex<double>>& c,
                  std::vector<double>& mult, std::vector<double>& freq) const {
        const auto& pre = jpow(-0.5);
        auto in = fft_.real_buffer();
        auto sp = fft_.complex_buffer();
        for (int j = 0; j < N_; ++j) in[j] = pre[j] * u[j];
        fft_.forward(in.get(), sp.get());
        const int K = N_ / 2;
        c.resize(K + 1);
        mult.assign(K + 1, 2.0);
        freq.resize(K + 1);
        mult[0] = 1.0;
        mult[K] = 1.0;
        for (int k = 0; k <= K; ++k) {
            c[k] = {sp[k][0], sp[k][1]};
            freq[k] = k;
        }
    }
    double mode_weight() const { return dth_ / N_; }

private:
    int N_;
    double R_, c_, dth_;
    RealFFT fft_;
    std::vector<double> x_, logJ_, w_;
    mutable std::mutex mtx_;
    mutable std::map<double, std::unique_ptr<std::vector<double>>> jcache_;
};

// Periodic box [-L, L)^n with N points per axis.
class TorusGrid {
public:
    TorusGrid(int n, int N, double L) : n_(n), N_(N), L_(L), fft_(std::vector<int>(n, N)) {
        if (n < 1 || n > 3) throw PreconditionError("TorusGrid: n must be 1, 2 or 3");
        if (!is_pow2(N)) throw PreconditionError("TorusGrid: N must be a power of two >= 8");
        if (!(L > 0)) throw PreconditionError("TorusGrid: L must be positive");
        h_ = 2.0 * L / N;
        size_t tot = 1;
        for (int k = 0; k < n; ++k) tot *= N;
        w_.assign(tot, std::pow(h_, n));
        const size_t nc = fft_.complex_size();
        xi2_.resize(nc);
        const int half = N / 2 + 1;
        for (size_t idx = 0; idx < nc; ++idx) {
            size_t r = idx;
            double s2 = 0;
            for (int a = n - 1; a >= 0; --a) {
                const int len = a == n - 1 ? half : N;
                int i = static_cast<int>(r % len);
                r /= len;
                const int k = i <= N / 2 ? i : i - N;
                const double xi = std::numbers::pi * k / L;
                s2 += xi * xi;
            }
            xi2_[idx] = s2;
        }
    }

    int dim() const { return n_; }
    size_t size() const { return w_.size(); }
    int N() const { return N_; }
    double L() const { return L_; }
    double spacing() const { return h_; }
    const std::vector<double>& weights() const { return w_; }

    Point point(size_t idx) const {
        Point x{0, 0, 0};
        for (int a = n_ - 1; a >= 0; --a) {
            x[a] = -L_ + h_ * static_cast<double>(idx % N_);
            idx /= N_;
        }
        return x;
    }

    std::string header() const {
        std::ostringstream os;
        os.precision(17);
        os << n_ << ' ' << N_ << ' ' << L_;
        return os.str();
    }

    bool same_as(const TorusGrid& o) const { return n_ == o.n_ && N_ == o.N_ && L_ == o.L_; }

    // mean of |xi|^{2 sigma} over the zero cell [-pi/2L, pi/2L]^n
    double zero_cell_average(double sigma) const {
        if (sigma >= 0) return sigma == 0 ? 1.0 : 0.0;
        if (!(2.0 * sigma > -n_)) throw PreconditionError("TorusGrid: need sigma > -n/2");
        std::lock_guard lock(mtx_);
        auto it = zcache_.find(sigma);
        if (it != zcache_.end()) return it->second;
        // homogeneity reduces the cube integral to one face:
        // int_{[-1,1]^n} |x|^{2 sigma} = 2n/(n+2 sigma) int_{[-1,1]^{n-1}} (1+|y|^2)^sigma
        double face = 1.0;
        QuadOptions o;
        o.rel_tol = 1e-13;
        if (n_ == 2)
            face = integrate_adaptive([&](double y) { return std::pow(1 + y * y, sigma); }, -1, 1, {}, o).value;
        if (n_ == 3)
            face = integrate_adaptive(
                       [&](double y) {
                           return integrate_adaptive(
                                      [&](double t) { return std::pow(1 + y * y + t * t, sigma); }, -1, 1,
                                      {}, o)
                               .value;
                       },
                       -1, 1, {}, o)
                       .value;
        const double unit = 2.0 * n_ / (n_ + 2.0 * sigma) * face;
        const double a = std::numbers::pi / (2.0 * L_);
        const double avg = unit * std::pow(a, 2.0 * sigma) / std::pow(2.0, n_);
        zcache_.emplace(sigma, avg);
        return avg;
    }

    void apply_power(const std::vector<double>& u, std::vector<double>& out, double sigma) const {
        const size_t M = size(), nc = fft_.complex_size();
        auto in = fft_.real_buffer();
        auto sp = fft_.complex_buffer();
        std::copy(u.begin(), u.end(), in.get());
        fft_.forward(in.get(), sp.get());
        const double z0 = zero_cell_average(sigma);
        for (size_t k = 0; k < nc; ++k) {
            const double f = (k == 0 ? z0 : std::pow(xi2_[k], sigma)) / static_cast<double>(M);
            sp[k][0] *= f;
            sp[k][1] *= f;
        }
        fft_.backward(sp.get(), in.get());
        out.assign(in.get(), in.get() + M);
    }

    // Coefficients normalized so that sum of mode_weight * multiplicity * |c|^2
    // equals the quadrature L^2 norm; freq holds |xi|.
    void spectrum(const std::vector<double>& u, std::vector<std::complex<double>>& c,
                  std::vector<double>& mult, std::vector<double>& freq) const {
        const size_t nc = fft_.complex_size();
        auto in = fft_.real_buffer();
        auto sp = fft_.complex_buffer();
        std::copy(u.begin(), u.end(), in.get());
        fft_.forward(in.get(), sp.get());
        const double norm = std::pow(h_, n_) / std::pow(2.0 * std::numbers::pi, 0.5 * n_);
        c.resize(nc);
        mult.resize(nc);
        freq.resize(nc);
        const int half = N_ / 2 + 1;
        for (size_t k = 0; k < nc; ++k) {
            c[k] = {sp[k][0] * norm, sp[k][1] * norm};
            const int last = static_cast<int>(k % half);
            mult[k] = (last == 0 || last == N_ / 2) ? 1.0 : 2.0;
            freq[k] = std::sqrt(xi2_[k]);
        }
    }
    // (pi/L)^n in the transform convention with the 1/(2 pi)^{n/2} factor above
    double mode_weight() const { return std::pow(std::numbers::pi / L_, n_); }

private:
    int n_, N_;
    double L_, h_;
    RealFFT fft_;
    std::vector<double> w_, xi2_;
    mutable std::mutex mtx_;
    mutable std::map<double, double> zcache_;
};

template <SpectralGrid G>
struct Field {
    std::shared_ptr<const G> grid;
    std::vector<double> v;

    Field() = default;
    explicit Field(std::shared_ptr<const G> g) : grid(std::move(g)), v(grid->size(), 0.0) {}
    Field(std::shared_ptr<const G> g, std::vector<double> vals) : grid(std::move(g)), v(std::move(vals)) {}

    size_t size() const { return v.size(); }
    double& operator[](size_t j) { return v[j]; }
    double operator[](size_t j) const { return v[j]; }

    Field& operator+=(const Field& o) {
        for (size_t j = 0; j < v.size(); ++j) v[j] += o.v[j];
        return *this;
    }
    Field& operator-=(const Field& o) {
        for (size_t j = 0; j < v.size(); ++j) v[j] -= o.v[j];
        return *this;
    }
    Field& operator*=(double a) {
        for (auto& x : v) x *= a;
        return *this;
    }
    // this += a * o
    Field& axpy(double a, const Field& o) {
        for (size_t j = 0; j < v.size(); ++j) v[j] += a * o.v[j];
        return *this;
    }
};

template <class G> Field<G> operator+(Field<G> a, const Field<G>& b) { return a += b; }
template <class G> Field<G> operator-(Field<G> a, const Field<G>& b) { return a -= b; }
template <class G> Field<G> operator*(double s, Field<G> a) { return a *= s; }

template <SpectralGrid G, class F>
Field<G> sample(std::shared_ptr<const G> g, F&& f) {
    Field<G> out(g);
    for (size_t j = 0; j < g->size(); ++j) out.v[j] = f(g->point(j));
    return out;
}

template <class G, class F>
Field<G> map(const Field<G>& u, F&& f) {
    Field<G> out(u.grid);
    for (size_t j = 0; j < u.size(); ++j) out.v[j] = f(u.v[j]);
    return out;
}

template <class G>
void check_same_grid(const Field<G>& a, const Field<G>& b) {
    if (a.grid != b.grid && !(a.grid && b.grid && a.grid->same_as(*b.grid)))
        throw PreconditionError("grid mismatch");
}

template <class G>
Field<G> fractional_laplacian(const Field<G>& u, double sigma) {
    Field<G> out(u.grid);
    u.grid->apply_power(u.v, out.v, sigma);
    return out;
}

template <class G>
Field<G> riesz_convolve(const Field<G>& g, double s) {
    return fractional_laplacian(g, -s);
}

template <class G>
double integrate(const Field<G>& u) {
    const auto& w = u.grid->weights();
    double acc = 0;
    for (size_t j = 0; j < u.size(); ++j) acc += w[j] * u.v[j];
    return acc;
}

// sum_j w_j a_j b_j
template <class G>
double l2_pair(const Field<G>& a, const Field<G>& b) {
    check_same_grid(a, b);
    const auto& w = a.grid->weights();
    double acc = 0;
    for (size_t j = 0; j < a.size(); ++j) acc += w[j] * a.v[j] * b.v[j];
    return acc;
}

// <u, v>_{H^s} = int u (-Delta)^s v, symmetrized
template <class G>
double hs_inner(const Field<G>& u, const Field<G>& v, double s) {
    check_same_grid(u, v);
    if (&u == &v) return l2_pair(u, fractional_laplacian(u, s));
    const double a = l2_pair(u, fractional_laplacian(v, s));
    const double b = l2_pair(v, fractional_laplacian(u, s));
    return 0.5 * (a + b);
}

template <class G>
double hs_norm(const Field<G>& u, double s) {
    return std::sqrt(std::max(0.0, l2_pair(u, fractional_laplacian(u, s))));
}

template <class G>
double hminus_s_norm(const Field<G>& r, double s) {
    return std::sqrt(std::max(0.0, l2_pair(r, riesz_convolve(r, s))));
}

template <class G>
double lp_norm(const Field<G>& u, double q) {
    if (!(q >= 1.0)) throw PreconditionError("lp_norm: need q >= 1");
    const auto& w = u.grid->weights();
    double acc = 0;
    for (size_t j = 0; j < u.size(); ++j) acc += w[j] * std::pow(std::abs(u.v[j]), q);
    return std::pow(acc, 1.0 / q);
}

template <class G>
double sup_norm(const Field<G>& u) {
    double m = 0;
    for (double x : u.v) m = std::max(m, std::abs(x));
    return m;
}

// sign(u)|u|^q pointwise
template <class G>
Field<G> signed_power(const Field<G>& u, double q) {
    return map(u, [q](double x) { return std::copysign(std::pow(std::abs(x), q), x); });
}

struct SpectralField {
    std::vector<std::complex<double>> coeffs;
    std::vector<double> multiplicity; // 1 or 2 (half spectrum of a real field)
    std::vector<double> freq;
    double mode_weight = 1.0;

    double l2_norm2() const {
        double acc = 0;
        for (size_t k = 0; k < coeffs.size(); ++k) acc += multiplicity[k] * std::norm(coeffs[k]);
        return acc * mode_weight;
    }
};

template <class G>
SpectralField spectral_field(const Field<G>& u) {
    SpectralField S;
    u.grid->spectrum(u.v, S.coeffs, S.multiplicity, S.freq);
    S.mode_weight = u.grid->mode_weight();
    return S;
}

// Share of spectral energy in the top quarter of frequencies; an aliasing monitor.
template <class G>
double spectral_tail_ratio(const Field<G>& u) {
    auto S = spectral_field(u);
    double fmax = 0;
    for (double f : S.freq) fmax = std::max(fmax, f);
    double tot = 0, tail = 0;
    for (size_t k = 0; k < S.coeffs.size(); ++k) {
        const double e = S.multiplicity[k] * std::norm(S.coeffs[k]);
        tot += e;
        if (S.freq[k] > 0.75 * fmax) tail += e;
    }
    return tot > 0 ? tail / tot : 0.0;
}

// Flat binary: header line, then little-endian doubles.
template <class G>
void save_field(const Field<G>& u, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_field: cannot open " + path);
    os << u.grid->header() << '\n';
    for (double x : u.v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

struct FieldFileHeader {
    int n = 1;
    int N = 0;
    double L = 0;
    bool compact = false;
    double center = 0;
};

inline FieldFileHeader parse_field_header(const std::string& line) {
    std::istringstream is(line);
    FieldFileHeader h;
    if (!(is >> h.n >> h.N >> h.L)) throw PreconditionError("field file: malformed header");
    std::string tag;
    if (is >> tag) {
        if (tag != "compact") throw PreconditionError("field file: unknown grid tag " + tag);
        h.compact = true;
        is >> h.center;
    }
    return h;
}

inline std::vector<double> read_field_samples(std::istream& is, size_t count) {
    std::vector<double> v(count);
    for (size_t j = 0; j < count; ++j) {
        unsigned char b[8];
        if (!is.read(reinterpret_cast<char*>(b), 8)) throw PreconditionError("field file: truncated");
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        std::memcpy(&v[j], &bits, 8);
    }
    return v;
}

} // namespace fracstab
