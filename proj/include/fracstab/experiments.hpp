#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "spectral.hpp"
#include "witness.hpp"

#ifndef FRACSTAB_VERSION
#define FRACSTAB_VERSION "0.1.0"
#endif

namespace fracstab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value sections; keys addressed as "section.key".
class Config {
public:
    static Config load(const std::string& path) {
        Config c;
        c.path_ = path;
        try {
            boost::property_tree::ini_parser::read_ini(path, c.pt_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError("config: " + std::string(e.what()));
        }
        return c;
    }
    static Config from_string(const std::string& text) {
        Config c;
        std::istringstream is(text);
        try {
            boost::property_tree::ini_parser::read_ini(is, c.pt_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError("config: " + std::string(e.what()));
        }
        return c;
    }

    template <class T>
    T get(const std::string& key, T fallback) const {
        auto v = pt_.get_optional<std::string>(key);
        if (!v) return fallback;
        return convert<T>(key, *v);
    }
    template <class T>
    T require(const std::string& key) const {
        auto v = pt_.get_optional<std::string>(key);
        if (!v) throw ConfigError("config: missing key " + key);
        return convert<T>(key, *v);
    }
    bool has(const std::string& key) const { return static_cast<bool>(pt_.get_optional<std::string>(key)); }
    const std::string& path() const { return path_; }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [sec, body] : pt_)
            for (const auto& [k, v] : body) j[sec][k] = v.data();
        return j;
    }

private:
    template <class T>
    static T convert(const std::string& key, const std::string& raw) {
        std::string s = raw;
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        if constexpr (std::is_same_v<T, std::string>) {
            return s;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
            if (s == "false" || s == "0" || s == "no" || s == "off") return false;
            throw ConfigError("config: " + key + " is not a boolean: " + s);
        } else {
            std::istringstream is(s);
            T v{};
            if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError("config: bad value for " + key + ": " + s);
            return v;
        }
    }

    std::string path_;
    boost::property_tree::ptree pt_;
};

// --- regression --------------------------------------------------------------------------

struct LogFit {
    std::string x, y, filter;
    double slope = kNaN, intercept = kNaN, r2 = kNaN;
    int count = 0;
};

// least squares y = a + b x on the finite pairs
inline LogFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    LogFit f;
    double sx = 0, sy = 0;
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < x.size(); ++i)
        if (std::isfinite(x[i]) && std::isfinite(y[i])) pts.emplace_back(x[i], y[i]);
    f.count = static_cast<int>(pts.size());
    if (pts.size() < 2) return f;
    for (auto [a, b] : pts) sx += a, sy += b;
    const double mx = sx / pts.size(), my = sy / pts.size();
    double sxx = 0, sxy = 0, syy = 0;
    for (auto [a, b] : pts) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if (sxx == 0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0;
    for (auto [a, b] : pts) {
        const double e = b - f.intercept - f.slope * a;
        sse += e * e;
    }
    f.r2 = syy > 0 ? 1 - sse / syy : 1.0;
    return f;
}

inline std::vector<double> log_of(const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(x > 0 ? std::log(x) : kNaN);
    return out;
}

// max/min over the finite positive entries
inline double band_ratio(const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (double x : v)
        if (std::isfinite(x) && x > 0) lo = std::min(lo, x), hi = std::max(hi, x);
    return hi > 0 ? hi / lo : kNaN;
}

inline nlohmann::json fit_json(const LogFit& f) {
    return {{"x", f.x}, {"y", f.y}, {"filter", f.filter}, {"slope", f.slope},
            {"intercept", f.intercept}, {"r2", f.r2}, {"count", f.count}};
}

// --- output ------------------------------------------------------------------------------

inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct SvgSeries {
    std::vector<double> x, y; // positive data, plotted on log axes
    std::optional<LogFit> fit;
    std::string label;
};

inline void write_loglog_svg(const std::string& path, const std::string& title, const std::string& xlabel,
                             const std::string& ylabel, const std::vector<SvgSeries>& series) {
    const double W = 640, H = 440, ml = 70, mr = 20, mt = 40, mb = 55;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i)
            if (s.x[i] > 0 && s.y[i] > 0 && std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                x0 = std::min(x0, std::log10(s.x[i]));
                x1 = std::max(x1, std::log10(s.x[i]));
                y0 = std::min(y0, std::log10(s.y[i]));
                y1 = std::max(y1, std::log10(s.y[i]));
            }
    if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-9) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-9) y0 -= 0.5, y1 += 0.5;
    const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
    auto X = [&](double lx) { return ml + (lx - x0) / (x1 - x0) * (W - ml - mr); };
    auto Y = [&](double ly) { return H - mb - (ly - y0) / (y1 - y0) * (H - mt - mb); };
    std::ofstream os(path);
    char buf[256];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                  ml, mt, W - ml - mr, H - mt - mb);
    os << buf;
    for (int k = static_cast<int>(std::ceil(x0)); k <= static_cast<int>(std::floor(x1)); ++k) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/><text x=\"%.1f\" y=\"%.1f\" "
                      "text-anchor=\"middle\" font-size=\"11\">1e%d</text>\n",
                      X(k), mt, X(k), H - mb, X(k), H - mb + 16, k);
        os << buf;
    }
    for (int k = static_cast<int>(std::ceil(y0)); k <= static_cast<int>(std::floor(y1)); ++k) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/><text x=\"%.1f\" y=\"%.1f\" "
                      "text-anchor=\"end\" font-size=\"11\">1e%d</text>\n",
                      ml, Y(k), W - mr, Y(k), ml - 4, Y(k) + 4, k);
        os << buf;
    }
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << H / 2 << ")\">" << ylabel << "</text>\n";
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* col = colors[si % 4];
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.x[i] > 0 && s.y[i] > 0 && std::isfinite(s.x[i]) && std::isfinite(s.y[i]))) continue;
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3.5\" fill=\"%s\"/>\n",
                          X(std::log10(s.x[i])), Y(std::log10(s.y[i])), col);
            os << buf;
        }
        if (s.fit && std::isfinite(s.fit->slope)) {
            // fit lives in natural logs of the same data
            const double a = s.fit->intercept, b = s.fit->slope;
            const double la = x0 * std::log(10.0), lb = x1 * std::log(10.0);
            std::snprintf(buf, sizeof buf,
                          "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-dasharray=\"5,3\"/>\n",
                          X(x0), Y((a + b * la) / std::log(10.0)), X(x1), Y((a + b * lb) / std::log(10.0)), col);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" fill=\"%s\">%s",
                      ml + 8, mt + 16 + 14.0 * si, col, s.label.c_str());
        os << buf;
        if (s.fit && std::isfinite(s.fit->slope)) {
            std::snprintf(buf, sizeof buf, " (slope %.3f, r2 %.4f)", s.fit->slope, s.fit->r2);
            os << buf;
        }
        os << "</text>\n";
    }
    os << "</svg>\n";
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

// Runs fn(i) for i in [0, count) on `workers` threads; results land by index.
inline void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (size_t i = next++; i < count; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline std::vector<double> geometric_grid(double a, double b, int points) {
    if (!(a > 0) || !(b >= a) || points < 1) throw ConfigError("config: need 0 < d_min <= d_max and points >= 1");
    std::vector<double> v(points);
    for (int i = 0; i < points; ++i)
        v[i] = points == 1 ? a : a * std::pow(b / a, static_cast<double>(i) / (points - 1));
    return v;
}

inline std::string output_stem(const Config& cfg, const std::string& fallback) {
    const auto dir = cfg.get<std::string>("run.output_dir", ".");
    const auto name = cfg.get<std::string>("run.name", fallback);
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / name).string();
}

inline SobolevParams params_from(const Config& cfg) {
    const int n = cfg.require<int>("params.n");
    double s;
    const auto raw = cfg.require<std::string>("params.s");
    const auto slash = raw.find('/');
    if (slash != std::string::npos) {
        try {
            s = std::stod(raw.substr(0, slash)) / std::stod(raw.substr(slash + 1));
        } catch (const std::exception&) {
            throw ConfigError("config: bad value for params.s: " + raw);
        }
    } else {
        s = cfg.require<double>("params.s");
    }
    try {
        return make_params(n, s);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

// --- scaling sweep -----------------------------------------------------------------------

struct SweepRow {
    double d = 0, Q_max = kNaN, rho0_hs = kNaN, gamma = kNaN, rho_best = kNaN, sum_abs_c = kNaN, c0 = kNaN;
    double runtime_ms = 0;
    double gamma_direct = kNaN, mult_ratio = kNaN, rho0_star = kNaN, h_doublestar = kNaN, residual = kNaN;
    int N = 0, iterations = 0;
    std::string status = "ok";
    bool ok() const { return status == "ok"; }
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::map<std::string, LogFit> regressions;
    std::map<std::string, double> bands;
    nlohmann::json checks = nlohmann::json::array();
    nlohmann::json manifest;
    int failed = 0;
    int exit_code = 0;
};

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols{"d",          "Q_max",        "rho0_hs",    "gamma",
                                               "rho_best",   "sum_abs_c",    "c0",         "runtime_ms",
                                               "gamma_direct", "mult_ratio", "rho0_star", "h_doublestar",
                                               "residual",   "N",            "iterations", "status"};
    return cols;
}

struct SweepSettings {
    SobolevParams P;
    std::string grid_kind = "compact";
    double points_per_unit = 8;
    int min_points = 16384;
    int max_points = 1 << 22;
    int torus_N = 256;
    double torus_L_factor = 4;
    double torus_L_min = 64;
    CorrectionOptions correction;
    bool witness = true, rayleigh = false, multipliers = true, timing = true;
    double doubling_tol = 1e-2;
    LanczosOptions lanczos;
};

inline SweepSettings sweep_settings(const Config& cfg) {
    SweepSettings S;
    S.P = params_from(cfg);
    S.grid_kind = cfg.get<std::string>("grid.kind", S.P.n == 1 ? "compact" : "torus");
    if (S.grid_kind != "compact" && S.grid_kind != "torus") throw ConfigError("config: grid.kind must be compact or torus");
    if (S.grid_kind == "compact" && S.P.n != 1) throw ConfigError("config: compact grid is one-dimensional");
    S.points_per_unit = cfg.get("grid.points_per_unit", S.points_per_unit);
    S.min_points = cfg.get("grid.min_points", S.min_points);
    S.max_points = cfg.get("grid.max_points", S.max_points);
    S.torus_N = cfg.get("grid.N", S.torus_N);
    S.torus_L_factor = cfg.get("grid.L_factor", S.torus_L_factor);
    S.torus_L_min = cfg.get("grid.L_min", S.torus_L_min);
    try {
        S.correction.method = parse_correction_method(cfg.get<std::string>("solver.method", "fixed_point"));
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    S.correction.tol = cfg.get("solver.tol", S.correction.tol);
    S.correction.max_iter = cfg.get("solver.max_iter", S.correction.max_iter);
    if (cfg.has("solver.damping")) S.correction.damping = cfg.require<double>("solver.damping");
    S.correction.linear.krylov.restart = cfg.get("solver.gmres_restart", 30);
    S.correction.linear.krylov.max_iter = cfg.get("solver.gmres_max_iter", S.correction.linear.krylov.max_iter);
    S.correction.linear.Q_limit = cfg.get("solver.Q_limit", S.correction.linear.Q_limit);
    S.witness = cfg.get("checks.witness", S.witness);
    S.rayleigh = cfg.get("checks.rayleigh", S.rayleigh);
    S.multipliers = cfg.get("checks.multipliers", S.multipliers);
    S.timing = cfg.get("run.timing", S.timing);
    S.doubling_tol = cfg.get("checks.doubling_tol", S.doubling_tol);
    S.lanczos.seed = cfg.get<unsigned long long>("run.seed", S.lanczos.seed);
    if (!is_pow2(S.min_points) || !is_pow2(S.max_points) || !is_pow2(S.torus_N))
        throw ConfigError("config: grid sizes must be powers of two");
    return S;
}

inline BubbleConfig pair_config(const SobolevParams& P, double d) {
    return make_config(P, {BubbleParams{{-0.5 * d, 0, 0}, 1.0}, BubbleParams{{0.5 * d, 0, 0}, 1.0}});
}

template <class G>
void fill_row(SweepRow& row, std::shared_ptr<const G> g, const BubbleConfig& C, const SweepSettings& S) {
    const auto& P = C.params;
    auto R = solve_rho0(g, C, S.correction);
    row.rho0_hs = R.rho0_hs;
    row.rho0_star = R.rho0_star;
    row.residual = R.residual;
    row.iterations = R.fixed_point_iters;
    row.sum_abs_c = R.c.cwiseAbs().sum();
    if (S.multipliers) {
        auto sigma = bubble_sum(g, C);
        auto h = error_term(g, C);
        h += nonlinear_remainder(sigma, R.rho0, P.p);
        row.h_doublestar = doublestar_norm(h, C);
        row.mult_ratio = multiplier_bound_check(R.c, C, row.h_doublestar, R.rho0_star).ratio;
    }
    if (S.witness) {
        auto W = sharpness_witness(R, C);
        row.gamma = W.gamma;
        row.gamma_direct = W.gamma_direct;
        row.rho_best = W.rho_best;
        if (W.flagged) row.status = "gamma_mismatch";
    }
    if (S.rayleigh) row.c0 = c0_from(constrained_rayleigh_max(g, C, 3, S.lanczos), P);
}

inline SweepRow sweep_row(double d, const SweepSettings& S, int refine = 1) {
    SweepRow row;
    row.d = d;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto C = pair_config(S.P, d);
        row.Q_max = C.Q_max;
        if (S.grid_kind == "compact") {
            int N = S.min_points;
            while (N < S.points_per_unit * d && N < S.max_points) N *= 2;
            N *= refine;
            row.N = N;
            auto g = std::make_shared<const CompactGrid>(N, std::max(1.0, 0.5 * d));
            fill_row(row, g, C, S);
        } else {
            const double L = std::max(S.torus_L_min, S.torus_L_factor * d) * refine;
            row.N = S.torus_N * refine;
            auto g = std::make_shared<const TorusGrid>(S.P.n, row.N, L);
            fill_row(row, g, C, S);
        }
    } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
        for (auto& ch : row.status)
            if (ch == ',' || ch == '\n') ch = ';';
    }
    if (S.timing)
        row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream os(path);
    const auto& cols = sweep_columns();
    for (size_t k = 0; k < cols.size(); ++k) os << cols[k] << (k + 1 < cols.size() ? "," : "\n");
    for (const auto& r : rows) {
        os << fmt_num(r.d) << ',' << fmt_num(r.Q_max) << ',' << fmt_num(r.rho0_hs) << ',' << fmt_num(r.gamma) << ','
           << fmt_num(r.rho_best) << ',' << fmt_num(r.sum_abs_c) << ',' << fmt_num(r.c0) << ','
           << fmt_num(std::round(r.runtime_ms)) << ',' << fmt_num(r.gamma_direct) << ',' << fmt_num(r.mult_ratio)
           << ',' << fmt_num(r.rho0_star) << ',' << fmt_num(r.h_doublestar) << ',' << fmt_num(r.residual) << ','
           << r.N << ',' << r.iterations << ',' << r.status << '\n';
    }
}

inline nlohmann::json check_json(const std::string& name, double value, double target, double tol, bool pass) {
    return {{"name", name}, {"value", value}, {"target", target}, {"tolerance", tol}, {"pass", pass}};
}

inline void sweep_regressions(SweepResult& R, const SobolevParams& P) {
    std::vector<double> Q, rho, gam, best, sumc, qlog, glog;
    for (const auto& r : R.rows) {
        if (!r.ok()) continue;
        Q.push_back(r.Q_max);
        rho.push_back(r.rho0_hs);
        gam.push_back(r.gamma);
        best.push_back(r.rho_best);
        sumc.push_back(r.sum_abs_c);
        qlog.push_back(r.Q_max * std::sqrt(std::log(1.0 / r.Q_max)));
        glog.push_back(r.gamma * std::sqrt(std::abs(std::log(r.gamma))));
    }
    auto reg = [&](const std::string& name, const std::string& xn, const std::string& yn, const std::vector<double>& x,
                   const std::vector<double>& y) {
        auto f = linear_fit(log_of(x), log_of(y));
        f.x = "log(" + xn + ")";
        f.y = "log(" + yn + ")";
        f.filter = "status == ok";
        R.regressions[name] = f;
        return f;
    };
    const auto rq = reg("rho0_vs_Q", "Q_max", "rho0_hs", Q, rho);
    const auto rg = reg("rhobest_vs_gamma", "gamma", "rho_best", gam, best);
    reg("gamma_vs_Q", "Q_max", "gamma", Q, gam);
    reg("sumc_vs_Q", "Q_max", "sum_abs_c", Q, sumc);
    const double tol = 0.1;
    if (P.regime == Regime::High || P.regime == Regime::Low) {
        const double target = P.regime == Regime::High ? 0.5 * P.p : 1.0;
        R.checks.push_back(check_json("rho0_vs_Q slope", rq.slope, target, tol, std::abs(rq.slope - target) <= tol));
        if (std::isfinite(rg.slope) || rg.count > 0)
            R.checks.push_back(
                check_json("rhobest_vs_gamma slope", rg.slope, target, tol, std::abs(rg.slope - target) <= tol));
    } else {
        const auto lq = reg("rho0_vs_Qlog", "Q_max*sqrt(log(1/Q_max))", "rho0_hs", qlog, rho);
        const auto lg = reg("rhobest_vs_gammalog", "gamma*sqrt(|log gamma|)", "rho_best", glog, best);
        std::vector<double> ratio, gratio;
        for (size_t i = 0; i < rho.size(); ++i) {
            ratio.push_back(rho[i] / qlog[i]);
            gratio.push_back(best[i] / glog[i]);
        }
        R.bands["rho0_over_Qlog"] = band_ratio(ratio);
        R.bands["rhobest_over_gammalog"] = band_ratio(gratio);
        R.checks.push_back(check_json("rho0_over_Qlog band", R.bands["rho0_over_Qlog"], 3.0, 0,
                                      R.bands["rho0_over_Qlog"] <= 3.0));
        R.checks.push_back(check_json("rho0 log-corrected r2 minus plain r2", lq.r2 - rq.r2, 0, 0, lq.r2 > rq.r2));
        if (rg.count > 0) {
            R.checks.push_back(check_json("rhobest_over_gammalog band", R.bands["rhobest_over_gammalog"], 3.0, 0,
                                          R.bands["rhobest_over_gammalog"] <= 3.0));
            R.checks.push_back(
                check_json("rhobest log-corrected r2 minus plain r2", lg.r2 - rg.r2, 0, 0, lg.r2 > rg.r2));
        }
    }
    if (P.regime == Regime::Low) {
        std::vector<double> cq, rq2;
        for (size_t i = 0; i < Q.size(); ++i) cq.push_back(sumc[i] / Q[i]), rq2.push_back(rho[i] / Q[i]);
        R.bands["sumc_over_Q"] = band_ratio(cq);
        R.bands["rho0_over_Q"] = band_ratio(rq2);
        R.checks.push_back(check_json("sumc_over_Q band", R.bands["sumc_over_Q"], 3.0, 0, R.bands["sumc_over_Q"] <= 3.0));
    }
    std::vector<double> mr;
    for (const auto& r : R.rows)
        if (r.ok()) mr.push_back(r.mult_ratio);
    R.bands["multiplier_ratio"] = band_ratio(mr);
}

inline SweepResult run_scaling_sweep(const Config& cfg) {
    const auto S = sweep_settings(cfg);
    const auto ds = geometric_grid(cfg.require<double>("sweep.d_min"), cfg.require<double>("sweep.d_max"),
                                   cfg.get("sweep.points", 8));
    const int workers = cfg.get("run.workers", 1);
    const auto estimate = cfg.get<std::string>("checks.error_estimate", "none");
    if (estimate != "none" && estimate != "first" && estimate != "all")
        throw ConfigError("config: checks.error_estimate must be none, first or all");

    SweepResult R;
    R.rows.resize(ds.size());
    parallel_for(ds.size(), workers, [&](size_t i) { R.rows[i] = sweep_row(ds[i], S); });
    std::sort(R.rows.begin(), R.rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.d < b.d; });
    for (const auto& r : R.rows) R.failed += !r.ok();
    R.exit_code = R.failed * 5 > static_cast<int>(R.rows.size()) ? 1 : 0;
    sweep_regressions(R, S.P);

    // resolution doubling (box doubling on the torus)
    nlohmann::json est = nlohmann::json::array();
    if (estimate != "none") {
        std::vector<size_t> which;
        for (size_t i = 0; i < R.rows.size(); ++i)
            if (R.rows[i].ok() && (estimate == "all" || which.empty())) which.push_back(i);
        std::vector<SweepRow> fine(which.size());
        parallel_for(which.size(), workers, [&](size_t k) { fine[k] = sweep_row(R.rows[which[k]].d, S, 2); });
        for (size_t k = 0; k < which.size(); ++k) {
            const auto& a = R.rows[which[k]];
            const auto& b = fine[k];
            auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(x), 1e-300); };
            est.push_back({{"d", a.d},
                           {"status", b.status},
                           {"rho0_hs", rel(a.rho0_hs, b.rho0_hs)},
                           {"gamma", rel(a.gamma, b.gamma)},
                           {"rho_best", rel(a.rho_best, b.rho_best)},
                           {"sum_abs_c", rel(a.sum_abs_c, b.sum_abs_c)},
                           {"c0", rel(a.c0, b.c0)}});
        }
    }

    nlohmann::json regs = nlohmann::json::object();
    for (const auto& [k, f] : R.regressions) regs[k] = fit_json(f);
    R.manifest = {{"kind", "scaling-sweep"},
                  {"code_version", FRACSTAB_VERSION},
                  {"config", cfg.to_json()},
                  {"params", {{"n", S.P.n}, {"s", S.P.s}, {"p", S.P.p}, {"regime", std::string(to_string(S.P.regime))}}},
                  {"grid",
                   {{"kind", S.grid_kind},
                    {"points_per_unit", S.points_per_unit},
                    {"min_points", S.min_points},
                    {"torus_N", S.torus_N},
                    {"torus_L_factor", S.torus_L_factor}}},
                  {"tolerances",
                   {{"correction_tol", S.correction.tol},
                    {"gmres_rel_tol", S.correction.linear.krylov.rel_tol},
                    {"Q_limit", S.correction.linear.Q_limit},
                    {"slope_tol", 0.1},
                    {"band_factor", 3.0},
                    {"gamma_mismatch", 0.05},
                    {"doubling_tol", S.doubling_tol}}},
                  {"rows", R.rows.size()},
                  {"rows_failed", R.failed},
                  {"regressions", regs},
                  {"bands", R.bands},
                  {"checks", R.checks},
                  {"error_estimates", est}};
    return R;
}

inline void write_sweep_outputs(const SweepResult& R, const std::string& stem, const SobolevParams& P) {
    write_sweep_csv(stem + ".csv", R.rows);
    write_json(stem + ".manifest.json", R.manifest);
    SvgSeries a, b;
    for (const auto& r : R.rows)
        if (r.ok()) {
            a.x.push_back(r.Q_max);
            a.y.push_back(r.rho0_hs);
            b.x.push_back(r.gamma);
            b.y.push_back(r.rho_best);
        }
    a.label = "rho0_hs vs Q";
    b.label = "rho_best vs gamma";
    if (R.regressions.count("rho0_vs_Q")) a.fit = R.regressions.at("rho0_vs_Q");
    if (R.regressions.count("rhobest_vs_gamma")) b.fit = R.regressions.at("rhobest_vs_gamma");
    char title[128];
    std::snprintf(title, sizeof title, "n=%d s=%.4g (%s)", P.n, P.s, to_string(P.regime));
    write_loglog_svg(stem + ".svg", title, "Q or gamma", "H^s norm", {a, b});
}

// --- interaction check -------------------------------------------------------------------

struct InteractionRow {
    double d = 0, Q_max = kNaN, value = kNaN, swapped = kNaN, three = kNaN, envelope_ratio = kNaN;
    double runtime_ms = 0;
    std::string status = "ok";
};

struct InteractionResult {
    std::vector<InteractionRow> rows;
    std::map<std::string, LogFit> regressions;
    nlohmann::json checks = nlohmann::json::array();
    nlohmann::json manifest;
    int failed = 0;
    int exit_code = 0;
};

inline double parse_exponent(const std::string& raw, const SobolevParams& P) {
    if (raw == "p") return P.p;
    if (raw == "p-1") return P.p - 1;
    try {
        size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad exponent " + raw);
    }
}

inline InteractionResult run_interaction_check(const Config& cfg) {
    const auto P = params_from(cfg);
    const double alpha = parse_exponent(cfg.get<std::string>("interaction.alpha", "p"), P);
    const double beta = parse_exponent(cfg.get<std::string>("interaction.beta", "1"), P);
    if (std::abs(alpha + beta - P.p - 1) > 1e-12 * (P.p + 1) || alpha == beta)
        throw ConfigError("config: need alpha + beta = p + 1 and alpha != beta");
    const auto ds = geometric_grid(cfg.require<double>("sweep.d_min"), cfg.require<double>("sweep.d_max"),
                                   cfg.get("sweep.points", 8));
    const bool three = cfg.get("interaction.three_bubble", false);
    if (three && P.n < 2) throw ConfigError("config: three-bubble mode needs n >= 2");
    const bool timing = cfg.get("run.timing", true);
    QuadOptions qo;
    qo.rel_tol = cfg.get("quadrature.rel_tol", 1e-8);
    qo.max_panels = cfg.get("quadrature.max_panels", qo.max_panels);

    InteractionResult R;
    R.rows.resize(ds.size());
    parallel_for(ds.size(), cfg.get("run.workers", 1), [&](size_t i) {
        auto& row = R.rows[i];
        row.d = ds[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const BubbleParams bi{{0, 0, 0}, 1.0}, bj{{ds[i], 0, 0}, 1.0};
            row.Q_max = interaction_q(P, bi, bj);
            row.value = pair_integral(P, bi, bj, alpha, beta, qo);
            row.swapped = pair_integral(P, bj, bi, beta, alpha, qo);
            if (three) {
                const double h = ds[i] * std::sqrt(3.0) / 2;
                const BubbleParams bk{{0.5 * ds[i], h, 0}, 1.0};
                row.three = three_bubble_integral(P, bi, bj, bk, qo);
                const double Q = row.Q_max;
                row.envelope_ratio = row.three / (std::pow(Q, 1.5) * std::cbrt(std::abs(std::log(Q))));
            }
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
            for (auto& ch : row.status)
                if (ch == ',' || ch == '\n') ch = ';';
        }
        if (timing)
            row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    });
    std::vector<double> Q, v;
    std::vector<double> env;
    double swap_dev = 0;
    for (const auto& r : R.rows) {
        if (r.status != "ok") {
            ++R.failed;
            continue;
        }
        Q.push_back(r.Q_max);
        v.push_back(r.value);
        env.push_back(r.envelope_ratio);
        swap_dev = std::max(swap_dev, std::abs(r.value - r.swapped) / std::abs(r.value));
    }
    R.exit_code = R.failed * 5 > static_cast<int>(R.rows.size()) ? 1 : 0;
    auto f = linear_fit(log_of(Q), log_of(v));
    f.x = "log(Q_max)";
    f.y = "log(pair_integral)";
    f.filter = "status == ok";
    R.regressions["pair_vs_Q"] = f;
    const double target = std::min(alpha, beta);
    R.checks.push_back(check_json("pair_vs_Q slope", f.slope, target, 0.1, std::abs(f.slope - target) <= 0.1));
    R.checks.push_back(check_json("swap symmetry", swap_dev, 0, 1e-8, swap_dev <= 1e-8));
    double env_band = kNaN;
    if (three) {
        env_band = band_ratio(env);
        R.checks.push_back(check_json("three-bubble envelope band", env_band, 3.0, 0, env_band <= 3.0));
    }
    double Qspan = Q.empty() ? 0 : std::log10(*std::max_element(Q.begin(), Q.end()) / *std::min_element(Q.begin(), Q.end()));
    R.manifest = {{"kind", "interaction-check"},
                  {"code_version", FRACSTAB_VERSION},
                  {"config", cfg.to_json()},
                  {"params", {{"n", P.n}, {"s", P.s}, {"p", P.p}, {"regime", std::string(to_string(P.regime))}}},
                  {"alpha", alpha},
                  {"beta", beta},
                  {"tolerances", {{"quad_rel_tol", qo.rel_tol}, {"slope_tol", 0.1}}},
                  {"Q_decades", Qspan},
                  {"rows", R.rows.size()},
                  {"rows_failed", R.failed},
                  {"regressions", {{"pair_vs_Q", fit_json(f)}}},
                  {"three_bubble_band", env_band},
                  {"checks", R.checks}};
    return R;
}

inline void write_interaction_outputs(const InteractionResult& R, const std::string& stem) {
    std::ofstream os(stem + ".csv");
    os << "d,Q_max,pair_integral,swapped,three_bubble,envelope_ratio,runtime_ms,status\n";
    for (const auto& r : R.rows)
        os << fmt_num(r.d) << ',' << fmt_num(r.Q_max) << ',' << fmt_num(r.value) << ',' << fmt_num(r.swapped) << ','
           << fmt_num(r.three) << ',' << fmt_num(r.envelope_ratio) << ',' << fmt_num(std::round(r.runtime_ms)) << ','
           << r.status << '\n';
    write_json(stem + ".manifest.json", R.manifest);
    SvgSeries a;
    for (const auto& r : R.rows)
        if (r.status == "ok") a.x.push_back(r.Q_max), a.y.push_back(r.value);
    a.label = "pair integral vs Q";
    a.fit = R.regressions.at("pair_vs_Q");
    write_loglog_svg(stem + ".svg", "interaction law", "Q", "integral", {a});
}

// --- spectrum ----------------------------------------------------------------------------

struct SpectrumResult {
    EigenReport report;
    std::optional<EigenReport> dense;
    double c0 = kNaN;
    nlohmann::json manifest;
    int exit_code = 0;
};

inline SpectrumResult run_spectrum(const Config& cfg) {
    const auto P = params_from(cfg);
    if (P.n != 1) throw ConfigError("config: spectrum runs on the one-dimensional compact grid");
    const auto mode = cfg.get<std::string>("spectrum.mode", "single");
    const int k = cfg.get("spectrum.k", 8);
    if (k < 1 || k > 40) throw ConfigError("config: spectrum.k must lie in [1, 40]");
    LanczosOptions lo;
    lo.basis = cfg.get("spectrum.basis", lo.basis);
    lo.tol = cfg.get("spectrum.tol", lo.tol);
    lo.seed = cfg.get<unsigned long long>("run.seed", lo.seed);
    SpectrumResult R;
    nlohmann::json checks = nlohmann::json::array();
    nlohmann::json extra;
    if (mode == "single") {
        const int N = cfg.get("grid.N", 2048);
        if (!is_pow2(N)) throw ConfigError("config: grid.N must be a power of two");
        const double lambda = cfg.get("spectrum.lambda", 1.0);
        const BubbleParams b{{cfg.get("spectrum.z", 0.0), 0, 0}, lambda};
        auto g = std::make_shared<const CompactGrid>(N, 1.0 / lambda, b.z[0]);
        R.report = linearized_spectrum(g, P, b, k, lo);
        checks.push_back(check_json("kernel multiplicity", R.report.kernel_multiplicity, P.n + 1, 0,
                                    R.report.kernel_multiplicity == P.n + 1));
        checks.push_back(check_json("ground eigenvalue", R.report.eigenvalues.front(), 1.0, 1e-3,
                                    std::abs(R.report.eigenvalues.front() - 1) <= 1e-3));
        checks.push_back(check_json("ground similarity", R.report.ground_similarity, 1.0, 1e-3,
                                    R.report.ground_similarity >= 0.999));
        checks.push_back(check_json("gap above p", R.report.next_eigenvalue - P.p, 0, 0,
                                    R.report.next_eigenvalue > P.p * (1 + R.report.tol)));
        if (cfg.get("spectrum.dense_check", N <= 4096)) {
            R.dense = linearized_spectrum_dense(g, P, b, k);
            double dev = 0;
            for (size_t i = 0; i < R.dense->eigenvalues.size() && i < R.report.eigenvalues.size(); ++i)
                dev = std::max(dev, std::abs(R.dense->eigenvalues[i] - R.report.eigenvalues[i]) / R.dense->eigenvalues[i]);
            checks.push_back(check_json("dense vs iterative", dev, 0, 1e-3, dev <= 1e-3));
        }
    } else if (mode == "pair") {
        const double Q = cfg.require<double>("spectrum.Q");
        if (!(Q > 0 && Q <= 0.1)) throw ConfigError("config: spectrum.Q must lie in (0, 0.1]");
        const double d = std::sqrt(std::pow(Q, -1.0 / P.e()) - 2.0);
        int N = cfg.get("grid.min_points", 4096);
        if (!is_pow2(N)) throw ConfigError("config: grid.min_points must be a power of two");
        while (N < cfg.get("grid.points_per_unit", 16.0) * d) N *= 2;
        auto g = std::make_shared<const CompactGrid>(N, std::max(1.0, 0.5 * d));
        R.report = constrained_rayleigh_max(g, pair_config(P, d), std::min(k, 3), lo);
        R.c0 = c0_from(R.report, P);
        extra = {{"d", d}, {"N", N}};
        checks.push_back(check_json("c0 below one", R.c0, 1.0, 0, R.c0 < 1.0));
    } else {
        throw ConfigError("config: spectrum.mode must be single or pair");
    }
    nlohmann::json rep = {{"eigenvalues", R.report.eigenvalues},
                          {"kernel_multiplicity", R.report.kernel_multiplicity},
                          {"rayleigh_max", R.report.rayleigh_max},
                          {"next_eigenvalue", R.report.next_eigenvalue},
                          {"ground_similarity", R.report.ground_similarity},
                          {"kernel_angle_sine", R.report.kernel_angle},
                          {"max_residual", R.report.max_residual},
                          {"ortho_defect", R.report.ortho_defect},
                          {"applications", R.report.applications},
                          {"tol", R.report.tol}};
    R.manifest = {{"kind", "spectrum"},
                  {"mode", mode},
                  {"code_version", FRACSTAB_VERSION},
                  {"config", cfg.to_json()},
                  {"params", {{"n", P.n}, {"s", P.s}, {"p", P.p}, {"regime", std::string(to_string(P.regime))}}},
                  {"report", rep},
                  {"c0", R.c0},
                  {"checks", checks}};
    if (!extra.is_null()) R.manifest["pair"] = extra;
    if (R.dense) R.manifest["dense_eigenvalues"] = R.dense->eigenvalues;
    return R;
}

inline void write_spectrum_outputs(const SpectrumResult& R, const std::string& stem) {
    std::ofstream os(stem + ".csv");
    os << "index,mu,dense_mu\n";
    for (size_t i = 0; i < R.report.eigenvalues.size(); ++i) {
        const double dm = R.dense && i < R.dense->eigenvalues.size() ? R.dense->eigenvalues[i] : kNaN;
        os << i << ',' << fmt_num(R.report.eigenvalues[i]) << ',' << fmt_num(dm) << '\n';
    }
    write_json(stem + ".manifest.json", R.manifest);
    SvgSeries a;
    for (size_t i = 0; i < R.report.eigenvalues.size(); ++i) a.x.push_back(i + 1.0), a.y.push_back(R.report.eigenvalues[i]);
    a.label = "mu_k";
    write_loglog_svg(stem + ".svg", "linearized spectrum", "k", "mu", {a});
}

// --- field files -------------------------------------------------------------------------

using AnyField = std::variant<Field<CompactGrid>, Field<TorusGrid>>;

inline AnyField load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open field file " + path);
    std::string line;
    std::getline(is, line);
    FieldFileHeader h;
    try {
        h = parse_field_header(line);
        if (h.compact) {
            auto g = std::make_shared<const CompactGrid>(h.N, h.L, h.center);
            return Field<CompactGrid>(g, read_field_samples(is, g->size()));
        }
        auto g = std::make_shared<const TorusGrid>(h.n, h.N, h.L);
        return Field<TorusGrid>(g, read_field_samples(is, g->size()));
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("field file: ") + e.what());
    }
}

template <class G>
DeficitReport deficit_report(const Field<G>& u, const SobolevParams& P) {
    DeficitReport D;
    D.gamma = gamma_deficit(u, P);
    auto g = u.grid;
    D.S_numeric = sobolev_extremal_constant(P, g, BubbleParams{g->point(g->size() / 2), 1.0});
    D.sobolev_deficit = sobolev_deficit(u, P, D.S_numeric);
    D.notes["spectral_tail_ratio"] = spectral_tail_ratio(u);
    D.notes["hs_norm"] = hs_norm(u, P.s);
    // single-bubble fit started from the peak: height alpha lambda^e
    size_t jmax = 0;
    for (size_t j = 0; j < u.size(); ++j)
        if (u.v[j] > u.v[jmax]) jmax = j;
    if (u.v[jmax] > 0) {
        BubbleParams b0{g->point(jmax), std::pow(u.v[jmax] / P.alpha_ns, 1.0 / P.e())};
        try {
            auto F = fit_single_bubble_BE(u, P, b0);
            D.fitted = F.fitted.bubbles;
            D.residual_hs = F.residual_hs;
            D.notes["amplitude"] = F.amplitude;
        } catch (const std::exception&) {
            D.notes["fit_failed"] = 1;
        }
    }
    return D;
}

} // namespace fracstab
