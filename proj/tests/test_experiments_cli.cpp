#include <doctest.h>
#include <fracstab.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace fracstab;
using doctest::Approx;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(FRACSTAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* small_sweep = R"(
[run]
name = small
output_dir = exp_out
workers = %d
timing = false
[params]
n = 1
s = 0.1
[sweep]
d_min = 1000
d_max = 3000
points = 4
[grid]
points_per_unit = 8
min_points = 8192
[solver]
method = newton
[checks]
witness = true
multipliers = true
)";

std::string sweep_text(int workers) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, small_sweep, workers);
    return buf;
}
}

TEST_CASE("regression helpers") {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    const auto f = linear_fit(x, y);
    CHECK(f.slope == Approx(2));
    CHECK(f.intercept == Approx(1));
    CHECK(f.r2 == Approx(1));
    CHECK(f.count == 4);
    CHECK(linear_fit({1, 2, std::nan("")}, {1, 2, 3}).count == 2);
    CHECK(band_ratio({2, 4, std::nan(""), 3}) == Approx(2));
    const auto g = geometric_grid(8, 512, 7);
    CHECK(g.front() == 8);
    CHECK(g.back() == Approx(512));
    CHECK(g[1] / g[0] == Approx(2));
}

TEST_CASE("config parsing") {
    auto c = Config::from_string("[params]\nn = 1\ns = 1/6\n[checks]\nwitness = off\n");
    CHECK(params_from(c).regime == Regime::Critical);
    CHECK(c.get("checks.witness", true) == false);
    CHECK(c.get("sweep.points", 5) == 5);
    CHECK_THROWS_AS(c.require<double>("sweep.d_min"), ConfigError);
    CHECK_THROWS_AS(Config::from_string("[params]\nn = one\n").require<int>("params.n"), ConfigError);
    CHECK_THROWS_AS(Config::from_string("[checks]\nwitness = maybe\n").get("checks.witness", true), ConfigError);
    CHECK_THROWS_AS(params_from(Config::from_string("[params]\nn = 1\ns = 0.7\n")), ConfigError);
    CHECK_THROWS_AS(Config::from_string("[params\nn = 1\n"), ConfigError);
    CHECK_THROWS_AS(sweep_settings(Config::from_string("[params]\nn = 1\ns = 0.25\n[solver]\nmethod = magic\n")), ConfigError);
}

TEST_CASE("sweep rows and byte-identical reruns") {
    const auto R = run_scaling_sweep(Config::from_string(sweep_text(1)));
    REQUIRE(R.rows.size() == 4);
    CHECK(R.failed == 0);
    CHECK(R.exit_code == 0);
    for (size_t i = 1; i < R.rows.size(); ++i) CHECK(R.rows[i].Q_max < R.rows[i - 1].Q_max);
    for (const auto& r : R.rows) {
        CHECK(r.rho0_hs > 0);
        CHECK(r.rho_best == Approx(r.rho0_hs).epsilon(1e-3));
        CHECK(r.gamma == Approx(r.gamma_direct).epsilon(1e-6));
        CHECK(r.runtime_ms == 0);
    }
    CHECK(R.regressions.count("rho0_vs_Q") == 1);
    CHECK(R.regressions.count("rhobest_vs_gamma") == 1);
    std::filesystem::create_directories("exp_out");
    write_sweep_outputs(R, "exp_out/a", make_params(1, 0.1));
    const auto S = run_scaling_sweep(Config::from_string(sweep_text(3)));
    write_sweep_outputs(S, "exp_out/b", make_params(1, 0.1));
    const auto a = slurp("exp_out/a.csv");
    CHECK(a.substr(0, a.find('\n')) == "d,Q_max,rho0_hs,gamma,rho_best,sum_abs_c,c0,runtime_ms,gamma_direct,mult_ratio,rho0_star,h_doublestar,residual,N,iterations,status");
    CHECK(a == slurp("exp_out/b.csv"));
    CHECK(slurp("exp_out/a.svg").find("<svg") == 0);
    const auto m = nlohmann::json::parse(slurp("exp_out/a.manifest.json"));
    CHECK(m["code_version"] == FRACSTAB_VERSION);
    CHECK(m["params"]["regime"] == "high");
}

TEST_CASE("failed rows are recorded and counted") {
    // Q above the limit at every point
    auto cfg = Config::from_string("[params]\nn = 1\ns = 0.25\n[sweep]\nd_min = 1\nd_max = 2\npoints = 3\n[run]\ntiming = false\n");
    const auto R = run_scaling_sweep(cfg);
    CHECK(R.failed == 3);
    CHECK(R.exit_code == 1);
    CHECK(R.rows[0].status.rfind("failed", 0) == 0);
}

TEST_CASE("interaction check") {
    auto cfg = Config::from_string("[params]\nn = 1\ns = 0.25\n[sweep]\nd_min = 100\nd_max = 10000\npoints = 5\n");
    const auto R = run_interaction_check(cfg);
    CHECK(R.failed == 0);
    for (const auto& r : R.rows) CHECK(r.swapped == Approx(r.value).epsilon(1e-9));
    CHECK(R.regressions.at("pair_vs_Q").slope == Approx(1.0).epsilon(0.1));
    CHECK_THROWS_AS(run_interaction_check(Config::from_string("[params]\nn = 1\ns = 0.25\n[interaction]\nalpha = 2\nbeta = 1\n[sweep]\nd_min = 1\nd_max = 2\n")),
                    ConfigError);
}

TEST_CASE("spectrum runs") {
    const auto S = run_spectrum(Config::from_string("[params]\nn = 1\ns = 0.25\n[grid]\nN = 1024\n"));
    CHECK(S.report.kernel_multiplicity == 2);
    REQUIRE(S.dense);
    CHECK(S.dense->kernel_multiplicity == 2);
    const auto T = run_spectrum(Config::from_string("[params]\nn = 1\ns = 0.1\n[spectrum]\nmode = pair\nQ = 0.05\n"));
    CHECK(T.c0 < 1.0);
}

TEST_CASE("command line exit codes") {
    {
        std::ofstream os("bad.ini");
        os << "[params]\nn = 1\ns = banana\n";
    }
    CHECK(run_cli("scaling-sweep bad.ini") == 2);
    CHECK(run_cli("spectrum missing_file.ini") == 2);
    CHECK(run_cli("scaling-sweep") == 2);
    CHECK(run_cli("no-such-command x") == 2);
    {
        std::ofstream os("spec_ok.ini");
        os << "[run]\nname = sp\noutput_dir = exp_out\n[params]\nn = 1\ns = 0.25\n[grid]\nN = 512\n";
    }
    CHECK(run_cli("spectrum spec_ok.ini") == 0);
    CHECK(std::filesystem::exists("exp_out/sp.csv"));
    CHECK(std::filesystem::exists("exp_out/sp.manifest.json"));
    CHECK(std::filesystem::exists("exp_out/sp.svg"));

    auto g = std::make_shared<const CompactGrid>(1024, 0.5, 1.0);
    const auto P = make_params(1, 0.25);
    save_field(bubble_field(g, P, BubbleParams{{1, 0, 0}, 2}), "one.field");
    CHECK(run_cli("deficit one.field --s 0.25") == 0);
    CHECK(run_cli("deficit one.field") == 2);
    {
        std::ofstream os("fit.ini");
        os << "[run]\nname = fitted\noutput_dir = exp_out\n[params]\nn = 1\ns = 0.25\n[fit]\nnu = 1\nbubble0 = 1.02 1.95\n";
    }
    CHECK(run_cli("fit one.field fit.ini") == 0);
    const auto csv = slurp("exp_out/fitted.csv");
    CHECK(csv.find("0,1,0,0,2\n") != std::string::npos);
}
