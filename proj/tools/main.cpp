#include <CLI11.hpp>
#include <fracstab.hpp>

#include <iostream>

using namespace fracstab;

namespace {

int scaling_sweep(const std::string& path) {
    const auto cfg = Config::load(path);
    const auto R = run_scaling_sweep(cfg);
    const auto stem = output_stem(cfg, "sweep");
    write_sweep_outputs(R, stem, params_from(cfg));
    for (const auto& c : R.checks)
        std::cout << (c["pass"].get<bool>() ? "ok    " : "FAIL  ") << c["name"].get<std::string>() << " = "
                  << fmt_num(c["value"].get<double>()) << '\n';
    std::cout << R.rows.size() - R.failed << '/' << R.rows.size() << " rows ok, wrote " << stem << ".{csv,manifest.json,svg}\n";
    return R.exit_code;
}

int interaction_check(const std::string& path) {
    const auto cfg = Config::load(path);
    const auto R = run_interaction_check(cfg);
    const auto stem = output_stem(cfg, "interaction");
    write_interaction_outputs(R, stem);
    for (const auto& c : R.checks)
        std::cout << (c["pass"].get<bool>() ? "ok    " : "FAIL  ") << c["name"].get<std::string>() << " = "
                  << fmt_num(c["value"].get<double>()) << '\n';
    return R.exit_code;
}

int spectrum(const std::string& path) {
    const auto cfg = Config::load(path);
    const auto R = run_spectrum(cfg);
    const auto stem = output_stem(cfg, "spectrum");
    write_spectrum_outputs(R, stem);
    for (const auto& c : R.manifest["checks"])
        std::cout << (c["pass"].get<bool>() ? "ok    " : "FAIL  ") << c["name"].get<std::string>() << " = "
                  << fmt_num(c["value"].get<double>()) << '\n';
    return 0;
}

int deficit(const std::string& path, double s) {
    const auto u = load_field(path);
    return std::visit(
        [&](const auto& f) {
            SobolevParams P;
            try {
                P = make_params(f.grid->dim(), s);
            } catch (const PreconditionError& e) {
                throw ConfigError(e.what());
            }
            std::cout << deficit_report(f, P).to_kv(P.n);
            return 0;
        },
        u);
}

int fit(const std::string& field_path, const std::string& cfg_path) {
    const auto cfg = Config::load(cfg_path);
    const auto u = load_field(field_path);
    const auto P = params_from(cfg);
    const int nu = cfg.require<int>("fit.nu");
    if (nu < 1) throw ConfigError("config: fit.nu must be positive");
    std::vector<BubbleParams> init;
    for (int i = 0; i < nu; ++i) {
        std::istringstream is(cfg.require<std::string>("fit.bubble" + std::to_string(i)));
        BubbleParams b;
        for (int a = 0; a < P.n; ++a) is >> b.z[a];
        if (!(is >> b.lambda) || !(b.lambda > 0)) throw ConfigError("config: fit.bubble" + std::to_string(i) + " needs z... lambda");
        init.push_back(b);
    }
    FitOptions fo;
    fo.max_iter = cfg.get("fit.max_iter", fo.max_iter);
    fo.grad_tol = cfg.get("fit.grad_tol", fo.grad_tol);
    const auto stem = output_stem(cfg, "fit");
    return std::visit(
        [&](const auto& f) {
            if (f.grid->dim() != P.n) throw ConfigError("config: params.n does not match the field file");
            const auto C = make_config(P, init);
            const auto F = fit_bubbles(f, nu, C, fo);
            std::ofstream os(stem + ".csv");
            os << "index,z0,z1,z2,lambda\n";
            for (int i = 0; i < nu; ++i) {
                const auto& b = F.fitted.bubbles[i];
                os << i << ',' << fmt_num(b.z[0]) << ',' << fmt_num(b.z[1]) << ',' << fmt_num(b.z[2]) << ','
                   << fmt_num(b.lambda) << '\n';
            }
            nlohmann::json m = {{"kind", "fit"},
                                {"code_version", FRACSTAB_VERSION},
                                {"config", cfg.to_json()},
                                {"field_file", field_path},
                                {"grid", f.grid->header()},
                                {"residual_hs", F.residual_hs},
                                {"ortho_defect", F.ortho_defect},
                                {"gradient_norm", F.gradient_norm},
                                {"iterations", F.iterations},
                                {"Q_max", F.fitted.Q_max},
                                {"objective", F.objective}};
            write_json(stem + ".manifest.json", m);
            std::cout << "residual_hs = " << fmt_num(F.residual_hs) << "\northo_defect = " << fmt_num(F.ortho_defect)
                      << "\niterations = " << F.iterations << "\nwrote " << stem << ".{csv,manifest.json}\n";
            return 0;
        },
        u);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fracstab: quantitative stability experiments for the fractional Sobolev inequality"};
    app.require_subcommand(1);
    std::string cfg, field;
    double s = 0;

    auto* sw = app.add_subcommand("scaling-sweep", "sweep two-bubble configurations and fit scaling laws");
    sw->add_option("config", cfg)->required();
    auto* ic = app.add_subcommand("interaction-check", "pair interaction integrals against Q");
    ic->add_option("config", cfg)->required();
    auto* sp = app.add_subcommand("spectrum", "linearized eigenvalues around one or two bubbles");
    sp->add_option("config", cfg)->required();
    auto* de = app.add_subcommand("deficit", "deficits and single-bubble fit of a saved field");
    de->add_option("field-file", field)->required();
    de->add_option("--s", s, "fractional order")->required();
    auto* fi = app.add_subcommand("fit", "fit nu bubbles to a saved field");
    fi->add_option("field-file", field)->required();
    fi->add_option("config", cfg)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*sw) return scaling_sweep(cfg);
        if (*ic) return interaction_check(cfg);
        if (*sp) return spectrum(cfg);
        if (*de) return deficit(field, s);
        if (*fi) return fit(field, cfg);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
