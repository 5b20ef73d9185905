#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stablecir/harness.hpp"
#include "stablecir/validation.hpp"

namespace fs = std::filesystem;
using namespace stablecir;

namespace {

enum ExitCode { kOk = 0, kInputError = 2, kNonconvergence = 3, kValidationFailure = 4 };

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> known_alpha;
    unsigned threads = 1;
};

StudyConfig load_with_overrides(const CommonFlags& f) {
    StudyConfig c = load_study_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (!f.out.empty()) c.output_dir = f.out;
    return c;
}

void check_known_alpha(const std::optional<double>& a) {
    if (a && !(*a > 1.0 && *a < 2.0)) throw InputError("--known-alpha must lie in (1,2)");
}

int cmd_simulate(const CommonFlags& f) {
    const StudyConfig c = load_with_overrides(f);
    fs::create_directories(c.output_dir);
    const auto files = run_simulate(c, c.output_dir, f.threads);
    std::cout << "wrote " << files.size() << " paths to " << c.output_dir.string() << "\n";
    return kOk;
}

int cmd_estimate(const CommonFlags& f, const std::string& path_file, double p_exponent, const std::string& regime) {
    check_known_alpha(f.known_alpha);
    RegimeSpec spec;
    if (!f.config.empty()) {
        const StudyConfig c = load_study_config(f.config);
        p_exponent = c.p_exponent;
        spec = c.regime;
    }
    if (regime == "ergodic")
        spec.regime = Regime::Ergodic;
    else if (regime == "fixed_window")
        spec.regime = Regime::FixedWindow;
    if (!(p_exponent > 0.5)) throw InputError("--p-exponent must exceed 1/2");

    const PathSample path = io::read_path(path_file);
    const EstimationResult r = estimate_path(path, p_exponent, f.known_alpha, spec);

    const fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
    fs::create_directories(dir);
    const std::string stem = fs::path(path_file).stem().string();
    io::write_file_atomic(dir / (stem + ".result.json"), io::to_json(r).dump(2) + "\n");
    io::write_file_atomic(dir / (stem + ".result.csv"), io::result_csv(r));

    std::printf("converged=%s iterations=%zu residual=%.3g\n", r.converged ? "true" : "false", r.iterations,
                r.residual_norm);
    std::printf("sigma_sq=%.6g delta=%.6g alpha=%.6g\n", r.theta_hat.sigma_sq, r.theta_hat.delta, r.theta_hat.alpha);
    if (!r.converged) {
        std::fprintf(stderr, "estimation did not converge: %s\n", r.message.c_str());
        return kNonconvergence;
    }
    return kOk;
}

int cmd_mc_study(const CommonFlags& f) {
    check_known_alpha(f.known_alpha);
    const StudyConfig c = load_with_overrides(f);
    if (c.regime.regime == Regime::Ergodic)
        for (const auto& g : c.grid)
            std::printf("grid n=%zu delta_n=%g: rate indicator sqrt(n) delta_n^(1/alpha+alpha/4-1/2) = %.4g\n", g.n,
                        g.delta_n, ergodic_rate_indicator(g.n, g.delta_n, c.params.alpha));
    StudyOptions o;
    o.threads = f.threads;
    o.known_alpha = f.known_alpha;
    const StudyRun run = run_mc_study(c, o);
    fs::create_directories(c.output_dir);
    write_study(run, c.output_dir);
    std::cout << summary_csv(run.summary);
    for (const auto& flag : run.summary.flags) std::cout << "note: " << flag << "\n";
    return kOk;
}

int cmd_validate(const CommonFlags& f, bool inject_sign_error) {
    if (inject_sign_error) debug::transition_sign().store(TransitionSign::Flipped);
    const auto report = validation::run_all([](const validation::ValidationCheck& c) {
        std::printf("%s\n", validation::format_line(c).c_str());
        std::fflush(stdout);
    });
    if (!f.out.empty()) {
        fs::create_directories(f.out);
        io::write_file_atomic(fs::path(f.out) / "validation.json", validation::to_json(report).dump(2) + "\n");
    }
    std::printf("%s\n", report.all_passed() ? "all checks passed" : "one or more checks failed");
    return report.all_passed() ? kOk : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volatility and jump activity estimation for the stable CIR model"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto add_seed = [&](CLI::App* s) {
        s->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { flags.seed = v; }, "Master seed override");
    };
    auto add_threads = [&](CLI::App* s) {
        s->add_option("--threads", flags.threads, "Worker threads (0 = hardware concurrency)");
    };
    auto add_known_alpha = [&](CLI::App* s) {
        s->add_option_function<double>("--known-alpha", [&](double v) { flags.known_alpha = v; },
                                       "Freeze alpha and estimate (sigma_sq, delta)");
    };

    auto* sim = app.add_subcommand("simulate", "Simulate paths described by a study config");
    sim->add_option("--config", flags.config, "Study config JSON")->required();
    sim->add_option("--out", flags.out, "Output directory (overrides output_dir)");
    add_seed(sim);
    add_threads(sim);

    std::string path_file, regime;
    double p_exponent = 0.51;
    auto* est = app.add_subcommand("estimate", "Estimate (sigma_sq, delta, alpha) from a path CSV");
    est->add_option("path", path_file, "Path CSV with header t,x")->required();
    est->add_option("--config", flags.config, "Study config supplying p_exponent and regime");
    est->add_option("--out", flags.out, "Output directory for <stem>.result.json/.csv");
    est->add_option("--p-exponent", p_exponent, "Bandwidth exponent p in u_n = ln(1/delta_n)^-p");
    est->add_option("--regime", regime, "fixed_window or ergodic")->check(CLI::IsMember({"fixed_window", "ergodic"}));
    add_known_alpha(est);
    add_seed(est);
    add_threads(est);

    auto* mc = app.add_subcommand("mc-study", "Monte Carlo study over the config grid");
    mc->add_option("--config", flags.config, "Study config JSON")->required();
    mc->add_option("--out", flags.out, "Output directory (overrides output_dir)");
    add_seed(mc);
    add_threads(mc);
    add_known_alpha(mc);

    bool inject = false;
    auto* val = app.add_subcommand("validate", "Run the oracle suite");
    val->add_option("--out", flags.out, "Directory for validation.json");
    val->add_flag("--debug-inject-k-sign-error", inject, "Use the flipped transition sign in K (mutation check)")
        ->group("");
    add_seed(val);
    add_threads(val);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    try {
        if (*sim) return cmd_simulate(flags);
        if (*est) return cmd_estimate(flags, path_file, p_exponent, regime);
        if (*mc) return cmd_mc_study(flags);
        if (*val) return cmd_validate(flags, inject);
    } catch (const InputError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kInputError;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kInputError;
    } catch (const SingularMatrixError& e) {
        std::fprintf(stderr, "estimation failed: %s\n", e.what());
        return kNonconvergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kOk;
}
