#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pdtv/errors.hpp"
#include "pdtv/harness.hpp"

namespace pdtv {

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_iter;
    std::string mode;
};

void attach_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON experiment config");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "override the seed list");
    cmd->add_option("--max-iter", flags.max_iter, "solver iteration cap");
    cmd->add_option("--mode", flags.mode,
                    "solver mode: alg1, alg2 or bregman");
}

ExperimentConfig resolve_config(const CommonFlags& flags,
                                ProblemKind default_problem) {
    ExperimentConfig cfg = flags.config_path.empty()
                               ? ExperimentConfig::defaults(default_problem)
                               : ExperimentConfig::load(flags.config_path);
    if (!flags.out_dir.empty()) cfg.output_dir = flags.out_dir;
    if (flags.seed) cfg.seeds = {*flags.seed};
    if (flags.max_iter) cfg.solver.max_iter = *flags.max_iter;
    if (!flags.mode.empty()) cfg.solver.mode = mode_from_string(flags.mode);
    cfg.validate();
    return cfg;
}

void print_summary(const RunSummary& s, const std::string& label) {
    std::cout << label << ": ";
    if (s.diverged) {
        std::cout << "diverged (" << s.error << ")\n";
        return;
    }
    std::cout << to_string(s.report.reason) << " at i*=" << s.report.i_star
              << ", residual=" << format_double(s.report.final_residual)
              << ", rel_error=" << format_double(s.final_rel_error) << '\n';
}

int run_sweep(const CommonFlags& flags) {
    const auto cfg = resolve_config(flags, ProblemKind::radon2d);
    const auto outcome = run_noise_sweep(cfg);
    bool diverged = false;
    for (const auto& r : outcome.runs) {
        print_summary(r, "sweep frac=" + format_double(r.noise_fraction) +
                             " seed=" + std::to_string(r.seed));
        diverged = diverged || r.diverged;
    }
    std::cout << "noise monotonicity: "
              << (outcome.monotone_rel_error ? "pass" : "fail") << '\n';
    std::cout << "wrote " << outcome.files.size() << " files under "
              << cfg.output_dir << '\n';
    return diverged ? 2 : 0;
}

int run_bench(const CommonFlags& flags) {
    const auto cfg = resolve_config(flags, ProblemKind::radon2d);
    const auto outcome = run_benchmark_alg1_vs_alg2(cfg);
    print_summary(outcome.alg1, "alg1");
    print_summary(outcome.alg2, "alg2");
    std::cout << "first to the discrepancy band: " << outcome.first_to_band
              << '\n';
    std::cout << "lower final rel_error: " << outcome.lower_final_rel_error
              << '\n';
    std::cout << "wrote " << outcome.files.size() << " files under "
              << cfg.output_dir << '\n';
    return outcome.alg1.diverged || outcome.alg2.diverged ? 2 : 0;
}

int run_gps(const CommonFlags& flags) {
    const auto cfg = resolve_config(flags, ProblemKind::gps3d);
    const auto outcome = run_gps_experiments(cfg);
    bool diverged = false;
    for (const auto& r : outcome.runs) {
        print_summary(r.summary,
                      "gps rays/station=" + std::to_string(r.rays_per_station) +
                          " schedule=" + to_string(r.schedule));
        std::cout << "  support jaccard: " << format_double(r.support_jaccard)
                  << '\n';
        diverged = diverged || r.summary.diverged;
    }
    std::cout << "wrote " << outcome.files.size() << " files under "
              << cfg.output_dir << '\n';
    return diverged ? 2 : 0;
}

int run_selftest_cmd(const CommonFlags& flags) {
    const std::string out_dir =
        flags.out_dir.empty() ? std::string("out") : flags.out_dir;
    const auto results = run_selftest();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw config_error("cannot create output directory " + out_dir);
    write_selftest_csv(out_dir + "/selftest.csv", results);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
        if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
        std::cout << '\n';
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "selftest passed" : "selftest FAILED") << '\n';
    return all_pass ? 0 : 1;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"TV-penalized Bregman primal-dual solver and tomography "
                 "experiment harness"};
    app.require_subcommand(1);

    CommonFlags sweep_flags, bench_flags, gps_flags, selftest_flags;
    auto* sweep = app.add_subcommand(
        "sweep", "noise sweep: one solver run per (fraction, seed)");
    attach_common(sweep, sweep_flags);
    auto* bench = app.add_subcommand(
        "bench", "both algorithms on the identical measurement");
    attach_common(bench, bench_flags);
    auto* gps = app.add_subcommand(
        "gps", "satellite-to-station scenes and schedule comparison");
    attach_common(gps, gps_flags);
    auto* selftest =
        app.add_subcommand("selftest", "run the invariant suite");
    attach_common(selftest, selftest_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n' << app.help() << '\n';
        return 1;
    }

    try {
        if (sweep->parsed()) return run_sweep(sweep_flags);
        if (bench->parsed()) return run_bench(bench_flags);
        if (gps->parsed()) return run_gps(gps_flags);
        if (selftest->parsed()) return run_selftest_cmd(selftest_flags);
    } catch (const divergence_error& e) {
        std::cerr << "solver diverged: " << e.what() << '\n';
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace pdtv
