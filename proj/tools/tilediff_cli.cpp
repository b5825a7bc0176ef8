// tilediff: coarse-to-fine tiled diffusion sampler and its evaluation tools.

#include "tilediff/config.hpp"
#include "tilediff/error.hpp"
#include "tilediff/eval.hpp"
#include "tilediff/pyramid.hpp"
#include "tilediff/pyramid_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace tilediff;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

/// Flags shared by every subcommand; unset flags leave the config alone.
struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
    std::string precision;
    std::string convention;
    std::optional<int> r;
    std::optional<int> levels;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "run configuration file (key = value lines)");
    cmd->add_option("--seed", f.seed, "64-bit run seed");
    cmd->add_option("--workers", f.workers, "parallel workers")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "output directory or report file");
    cmd->add_option("--precision", f.precision, "sample precision")->check(CLI::IsMember({"single", "double"}));
    cmd->add_option("--convention", f.convention, "guidance gating")->check(CLI::IsMember({"alg1", "inverted"}));
}

/// File < environment < flags.
RunConfig resolve_config(const CommonFlags& f, RunConfig base = {}) {
    RunConfig cfg = f.config.empty() ? std::move(base) : load_config(f.config, std::move(base));
    apply_env(cfg);
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) cfg.workers = *f.workers;
    if (!f.out.empty()) cfg.output = f.out;
    if (!f.precision.empty()) cfg.precision = parse_precision(f.precision);
    if (!f.convention.empty()) cfg.guidance.convention = parse_convention(f.convention);
    if (f.r) cfg.guidance.r = *f.r;
    if (f.levels) cfg.plan.levels = *f.levels;
    validate(cfg);
    return cfg;
}

/// Desk-scale defaults for the evaluation commands.
RunConfig eval_defaults() {
    RunConfig cfg;
    cfg.plan.levels = 1;
    cfg.plan.patch_size = 32;
    cfg.plan.channels = 1;
    cfg.plan.background = {0.0};
    cfg.plan.tissue_masking = false;
    cfg.denoiser = "builtin:texture";
    return cfg;
}

void emit_table(const ReportTable& table, const std::string& out) {
    if (out.empty() || out == "-") {
        table.write(std::cout);
        return;
    }
    std::ofstream f(out);
    if (!f) throw IoError("cannot write report " + out);
    table.write(f);
    if (!f) throw IoError("write failed for report " + out);
}

void print_ok(nlohmann::json j) {
    j["status"] = "ok";
    std::cout << j.dump() << std::endl;
}

// ---------------------------------------------------------------------------

int run_generate(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const PyramidSettings settings = to_settings(cfg);
    const auto denoiser = make_denoiser(cfg.denoiser, cfg.plan.channels, cfg.plan.patch_size);
    PyramidWriter writer(cfg.output, cfg, cfg.seed);
    PyramidRun run;
    try {
        run = generate_wsi(settings, *denoiser, cfg.seed, [&](int level, const ImagePlane& img, double seconds) {
            writer.write_level(level, img, seconds);
            std::cerr << "level " << level << ": " << img.height() << "x" << img.width() << " in " << seconds << " s\n";
        });
    } catch (const std::exception& e) {
        writer.fail(e.what());
        throw;
    }
    writer.finish();
    print_ok({{"command", "generate"},
              {"manifest", (fs::path(cfg.output) / "manifest").string()},
              {"levels", run.levels.size()},
              {"final_extent", run.levels.back().height()},
              {"s0", run.s0},
              {"seed", cfg.seed}});
    return kOk;
}

int run_upscale(const CommonFlags& flags, const std::string& input, std::optional<double> resolution) {
    RunConfig cfg = resolve_config(flags);
    cfg.plan.levels = 1;
    const PyramidSettings settings = to_settings(cfg);

    ImagePlane z_prev = fs::path(input).extension() == ".png" ? read_png(input, cfg.plan.channels == 1 ? 1 : 3)
                                                              : read_raw(input, settings.storage);
    if (z_prev.channels() != cfg.plan.channels) {
        throw ShapeMismatch("input has " + std::to_string(z_prev.channels()) + " channels, config expects " +
                            std::to_string(cfg.plan.channels));
    }
    if (resolution) z_prev.set_resolution(*resolution);
    if (!(z_prev.resolution() > 0.0)) z_prev.set_resolution(cfg.plan.s0_min);

    const auto denoiser = make_denoiser(cfg.denoiser, cfg.plan.channels, cfg.plan.patch_size);
    PyramidWriter writer(cfg.output, cfg, cfg.seed);
    StageTrace trace;
    try {
        writer.write_level(0, z_prev, 0.0);
        const auto started = std::chrono::steady_clock::now();
        const ImagePlane z = upscale_stage(z_prev, settings, *denoiser, cfg.seed, &trace);
        writer.write_level(1, z, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    } catch (const std::exception& e) {
        writer.fail(e.what());
        throw;
    }
    writer.finish();
    print_ok({{"command", "upscale"},
              {"manifest", (fs::path(cfg.output) / "manifest").string()},
              {"extent", z_prev.height() * cfg.plan.factor},
              {"patches_stepped", trace.total_stepped()}});
    return kOk;
}

int run_eval_seams(const CommonFlags& flags, SeamStudyOptions opts) {
    RunConfig cfg = resolve_config(flags, eval_defaults());
    opts.base_seed = cfg.seed;
    const auto denoiser = make_denoiser(cfg.denoiser, cfg.plan.channels, opts.patch_size);
    const auto trials = seam_study(to_settings(cfg), *denoiser, opts);

    ReportTable table{{"seed", "fixed_grid_ratio", "grid_shift_ratio", "mask_shift_ratio"}, {}};
    int wins = 0;
    for (const auto& t : trials) {
        wins += t.shift_ratio < t.fixed_ratio;
        table.add_row({std::to_string(t.seed), format_number(t.fixed_ratio), format_number(t.shift_ratio),
                       std::isnan(t.mask_ratio) ? "-" : format_number(t.mask_ratio)});
    }
    emit_table(table, flags.out);
    std::cerr << "grid shift below fixed grid in " << wins << "/" << trials.size() << " seeds\n";
    return kOk;
}

int run_eval_solver(const CommonFlags& flags, const std::vector<int>& steps, SolverSweepOptions opts,
                    const std::string& oracle_ref) {
    RunConfig cfg = resolve_config(flags, eval_defaults());
    opts.base_seed = cfg.seed;
    opts.sigma_min = cfg.sigma_min;
    opts.sigma_max = cfg.sigma_max;
    opts.rho = cfg.rho;
    const auto denoiser = make_denoiser(oracle_ref, 1, opts.samples_per_image);
    const auto* oracle = dynamic_cast<const GaussianMixtureOracle*>(denoiser.get());
    if (!oracle) throw InvalidParameter("eval-solver needs a single-band Gaussian mixture oracle");

    ReportTable table{{"method", "steps", "error"}, {}};
    for (SolverMethod m : {SolverMethod::Heun, SolverMethod::Euler}) {
        const auto rows = solver_accuracy_sweep(*oracle, steps, m, opts);
        for (const auto& r : rows) table.add_row({to_string(m), std::to_string(r.steps), format_number(r.error)});
        if (rows.size() >= 2) table.add_row({to_string(m), "order", format_number(convergence_order(rows))});
    }
    emit_table(table, flags.out);
    return kOk;
}

int run_eval_relaxation(const CommonFlags& flags, const std::vector<int>& r_values, RelaxationOptions opts) {
    RunConfig cfg = resolve_config(flags, eval_defaults());
    opts.base_seed = cfg.seed;
    opts.channels = cfg.plan.channels;
    opts.factor = cfg.plan.factor;
    opts.convention = cfg.guidance.convention;
    opts.method = cfg.method;
    const auto denoiser = make_denoiser(cfg.denoiser, cfg.plan.channels, opts.patch_size);
    const auto schedule = build_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);
    const auto rep = relaxation_sweep(schedule, *denoiser, r_values, opts);

    ReportTable table{{"r", "mean_consistency_error"}, {}};
    for (const auto& row : rep.rows) table.add_row({std::to_string(row.r), format_number(row.mean_error)});
    table.add_row({"unguided", format_number(rep.unguided_mean)});
    table.add_row({"spearman_rho", format_number(rep.trend.rho)});
    table.add_row({"spearman_p", format_number(rep.trend.p_value)});
    emit_table(table, flags.out);
    return kOk;
}

int run_bench_stitch(const CommonFlags& flags, const std::vector<long>& multiples, const std::vector<double>& overlaps) {
    RunConfig cfg = resolve_config(flags, eval_defaults());
    const auto denoiser = make_denoiser(cfg.denoiser, cfg.plan.channels, cfg.plan.patch_size);
    std::vector<long> extents;
    for (long m : multiples) extents.push_back(m * cfg.plan.patch_size);
    const auto rows = stitch_benchmark(to_settings(cfg), *denoiser, extents, overlaps, cfg.seed);

    ReportTable table{{"extent", "overlap", "grid_mean_patches", "grid_max_patches", "grid_calls", "grid_seconds",
                       "mask_patches", "mask_calls", "mask_seconds"},
                      {}};
    for (const auto& r : rows) {
        table.add_row({std::to_string(r.extent), format_number(r.overlap), format_number(r.grid_mean_patches),
                       std::to_string(r.grid_max_patches), std::to_string(r.grid_denoiser_calls),
                       format_number(r.grid_seconds), std::to_string(r.mask_patches),
                       std::to_string(r.mask_denoiser_calls), format_number(r.mask_seconds)});
    }
    emit_table(table, flags.out);
    return kOk;
}

int run_verify(const std::string& dir) {
    const auto problems = verify_pyramid(dir);
    for (const auto& p : problems) std::cout << p << "\n";
    if (!problems.empty()) throw IoError(std::to_string(problems.size()) + " problem(s) in " + dir + ": " + problems.front());
    print_ok({{"command", "verify"}, {"dir", dir}});
    return kOk;
}

int error_exit(const std::string& kind, const std::string& message, int code, const FailureSite* site = nullptr) {
    nlohmann::json j{{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
    if (site) {
        if (site->stage) j["stage"] = *site->stage;
        if (site->iteration) j["iteration"] = *site->iteration;
        if (site->patch) j["patch"] = *site->patch;
        if (site->step) j["step"] = *site->step;
    }
    std::cerr << j.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine tiled diffusion sampler for gigapixel image pyramids"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kSoftwareVersion);

    CommonFlags flags;

    auto* generate = app.add_subcommand("generate", "sample a full pyramid from a config");
    add_common(generate, flags);
    generate->add_option("--r", flags.r, "guidance relaxation step bound");
    generate->add_option("--levels", flags.levels, "number of upscaling stages");

    std::string input;
    std::optional<double> input_resolution;
    auto* upscale = app.add_subcommand("upscale", "run one upscaling stage on an image");
    add_common(upscale, flags);
    upscale->add_option("--input", input, "input image (.raw dump or .png)")->required()->check(CLI::ExistingFile);
    upscale->add_option("--resolution", input_resolution, "spatial resolution of the input in um/px");
    upscale->add_option("--r", flags.r, "guidance relaxation step bound");

    SeamStudyOptions seam_opts;
    auto* seams = app.add_subcommand("eval-seams", "seam energy of fixed grid vs grid shifting");
    add_common(seams, flags);
    seams->add_option("--r", flags.r, "guidance relaxation step bound");
    seams->add_option("--seeds", seam_opts.seeds, "number of seeds")->check(CLI::PositiveNumber);
    seams->add_option("--patch", seam_opts.patch_size, "patch size M");
    seams->add_option("--extent", seam_opts.extent, "output extent");
    seams->add_flag("--mask-shift", seam_opts.include_mask_shift, "also run the mask-shifting baseline");
    seams->add_option("--overlap", seam_opts.overlap, "mask-shifting overlap fraction");

    std::vector<int> solver_steps{10, 20, 40, 80};
    SolverSweepOptions solver_opts;
    std::string solver_oracle = "builtin:gaussian";
    auto* solver = app.add_subcommand("eval-solver", "endpoint error against step count for Heun and Euler");
    add_common(solver, flags);
    solver->add_option("--steps", solver_steps, "step counts")->delimiter(',');
    solver->add_option("--seeds", solver_opts.seeds, "number of seeds")->check(CLI::PositiveNumber);
    solver->add_option("--oracle", solver_oracle, "Gaussian mixture oracle");

    std::vector<int> r_values{0, 10, 20, 28, 40};
    RelaxationOptions relax_opts;
    auto* relax = app.add_subcommand("eval-relaxation", "consistency error against the relaxation bound");
    add_common(relax, flags);
    relax->add_option("--r", r_values, "relaxation bounds to sweep")->delimiter(',');
    relax->add_option("--seeds", relax_opts.seeds, "number of seeds")->check(CLI::PositiveNumber);
    relax->add_option("--patch", relax_opts.patch_size, "patch size M");

    std::vector<long> multiples{2, 4, 8};
    std::vector<double> overlaps{0.25, 0.5, 0.75};
    auto* bench = app.add_subcommand("bench-stitch", "patch counts and time of grid shifting vs mask shifting");
    add_common(bench, flags);
    bench->add_option("--extents", multiples, "extents as multiples of M")->delimiter(',');
    bench->add_option("--overlap", overlaps, "mask-shifting overlap fractions")->delimiter(',');

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify", "re-check a pyramid's manifest, checksums and invariants");
    verify->add_option("dir", verify_dir, "pyramid directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return error_exit("usage", e.what(), kUsage);
    }

    try {
        if (*generate) return run_generate(flags);
        if (*upscale) return run_upscale(flags, input, input_resolution);
        if (*seams) return run_eval_seams(flags, seam_opts);
        if (*solver) return run_eval_solver(flags, solver_steps, solver_opts, solver_oracle);
        if (*relax) return run_eval_relaxation(flags, r_values, relax_opts);
        if (*bench) return run_bench_stitch(flags, multiples, overlaps);
        if (*verify) return run_verify(verify_dir);
    } catch (const NumericalFailure& e) {
        return error_exit(e.kind(), e.what(), kNumerical, &e.site());
    } catch (const IoError& e) {
        return error_exit(e.kind(), e.what(), kIo);
    } catch (const Error& e) {
        return error_exit(e.kind(), e.what(), kUsage);
    } catch (const std::filesystem::filesystem_error& e) {
        return error_exit("io", e.what(), kIo);
    } catch (const std::exception& e) {
        return error_exit("internal", e.what(), kNumerical);
    }
    return kUsage;
}
