#include "tilediff/pyramid.hpp"

#include "tilediff/error.hpp"
#include "tilediff/kernels.hpp"
#include "tilediff/patch_grid.hpp"
#include "tilediff/rng.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <string>

namespace tilediff {

std::uint64_t StagePlan::extent_at(int level) const {
    std::uint64_t e = static_cast<std::uint64_t>(patch_size);
    for (int l = 0; l < level; ++l) {
        if (e > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(factor)) {
            throw InvalidParameter("stage extent overflows");
        }
        e *= static_cast<std::uint64_t>(factor);
    }
    return e;
}

double StagePlan::resolution_at(double s0, int level) const {
    double scale = 1.0;
    for (int l = 0; l < level; ++l) scale *= factor;
    return s0 / scale;
}

void validate(const StagePlan& plan) {
    if (plan.levels < 0) throw InvalidParameter("level count must be non-negative");
    if (plan.factor < 2) throw InvalidParameter("upscale factor k must be at least 2");
    if (plan.patch_size <= 0) throw InvalidParameter("patch size M must be positive");
    if (plan.patch_size % plan.factor != 0) throw InvalidParameter("patch size M must be divisible by k");
    if (plan.channels <= 0) throw InvalidParameter("channel count must be positive");
    if (!(plan.s0_min > 0.0) || !(plan.s0_min <= plan.s0_max)) {
        throw InvalidParameter("initial spatial resolution range must satisfy 0 < s0_min <= s0_max");
    }
    if (!plan.background.empty() && plan.background.size() != static_cast<std::size_t>(plan.channels)) {
        throw InvalidParameter("background colour needs one value per channel");
    }
    if (!(plan.tissue.min_fraction >= 0.0 && plan.tissue.min_fraction <= 1.0)) {
        throw InvalidParameter("tissue fraction must lie in [0, 1]");
    }
    (void)plan.final_extent();
}

long StageTrace::total_stepped() const {
    long n = 0;
    for (const auto& it : iterations) n += it.stepped;
    return n;
}

long StageTrace::max_patches_per_iteration() const {
    long n = 0;
    for (const auto& it : iterations) n = std::max(n, it.patches);
    return n;
}

ImagePlane upscale_stage(const ImagePlane& z_prev, const PyramidSettings& settings, const StageInputs& inputs,
                         const Denoiser& denoiser, std::uint64_t seed, StageTrace* trace) {
    const StagePlan& plan = settings.plan;
    validate(plan);
    validate(settings.guidance, settings.schedule.num_steps());
    if (!z_prev.all_finite()) throw DomainError("upscale_stage: previous stage contains non-finite samples");
    if (z_prev.channels() != plan.channels) throw ShapeMismatch("upscale_stage: channel count differs from the plan");
    if (inputs.background.size() != static_cast<std::size_t>(plan.channels)) {
        throw InvalidParameter("upscale_stage: background needs one value per channel");
    }

    const int k = plan.factor;
    const long height = z_prev.height() * k;
    const long width = z_prev.width() * k;
    const int workers = std::max(1, settings.workers);

    StepContext ctx{settings.schedule, denoiser, settings.guidance, DownsampleOperator{k}, inputs.resolution,
                    settings.method, inputs.stage};

    ImagePlane x = kernels::initial_noise_omp(plan.channels, height, width, settings.schedule.sigma_max(), seed,
                                              static_cast<std::uint32_t>(inputs.stage), settings.storage, workers);
    ImagePlane next(plan.channels, height, width, 0.0, settings.storage);

    if (trace) {
        trace->stage = inputs.stage;
        trace->iterations.clear();
    }

    const PatchGrid base{plan.patch_size, 0, 0, {height, width}};
    for (int i = 0; i < settings.schedule.num_steps(); ++i) {
        PatchGrid grid = base;
        if (plan.grid_shift) {
            grid = shift_patch_grid(StreamKey{seed, static_cast<std::uint32_t>(inputs.stage),
                                              static_cast<std::uint32_t>(i), 0, StreamPurpose::GridShift},
                                    base, k);
        }
        kernels::PatchIteration it{ctx,   x,   &z_prev, grid, i, inputs.background, inputs.mask, inputs.mask_scale,
                                   i + 1};
        const auto counts = kernels::step_patches(it, next, workers);
        if (settings.single_precision) next.round_to_single();
        std::swap(x, next);
        if (trace) trace->iterations.push_back({grid.offset_y, grid.offset_x, counts.patches, counts.stepped, counts.skipped});
    }
    x.set_resolution(inputs.resolution);
    return x;
}

ImagePlane upscale_stage(const ImagePlane& z_prev, const PyramidSettings& settings, const Denoiser& denoiser,
                         std::uint64_t seed, StageTrace* trace) {
    StageInputs inputs;
    inputs.stage = 1;
    inputs.resolution = z_prev.resolution() / settings.plan.factor;
    inputs.background = settings.plan.background.empty() ? corner_median_background(z_prev) : settings.plan.background;
    return upscale_stage(z_prev, settings, inputs, denoiser, seed, trace);
}

double draw_initial_resolution(const StagePlan& plan, std::uint64_t seed) {
    RngStream stream(StreamKey{seed, 0, 0, 0, StreamPurpose::Resolution});
    return plan.s0_min + (plan.s0_max - plan.s0_min) * stream.next_uniform();
}

PyramidRun generate_wsi(const PyramidSettings& settings, const Denoiser& denoiser, std::uint64_t seed,
                        const LevelCallback& on_level) {
    const StagePlan& plan = settings.plan;
    validate(plan);
    validate(settings.guidance, settings.schedule.num_steps());

    using clock = std::chrono::steady_clock;
    PyramidRun run;
    run.plan = plan;
    run.seed = seed;
    run.s0 = draw_initial_resolution(plan, seed);

    auto started = clock::now();
    StepContext ctx{settings.schedule, denoiser, settings.guidance, DownsampleOperator{plan.factor}, run.s0,
                    settings.method, 0};
    ImagePlane z0 = sample_unconditional(ctx, plan.channels, plan.patch_size, plan.patch_size, seed);
    if (settings.single_precision) z0.round_to_single();
    z0.set_resolution(run.s0);
    run.stage_seconds.push_back(std::chrono::duration<double>(clock::now() - started).count());

    run.background = plan.background.empty() ? corner_median_background(z0) : plan.background;
    const long scale_l = static_cast<long>(plan.extent_at(plan.levels) / static_cast<std::uint64_t>(plan.patch_size));
    const long cell = std::max(1L, plan.patch_size / scale_l);
    run.mask = plan.tissue_masking ? tissue_mask_from(z0, run.background, cell, plan.tissue)
                                   : TissueMask::all_tissue(cell, z0.extent());
    run.levels.push_back(std::move(z0));
    run.traces.push_back(StageTrace{0, {}});
    if (on_level) on_level(0, run.levels.back(), run.stage_seconds.back());

    long scale = 1;
    for (int l = 1; l <= plan.levels; ++l) {
        scale *= plan.factor;
        started = clock::now();
        StageInputs inputs;
        inputs.stage = l;
        inputs.resolution = plan.resolution_at(run.s0, l);
        inputs.background = run.background;
        inputs.mask = &run.mask;
        inputs.mask_scale = scale;
        StageTrace trace;
        ImagePlane z = upscale_stage(run.levels.back(), settings, inputs, denoiser, seed, &trace);
        run.stage_seconds.push_back(std::chrono::duration<double>(clock::now() - started).count());
        run.traces.push_back(std::move(trace));
        run.levels.push_back(std::move(z));
        if (on_level) on_level(l, run.levels.back(), run.stage_seconds.back());
    }
    return run;
}

}  // namespace tilediff
