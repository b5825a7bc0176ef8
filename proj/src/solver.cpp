#include "tilediff/solver.hpp"

#include "tilediff/error.hpp"
#include "tilediff/rng.hpp"

#include <string>

namespace tilediff {

namespace {

void require_finite(const ImagePlane& img, const char* what, const StepContext& ctx, int step) {
    if (!img.all_finite()) {
        FailureSite site;
        site.step = step;
        site.stage = ctx.stage;
        throw NumericalFailure(std::string("non-finite ") + what, site);
    }
}

// Slope (x - u_bar) / sigma at noise level sigma(t_index).
ImagePlane slope(const StepContext& ctx, const ImagePlane& x, const ImagePlane* guide, bool guided, int index,
                 int step) {
    const double sigma = ctx.schedule.sigma(index);
    ImagePlane u = ctx.denoiser(x, sigma, ctx.resolution);
    if (!u.same_shape(x)) {
        throw ContractViolation("denoiser returned " + describe_shape(u) + " for input " + describe_shape(x));
    }
    require_finite(u, "denoiser output", ctx, step);
    if (guided) project_onto_guide(ctx.downsample, u, *guide);

    auto us = u.samples();
    auto xs = x.samples();
    const double inv = 1.0 / sigma;
    for (std::size_t j = 0; j < us.size(); ++j) us[j] = (xs[j] - us[j]) * inv;
    return u;
}

}  // namespace

ImagePlane guided_step(const StepContext& ctx, const ImagePlane& x, const ImagePlane* guide, int step) {
    const int n = ctx.schedule.num_steps();
    if (step < 0 || step >= n) {
        throw InvalidParameter("step index " + std::to_string(step) + " outside [0, " + std::to_string(n) + ")");
    }
    require_finite(x, "input", ctx, step);

    const bool guided = guide != nullptr && should_guide(step, ctx.guidance);
    const double t_cur = ctx.schedule.time(step);
    const double t_next = ctx.schedule.time(step + 1);
    const double h = t_next - t_cur;

    const ImagePlane d = slope(ctx, x, guide, guided, step, step);
    ImagePlane next = x;
    {
        auto ns = next.samples();
        auto ds = d.samples();
        for (std::size_t j = 0; j < ns.size(); ++j) ns[j] += h * ds[j];
    }

    if (ctx.method == SolverMethod::Heun && t_next != 0.0) {
        const ImagePlane d_prime = slope(ctx, next, guide, guided, step + 1, step);
        auto ns = next.samples();
        auto xs = x.samples();
        auto ds = d.samples();
        auto dp = d_prime.samples();
        for (std::size_t j = 0; j < ns.size(); ++j) ns[j] = xs[j] + h * (0.5 * ds[j] + 0.5 * dp[j]);
    }
    require_finite(next, "step result", ctx, step);
    return next;
}

ImagePlane integrate(const StepContext& ctx, ImagePlane x, const ImagePlane* guide, int from, int to) {
    for (int i = from; i < to; ++i) x = guided_step(ctx, x, guide, i);
    return x;
}

ImagePlane initial_noise(int channels, long height, long width, double sigma_max, std::uint64_t seed,
                         std::uint32_t stage, const StorageOptions& storage) {
    ImagePlane x(channels, height, width, 0.0, storage);
    for (int c = 0; c < channels; ++c) {
        for (long y = 0; y < height; ++y) {
            RngStream stream(StreamKey{seed, stage, 0, static_cast<std::uint64_t>(c) * height + y,
                                       StreamPurpose::InitialNoise});
            fill_normal(stream, {x.row(c, y), static_cast<std::size_t>(width)}, sigma_max);
        }
    }
    return x;
}

ImagePlane sample_unconditional(const StepContext& ctx, int channels, long height, long width, std::uint64_t seed) {
    ImagePlane x = initial_noise(channels, height, width, ctx.schedule.sigma_max(), seed, 0);
    x.set_resolution(ctx.resolution);
    return integrate(ctx, std::move(x), nullptr, 0, ctx.schedule.num_steps());
}

}  // namespace tilediff
