#pragma once

#include "tilediff/denoiser.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/image.hpp"
#include "tilediff/schedule.hpp"

#include <cstdint>
#include <optional>

namespace tilediff {

enum class SolverMethod { Heun, Euler };

/// Everything a guided step needs besides the image and the guide.
/// Referenced objects must outlive the context and stay unchanged.
struct StepContext {
    const NoiseSchedule& schedule;
    const Denoiser& denoiser;
    GuidanceConfig guidance{};
    DownsampleOperator downsample{};
    /// Spatial resolution in µm/px passed to the denoiser.
    double resolution = 1.0;
    SolverMethod method = SolverMethod::Heun;
    /// Stage index reported with numerical failures, if any.
    std::optional<int> stage{};
};

/// One step x_i -> x_{i+1} of the probability-flow ODE dx = (x - u)/sigma dt,
/// where u is the denoised estimate, projected onto {A v = y} whenever a
/// guide is present and should_guide(i) holds. Heun adds the trapezoidal
/// correction except on the final step into t_N = 0.
///
/// Throws NumericalFailure (with the step index) if any intermediate is non-finite.
ImagePlane guided_step(const StepContext& ctx, const ImagePlane& x, const ImagePlane* guide, int step);

/// Integrates steps from..to-1 in order.
ImagePlane integrate(const StepContext& ctx, ImagePlane x, const ImagePlane* guide, int from, int to);

/// x_0 ~ Normal(0, sigma_max^2 I) drawn from the seed's initial-noise
/// stream, then N unguided steps. The result carries ctx.resolution.
ImagePlane sample_unconditional(const StepContext& ctx, int channels, long height, long width, std::uint64_t seed);

/// Initial noise for a stage: row r of channel c comes from stream
/// (seed, stage, 0, c*height + r, InitialNoise), so the draw does not
/// depend on how work is split across threads.
ImagePlane initial_noise(int channels, long height, long width, double sigma_max, std::uint64_t seed,
                         std::uint32_t stage, const StorageOptions& storage = {});

}  // namespace tilediff
