#pragma once

#include "tilediff/denoiser.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/image.hpp"
#include "tilediff/schedule.hpp"
#include "tilediff/solver.hpp"
#include "tilediff/tissue.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace tilediff {

/// Geometry of the coarse-to-fine run: z_0 is M x M, every stage grows
/// the extent by k, so z_L is (M k^L)^2 at s_L = s_0 / k^L.
struct StagePlan {
    int levels = 7;
    int factor = 2;
    long patch_size = 512;
    int channels = 3;
    double s0_min = 80.0;
    double s0_max = 150.0;
    /// Per-channel fill colour; empty means "median of z_0's corners".
    std::vector<double> background{};
    bool grid_shift = true;
    bool tissue_masking = true;
    TissueThreshold tissue{};

    /// M k^l. Throws InvalidParameter on overflow.
    std::uint64_t extent_at(int level) const;
    std::uint64_t final_extent() const { return extent_at(levels); }
    double resolution_at(double s0, int level) const;

    friend bool operator==(const StagePlan&, const StagePlan&) = default;
};

/// Throws InvalidParameter for non-positive sizes, k < 2, M not divisible
/// by k, or an empty/inverted s0 range.
void validate(const StagePlan& plan);

/// Everything an upscaling run needs besides the denoiser and the seed.
struct PyramidSettings {
    StagePlan plan{};
    NoiseSchedule schedule = build_schedule(40, 0.002, 80.0, 7.0);
    GuidanceConfig guidance{};
    SolverMethod method = SolverMethod::Heun;
    int workers = 1;
    bool single_precision = false;
    StorageOptions storage{};
};

struct IterationRecord {
    long offset_y = 0;
    long offset_x = 0;
    long patches = 0;
    long stepped = 0;
    long skipped = 0;
};

struct StageTrace {
    int stage = 0;
    std::vector<IterationRecord> iterations;

    long total_stepped() const;
    long max_patches_per_iteration() const;
};

/// Inputs of one stage beyond the previous image.
struct StageInputs {
    int stage = 1;
    /// Spatial resolution of the stage being produced (s_0 / k^stage).
    double resolution = 1.0;
    std::vector<double> background{};
    const TissueMask* mask = nullptr;
    /// Scale of this stage's extent relative to z_0 (k^stage).
    long mask_scale = 1;
};

/// One coarse-to-fine stage: fresh noise at k times z_prev's extent, then
/// N iterations of (shift grid, guided step on every tissue patch, stitch).
/// With grid_shift off the offset stays (0, 0). Returns x_N tagged with
/// `inputs.resolution`.
ImagePlane upscale_stage(const ImagePlane& z_prev, const PyramidSettings& settings, const StageInputs& inputs,
                         const Denoiser& denoiser, std::uint64_t seed, StageTrace* trace = nullptr);

/// Convenience overload: stage 1, resolution z_prev.resolution()/k, no mask,
/// background from settings or z_prev's corners.
ImagePlane upscale_stage(const ImagePlane& z_prev, const PyramidSettings& settings, const Denoiser& denoiser,
                         std::uint64_t seed, StageTrace* trace = nullptr);

struct PyramidRun {
    StagePlan plan{};
    std::uint64_t seed = 0;
    double s0 = 0.0;
    std::vector<double> background{};
    TissueMask mask{};
    std::vector<ImagePlane> levels;
    std::vector<double> stage_seconds;
    std::vector<StageTrace> traces;
};

/// Called after each level l (0..L) is complete, e.g. to stream it to disk.
using LevelCallback = std::function<void(int level, const ImagePlane& image, double seconds)>;

/// Full run: s_0 ~ U(s0_range), z_0 unconditional, tissue mask from z_0
/// (cell size max(1, M / k^L) pixels of z_0), then stages 1..L in order.
PyramidRun generate_wsi(const PyramidSettings& settings, const Denoiser& denoiser, std::uint64_t seed,
                        const LevelCallback& on_level = {});

/// s_0 for a seed, drawn from the seed's resolution stream.
double draw_initial_resolution(const StagePlan& plan, std::uint64_t seed);

}  // namespace tilediff
