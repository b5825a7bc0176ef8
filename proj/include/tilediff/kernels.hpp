#pragma once

#include "tilediff/guidance.hpp"
#include "tilediff/image.hpp"
#include "tilediff/patch_grid.hpp"
#include "tilediff/solver.hpp"
#include "tilediff/tissue.hpp"

#include <cstdint>
#include <span>

// Data-parallel kernels. Each has a serial reference version, kept as the
// ground truth for tests, and an OpenMP version that must produce
// bit-identical results for any worker count.
namespace tilediff::kernels {

/// One grid-shift iteration: every patch of `grid` over `x_prev` that
/// covers tissue is advanced by guided_step and written to `x_next`; the
/// rest is filled with `background`.
struct PatchIteration {
    const StepContext& ctx;
    const ImagePlane& x_prev;
    /// Previous stage image, or null for unguided refinement.
    const ImagePlane* z_prev = nullptr;
    PatchGrid grid{};
    int step = 0;
    std::span<const double> background{};
    /// Null means every patch is tissue.
    const TissueMask* mask = nullptr;
    /// Size ratio between the current image and z_0, for mask lookups.
    long mask_scale = 1;
    /// Reported with numerical failures.
    int iteration = 0;
};

struct IterationCounts {
    long patches = 0;
    long stepped = 0;
    long skipped = 0;
};

IterationCounts step_patches_serial(const PatchIteration& it, ImagePlane& x_next);
IterationCounts step_patches_omp(const PatchIteration& it, ImagePlane& x_next, int workers);
/// Serial reference for workers <= 1, OpenMP otherwise.
IterationCounts step_patches(const PatchIteration& it, ImagePlane& x_next, int workers);

ImagePlane downsample_omp(const DownsampleOperator& op, const ImagePlane& u, int workers);

ImagePlane initial_noise_omp(int channels, long height, long width, double sigma_max, std::uint64_t seed,
                             std::uint32_t stage, const StorageOptions& storage, int workers);

}  // namespace tilediff::kernels
