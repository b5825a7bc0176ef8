#include "tilediff/kernels.hpp"

#include "tilediff/error.hpp"
#include "tilediff/rng.hpp"

#include <omp.h>

#include <exception>
#include <limits>
#include <string>

namespace tilediff::kernels {

namespace {

// Advances patch `index`; returns false if it was skipped as background.
bool process_patch(const PatchIteration& it, const PatchGrid& small, long index, ImagePlane& x_next) {
    const PatchRect rect = it.grid.rect(index);
    if (it.mask && !it.mask->covers_tissue(rect, it.mask_scale)) {
        fill_patch(x_next, rect, it.background);
        return false;
    }
    const ImagePlane patch = extract_patch(it.x_prev, rect, it.background);
    ImagePlane guide;
    if (it.z_prev) guide = extract_patch(*it.z_prev, small.rect(index), it.background);
    try {
        const ImagePlane stepped = guided_step(it.ctx, patch, it.z_prev ? &guide : nullptr, it.step);
        write_patch(x_next, rect, stepped);
    } catch (const NumericalFailure& e) {
        FailureSite outer;
        outer.iteration = it.iteration;
        outer.patch = index;
        outer.stage = it.ctx.stage;
        throw e.with_context(outer);
    }
    return true;
}

void check_shapes(const PatchIteration& it, const ImagePlane& x_next, int factor) {
    validate(it.grid, factor);
    if (it.grid.extent != it.x_prev.extent() || !x_next.same_shape(it.x_prev)) {
        throw ShapeMismatch("patch iteration: grid, source and destination extents differ");
    }
    if (it.z_prev && (it.z_prev->height() * factor != it.x_prev.height() ||
                      it.z_prev->width() * factor != it.x_prev.width())) {
        throw ShapeMismatch("patch iteration: guide image is not 1/k of the current image");
    }
}

}  // namespace

IterationCounts step_patches_serial(const PatchIteration& it, ImagePlane& x_next) {
    const int k = it.ctx.downsample.factor;
    check_shapes(it, x_next, k);
    const PatchGrid small = guide_grid(it.grid, k);
    IterationCounts counts;
    counts.patches = it.grid.count();
    for (long i = 0; i < counts.patches; ++i) {
        if (process_patch(it, small, i, x_next)) ++counts.stepped;
    }
    counts.skipped = counts.patches - counts.stepped;
    return counts;
}

IterationCounts step_patches_omp(const PatchIteration& it, ImagePlane& x_next, int workers) {
    const int k = it.ctx.downsample.factor;
    check_shapes(it, x_next, k);
    const PatchGrid small = guide_grid(it.grid, k);
    const long total = it.grid.count();

    long stepped = 0;
    // Patches are write-disjoint; the lowest failing index wins so the
    // reported error does not depend on scheduling.
    long failed_index = std::numeric_limits<long>::max();
    std::exception_ptr failure;

#pragma omp parallel for num_threads(workers) schedule(dynamic, 1) reduction(+ : stepped)
    for (long i = 0; i < total; ++i) {
        try {
            if (process_patch(it, small, i, x_next)) ++stepped;
        } catch (...) {
#pragma omp critical(tilediff_patch_failure)
            {
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
    return {total, stepped, total - stepped};
}

IterationCounts step_patches(const PatchIteration& it, ImagePlane& x_next, int workers) {
    return workers <= 1 ? step_patches_serial(it, x_next) : step_patches_omp(it, x_next, workers);
}

ImagePlane downsample_omp(const DownsampleOperator& op, const ImagePlane& u, int workers) {
    validate(op);
    const long k = op.factor;
    if (u.height() % k != 0 || u.width() % k != 0) {
        throw ShapeMismatch("downsample: " + describe_shape(u) + " not divisible by " + std::to_string(k));
    }
    const long h = u.height() / k;
    const long w = u.width() / k;
    ImagePlane out(u.channels(), h, w, u.resolution() * static_cast<double>(k));
    const double inv = 1.0 / static_cast<double>(k * k);
    const long rows = static_cast<long>(u.channels()) * h;

    // Same summation order as the serial reference: row by row, then scale.
#pragma omp parallel for num_threads(workers) schedule(static)
    for (long cr = 0; cr < rows; ++cr) {
        const int c = static_cast<int>(cr / h);
        const long by = cr % h;
        double* dst = out.row(c, by);
        for (long dy = 0; dy < k; ++dy) {
            const double* src = u.row(c, by * k + dy);
            for (long bx = 0; bx < w; ++bx) {
                double acc = 0.0;
                for (long dx = 0; dx < k; ++dx) acc += src[bx * k + dx];
                dst[bx] += acc;
            }
        }
        for (long bx = 0; bx < w; ++bx) dst[bx] *= inv;
    }
    return out;
}

ImagePlane initial_noise_omp(int channels, long height, long width, double sigma_max, std::uint64_t seed,
                             std::uint32_t stage, const StorageOptions& storage, int workers) {
    ImagePlane x(channels, height, width, 0.0, storage);
    const long rows = static_cast<long>(channels) * height;
#pragma omp parallel for num_threads(workers) schedule(static)
    for (long cr = 0; cr < rows; ++cr) {
        RngStream stream(StreamKey{seed, stage, 0, static_cast<std::uint64_t>(cr), StreamPurpose::InitialNoise});
        const int c = static_cast<int>(cr / height);
        fill_normal(stream, {x.row(c, cr % height), static_cast<std::size_t>(width)}, sigma_max);
    }
    return x;
}

}  // namespace tilediff::kernels
