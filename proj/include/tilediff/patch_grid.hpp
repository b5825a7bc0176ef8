#pragma once

#include "tilediff/image.hpp"
#include "tilediff/rng.hpp"

#include <span>
#include <vector>

namespace tilediff {

/// Square patch placed at (y0, x0) in image coordinates; may hang over
/// the image border (negative origin or past the far edge).
struct PatchRect {
    long y0 = 0;
    long x0 = 0;
    long size = 0;
    friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

/// Tiling of an image by M x M patches whose origins sit at
/// j*M - offset along each axis. Offset (0, 0) is the plain fixed grid;
/// any nonzero offset adds one partially out-of-bounds row or column.
struct PatchGrid {
    long patch_size = 0;
    long offset_y = 0;
    long offset_x = 0;
    Extent extent{};

    long rows() const noexcept;
    long cols() const noexcept;
    long count() const noexcept { return rows() * cols(); }
    /// Row-major patch index -> placement.
    PatchRect rect(long index) const noexcept;

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Checks offsets lie in [0, M) and are multiples of `factor`.
void validate(const PatchGrid& grid, int factor);

/// Redraws the offset uniformly from {0, k, 2k, ..., M-k}^2 using `stream`.
PatchGrid shift_patch_grid(RngStream& stream, const PatchGrid& grid, int factor);
PatchGrid shift_patch_grid(const StreamKey& key, const PatchGrid& grid, int factor);

/// Copies the patch at `rect` out of `img`; samples outside the image take
/// the per-channel `background` value. Keeps img's resolution tag.
ImagePlane extract_patch(const ImagePlane& img, const PatchRect& rect, std::span<const double> background);

/// Writes the in-bounds part of `patch` into `dst` at `rect`.
void write_patch(ImagePlane& dst, const PatchRect& rect, const ImagePlane& patch);

/// Fills the in-bounds part of `rect` in `dst` with `background`.
void fill_patch(ImagePlane& dst, const PatchRect& rect, std::span<const double> background);

/// Grid on the guide image matching `grid` on the k-times larger image.
PatchGrid guide_grid(const PatchGrid& grid, int factor);

struct PatchPair {
    long index = 0;
    ImagePlane patch;  ///< M x M cut of the current image
    ImagePlane guide;  ///< (M/k) x (M/k) cut of the previous stage, same physical region
};

/// Pairs every patch of `x` with the guide patch of `z_prev` covering the
/// same region. Requires extent(x) = k * extent(z_prev), M divisible by k,
/// and offsets that are multiples of k.
std::vector<PatchPair> patch_pair(const ImagePlane& x, const ImagePlane& z_prev, const PatchGrid& grid, int factor,
                                  std::span<const double> background);

/// Inverse of patching: writes the in-bounds part of every patch exactly
/// once and drops padding. `patches[i]` belongs to grid index i; throws
/// ShapeMismatch on a coverage gap (missing, empty or mis-sized patch).
ImagePlane stitch(std::span<const ImagePlane> patches, const PatchGrid& grid, int channels, double resolution = 0.0);

/// How many times each pixel is written by stitching `grid`.
std::vector<int> stitch_write_counts(const PatchGrid& grid);

}  // namespace tilediff
