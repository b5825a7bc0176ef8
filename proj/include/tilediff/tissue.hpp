#pragma once

#include "tilediff/image.hpp"
#include "tilediff/patch_grid.hpp"

#include <span>
#include <vector>

namespace tilediff {

struct TissueThreshold {
    /// A sample is tissue when some channel differs from the background by more than this.
    double sample_threshold = 0.2;
    /// A cell is tissue when at least this fraction of its samples is tissue.
    double min_fraction = 0.1;

    friend bool operator==(const TissueThreshold&, const TissueThreshold&) = default;
};

/// Boolean grid over the initial image z_0 in square cells of `cell_size`
/// pixels. At stage l each cell covers cell_size * k^l pixels per side
/// (nearest-neighbour upscaling of the mask).
class TissueMask {
public:
    TissueMask() = default;
    TissueMask(long cell_size, long rows, long cols, std::vector<char> cells);

    static TissueMask all_tissue(long cell_size, Extent z0_extent);

    long cell_size() const noexcept { return cell_size_; }
    long rows() const noexcept { return rows_; }
    long cols() const noexcept { return cols_; }
    bool cell(long r, long c) const { return cells_.at(static_cast<std::size_t>(r * cols_ + c)) != 0; }
    long tissue_cells() const noexcept;
    bool empty() const noexcept { return tissue_cells() == 0; }

    /// Whether `rect`, placed in an image `scale` times larger than z_0,
    /// overlaps any tissue cell. Out-of-bounds parts never count.
    bool covers_tissue(const PatchRect& rect, long scale) const;

    friend bool operator==(const TissueMask&, const TissueMask&) = default;

private:
    long cell_size_ = 1;
    long rows_ = 0;
    long cols_ = 0;
    std::vector<char> cells_;
};

/// Per-channel background colour: the median of the samples in the four
/// corner squares of side max(1, min(h, w) / 8).
std::vector<double> corner_median_background(const ImagePlane& z0);

/// Marks each cell of `z0` as tissue iff at least `min_fraction` of its
/// samples differ from `background` by more than `sample_threshold` in some channel.
TissueMask tissue_mask_from(const ImagePlane& z0, std::span<const double> background, long cell_size,
                            const TissueThreshold& threshold = {});

}  // namespace tilediff
