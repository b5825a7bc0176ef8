#include "tilediff/tissue.hpp"

#include "tilediff/error.hpp"

#include <algorithm>
#include <cmath>

namespace tilediff {

TissueMask::TissueMask(long cell_size, long rows, long cols, std::vector<char> cells)
    : cell_size_(cell_size), rows_(rows), cols_(cols), cells_(std::move(cells)) {
    if (cell_size_ <= 0) throw InvalidParameter("tissue mask cell size must be positive");
    if (cells_.size() != static_cast<std::size_t>(rows_ * cols_)) throw ShapeMismatch("tissue mask cell count");
}

TissueMask TissueMask::all_tissue(long cell_size, Extent z0_extent) {
    const long rows = (z0_extent.height + cell_size - 1) / cell_size;
    const long cols = (z0_extent.width + cell_size - 1) / cell_size;
    return TissueMask(cell_size, rows, cols, std::vector<char>(static_cast<std::size_t>(rows * cols), 1));
}

long TissueMask::tissue_cells() const noexcept {
    return static_cast<long>(std::count(cells_.begin(), cells_.end(), 1));
}

bool TissueMask::covers_tissue(const PatchRect& rect, long scale) const {
    const long span = cell_size_ * scale;
    const long y_begin = std::max(rect.y0, 0L);
    const long x_begin = std::max(rect.x0, 0L);
    const long y_end = std::min(rect.y0 + rect.size, rows_ * span);
    const long x_end = std::min(rect.x0 + rect.size, cols_ * span);
    if (y_begin >= y_end || x_begin >= x_end) return false;
    for (long r = y_begin / span; r <= (y_end - 1) / span; ++r)
        for (long c = x_begin / span; c <= (x_end - 1) / span; ++c)
            if (cells_[static_cast<std::size_t>(r * cols_ + c)]) return true;
    return false;
}

std::vector<double> corner_median_background(const ImagePlane& z0) {
    const long side = std::max(1L, std::min(z0.height(), z0.width()) / 8);
    std::vector<double> bg(static_cast<std::size_t>(z0.channels()));
    std::vector<double> values;
    for (int c = 0; c < z0.channels(); ++c) {
        values.clear();
        const long ys[2] = {0, z0.height() - side};
        const long xs[2] = {0, z0.width() - side};
        for (long y0 : ys)
            for (long x0 : xs)
                for (long y = y0; y < y0 + side; ++y)
                    for (long x = x0; x < x0 + side; ++x) values.push_back(z0.at(c, y, x));
        const auto mid = values.begin() + static_cast<long>(values.size() / 2);
        std::nth_element(values.begin(), mid, values.end());
        double median = *mid;
        if (values.size() % 2 == 0) {
            median = 0.5 * (median + *std::max_element(values.begin(), mid));
        }
        bg[static_cast<std::size_t>(c)] = median;
    }
    return bg;
}

TissueMask tissue_mask_from(const ImagePlane& z0, std::span<const double> background, long cell_size,
                            const TissueThreshold& threshold) {
    if (background.size() != static_cast<std::size_t>(z0.channels())) {
        throw ShapeMismatch("background needs one value per channel");
    }
    if (cell_size <= 0) throw InvalidParameter("tissue mask cell size must be positive");
    const long rows = (z0.height() + cell_size - 1) / cell_size;
    const long cols = (z0.width() + cell_size - 1) / cell_size;
    std::vector<char> cells(static_cast<std::size_t>(rows * cols), 0);
    for (long r = 0; r < rows; ++r) {
        for (long cc = 0; cc < cols; ++cc) {
            long total = 0;
            long tissue = 0;
            for (long y = r * cell_size; y < std::min((r + 1) * cell_size, z0.height()); ++y) {
                for (long x = cc * cell_size; x < std::min((cc + 1) * cell_size, z0.width()); ++x) {
                    ++total;
                    for (int c = 0; c < z0.channels(); ++c) {
                        if (std::abs(z0.at(c, y, x) - background[static_cast<std::size_t>(c)]) >
                            threshold.sample_threshold) {
                            ++tissue;
                            break;
                        }
                    }
                }
            }
            cells[static_cast<std::size_t>(r * cols + cc)] =
                static_cast<double>(tissue) >= threshold.min_fraction * static_cast<double>(total) ? 1 : 0;
        }
    }
    return TissueMask(cell_size, rows, cols, std::move(cells));
}

}  // namespace tilediff
