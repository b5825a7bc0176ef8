#include "tilediff/patch_grid.hpp"

#include "tilediff/error.hpp"

#include <algorithm>
#include <string>

namespace tilediff {

namespace {

long ceil_div(long a, long b) { return (a + b - 1) / b; }

struct Clip {
    long y_begin, y_end, x_begin, x_end;  // in-bounds window in image coordinates
};

Clip clip(const PatchRect& r, long height, long width) {
    return {std::max(r.y0, 0L), std::min(r.y0 + r.size, height), std::max(r.x0, 0L), std::min(r.x0 + r.size, width)};
}

}  // namespace

long PatchGrid::rows() const noexcept { return extent.height == 0 ? 0 : ceil_div(extent.height + offset_y, patch_size); }
long PatchGrid::cols() const noexcept { return extent.width == 0 ? 0 : ceil_div(extent.width + offset_x, patch_size); }

PatchRect PatchGrid::rect(long index) const noexcept {
    const long c = cols();
    const long row = index / c;
    const long col = index % c;
    return {row * patch_size - offset_y, col * patch_size - offset_x, patch_size};
}

void validate(const PatchGrid& grid, int factor) {
    if (grid.patch_size <= 0) throw InvalidParameter("patch size must be positive");
    if (factor < 1 || grid.patch_size % factor != 0) {
        throw InvalidParameter("patch size " + std::to_string(grid.patch_size) + " not divisible by factor " +
                               std::to_string(factor));
    }
    for (long off : {grid.offset_y, grid.offset_x}) {
        if (off < 0 || off >= grid.patch_size || off % factor != 0) {
            throw InvalidParameter("grid offset " + std::to_string(off) + " must be a multiple of " +
                                   std::to_string(factor) + " in [0, " + std::to_string(grid.patch_size) + ")");
        }
    }
}

PatchGrid shift_patch_grid(RngStream& stream, const PatchGrid& grid, int factor) {
    validate(grid, factor);
    const auto choices = static_cast<std::uint32_t>(grid.patch_size / factor);
    PatchGrid shifted = grid;
    shifted.offset_y = static_cast<long>(stream.next_below(choices)) * factor;
    shifted.offset_x = static_cast<long>(stream.next_below(choices)) * factor;
    return shifted;
}

PatchGrid shift_patch_grid(const StreamKey& key, const PatchGrid& grid, int factor) {
    RngStream stream(key);
    return shift_patch_grid(stream, grid, factor);
}

ImagePlane extract_patch(const ImagePlane& img, const PatchRect& rect, std::span<const double> background) {
    if (background.size() != static_cast<std::size_t>(img.channels())) {
        throw ShapeMismatch("background needs one value per channel");
    }
    ImagePlane patch(img.channels(), rect.size, rect.size, img.resolution());
    const Clip w = clip(rect, img.height(), img.width());
    const bool interior = w.y_begin == rect.y0 && w.x_begin == rect.x0 && w.y_end == rect.y0 + rect.size &&
                          w.x_end == rect.x0 + rect.size;
    if (!interior) patch.fill(background);
    if (w.y_begin >= w.y_end || w.x_begin >= w.x_end) return patch;
    const auto span_len = static_cast<std::size_t>(w.x_end - w.x_begin);
    for (int c = 0; c < img.channels(); ++c) {
        for (long y = w.y_begin; y < w.y_end; ++y) {
            const double* src = img.row(c, y) + w.x_begin;
            double* dst = patch.row(c, y - rect.y0) + (w.x_begin - rect.x0);
            std::copy_n(src, span_len, dst);
        }
    }
    return patch;
}

void write_patch(ImagePlane& dst, const PatchRect& rect, const ImagePlane& patch) {
    if (patch.channels() != dst.channels() || patch.height() != rect.size || patch.width() != rect.size) {
        throw ShapeMismatch("write_patch: patch " + describe_shape(patch) + " does not fit its placement");
    }
    const Clip w = clip(rect, dst.height(), dst.width());
    if (w.y_begin >= w.y_end || w.x_begin >= w.x_end) return;
    const auto span_len = static_cast<std::size_t>(w.x_end - w.x_begin);
    for (int c = 0; c < dst.channels(); ++c) {
        for (long y = w.y_begin; y < w.y_end; ++y) {
            const double* src = patch.row(c, y - rect.y0) + (w.x_begin - rect.x0);
            std::copy_n(src, span_len, dst.row(c, y) + w.x_begin);
        }
    }
}

void fill_patch(ImagePlane& dst, const PatchRect& rect, std::span<const double> background) {
    if (background.size() != static_cast<std::size_t>(dst.channels())) {
        throw ShapeMismatch("background needs one value per channel");
    }
    const Clip w = clip(rect, dst.height(), dst.width());
    for (int c = 0; c < dst.channels(); ++c) {
        for (long y = w.y_begin; y < w.y_end; ++y) {
            std::fill(dst.row(c, y) + w.x_begin, dst.row(c, y) + w.x_end, background[static_cast<std::size_t>(c)]);
        }
    }
}

PatchGrid guide_grid(const PatchGrid& grid, int factor) {
    return {grid.patch_size / factor, grid.offset_y / factor, grid.offset_x / factor,
            {grid.extent.height / factor, grid.extent.width / factor}};
}

std::vector<PatchPair> patch_pair(const ImagePlane& x, const ImagePlane& z_prev, const PatchGrid& grid, int factor,
                                  std::span<const double> background) {
    validate(grid, factor);
    if (x.channels() != z_prev.channels() || x.height() != z_prev.height() * factor ||
        x.width() != z_prev.width() * factor) {
        throw ShapeMismatch("patch_pair: image " + describe_shape(x) + " is not " + std::to_string(factor) +
                            "x the guide " + describe_shape(z_prev));
    }
    if (grid.extent != x.extent()) throw ShapeMismatch("patch_pair: grid extent differs from the image");

    const PatchGrid small = guide_grid(grid, factor);
    std::vector<PatchPair> pairs;
    pairs.reserve(static_cast<std::size_t>(grid.count()));
    for (long i = 0; i < grid.count(); ++i) {
        pairs.push_back({i, extract_patch(x, grid.rect(i), background), extract_patch(z_prev, small.rect(i), background)});
    }
    return pairs;
}

ImagePlane stitch(std::span<const ImagePlane> patches, const PatchGrid& grid, int channels, double resolution) {
    if (patches.size() != static_cast<std::size_t>(grid.count())) {
        throw ShapeMismatch("stitch: coverage gap, expected " + std::to_string(grid.count()) + " patches, got " +
                            std::to_string(patches.size()));
    }
    ImagePlane out(channels, grid.extent.height, grid.extent.width, resolution);
    for (long i = 0; i < grid.count(); ++i) {
        const ImagePlane& p = patches[static_cast<std::size_t>(i)];
        if (p.empty()) throw ShapeMismatch("stitch: coverage gap at patch " + std::to_string(i));
        write_patch(out, grid.rect(i), p);
    }
    return out;
}

std::vector<int> stitch_write_counts(const PatchGrid& grid) {
    std::vector<int> counts(static_cast<std::size_t>(grid.extent.height * grid.extent.width), 0);
    for (long i = 0; i < grid.count(); ++i) {
        const Clip w = clip(grid.rect(i), grid.extent.height, grid.extent.width);
        for (long y = w.y_begin; y < w.y_end; ++y)
            for (long x = w.x_begin; x < w.x_end; ++x) ++counts[static_cast<std::size_t>(y * grid.extent.width + x)];
    }
    return counts;
}

}  // namespace tilediff
