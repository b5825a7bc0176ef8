#include <doctest.h>

#include "tilediff/error.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/patch_grid.hpp"
#include "tilediff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace tilediff;

namespace {

ImagePlane random_plane(RngStream& rng, int c, long h, long w) {
    ImagePlane p(c, h, w, 1.0);
    for (double& v : p.samples()) v = rng.next_normal();
    return p;
}

long ceil_div(long a, long b) { return (a + b - 1) / b; }

}  // namespace

TEST_CASE("fixed grid at twice the patch size gives four aligned pairs") {
    RngStream rng(StreamKey{51, 0, 0, 0, StreamPurpose::Test});
    const ImagePlane x = random_plane(rng, 1, 16, 16);
    const ImagePlane z = random_plane(rng, 1, 8, 8);
    const PatchGrid grid{8, 0, 0, {16, 16}};
    const std::vector<double> bg{0.0};
    const auto pairs = patch_pair(x, z, grid, 2, bg);
    REQUIRE(pairs.size() == 4);
    CHECK(pairs[3].patch.at(0, 0, 0) == x.at(0, 8, 8));
    CHECK(pairs[3].guide.at(0, 0, 0) == z.at(0, 4, 4));
    CHECK(pairs[1].guide.height() == 4);
}

TEST_CASE("patch counts follow the ceiling formula") {
    for (long extent : {8L, 24L, 32L, 50L}) {
        for (long off : {0L, 2L, 6L}) {
            const PatchGrid grid{8, off, off, {extent, extent}};
            const long per_axis = ceil_div(extent + off, 8);
            CHECK(grid.rows() == per_axis);
            CHECK(grid.cols() == per_axis);
            CHECK(grid.count() <= (ceil_div(extent, 8) + 1) * (ceil_div(extent, 8) + 1));
            // Enumeration: patches that intersect the image.
            long hits = 0;
            for (long o = -off; o < extent; o += 8) ++hits;
            CHECK(hits == per_axis);
        }
    }
}

TEST_CASE("patch then stitch restores the image and writes each sample once") {
    RngStream rng(StreamKey{52, 0, 0, 0, StreamPurpose::Test});
    for (int trial = 0; trial < 30; ++trial) {
        const long m = 8;
        const long h = 4 + static_cast<long>(rng.next_below(40));
        const long w = 4 + static_cast<long>(rng.next_below(40));
        const ImagePlane img = random_plane(rng, 2, h, w);
        const PatchGrid base{m, 0, 0, {h, w}};
        const PatchGrid grid = shift_patch_grid(rng, base, 2);
        const std::vector<double> bg{0.25, -0.25};
        std::vector<ImagePlane> patches;
        for (long i = 0; i < grid.count(); ++i) patches.push_back(extract_patch(img, grid.rect(i), bg));
        CHECK(stitch(patches, grid, 2, img.resolution()) == img);
        const auto counts = stitch_write_counts(grid);
        CHECK(std::all_of(counts.begin(), counts.end(), [](int c) { return c == 1; }));
    }
}

TEST_CASE("padding never leaks into the stitched output") {
    RngStream rng(StreamKey{53, 0, 0, 0, StreamPurpose::Test});
    const ImagePlane img = random_plane(rng, 1, 20, 20);
    const PatchGrid grid{8, 6, 2, {20, 20}};
    const std::vector<double> sentinel{1e9};
    std::vector<ImagePlane> patches;
    for (long i = 0; i < grid.count(); ++i) {
        ImagePlane p = extract_patch(img, grid.rect(i), sentinel);
        const PatchRect r = grid.rect(i);
        // Out-of-bounds samples carry the sentinel.
        if (r.y0 < 0) CHECK(p.at(0, 0, 7) == 1e9);
        patches.push_back(std::move(p));
    }
    const ImagePlane out = stitch(patches, grid, 1, 1.0);
    for (double v : out.samples()) CHECK(v < 1e8);
}

TEST_CASE("missing patches are a coverage gap") {
    const PatchGrid grid{8, 0, 0, {16, 16}};
    std::vector<ImagePlane> patches(3, ImagePlane(1, 8, 8));
    CHECK_THROWS_AS(stitch(patches, grid, 1), ShapeMismatch);
    patches.emplace_back();
    CHECK_THROWS_AS(stitch(patches, grid, 1), ShapeMismatch);
    patches.back() = ImagePlane(1, 4, 4);
    CHECK_THROWS_AS(stitch(patches, grid, 1), ShapeMismatch);
}

TEST_CASE("guide patches are downsampled regions of the fine image") {
    RngStream rng(StreamKey{54, 0, 0, 0, StreamPurpose::Test});
    const ImagePlane fine = random_plane(rng, 3, 32, 32);
    const DownsampleOperator op{2};
    const ImagePlane coarse = downsample(op, fine);
    const std::vector<double> bg{0.0, 0.0, 0.0};
    for (int trial = 0; trial < 10; ++trial) {
        const PatchGrid grid = shift_patch_grid(rng, PatchGrid{8, 0, 0, {32, 32}}, 2);
        const auto pairs = patch_pair(fine, coarse, grid, 2, bg);
        REQUIRE(static_cast<long>(pairs.size()) == grid.count());
        for (const auto& p : pairs) {
            const PatchRect r = grid.rect(p.index);
            if (r.y0 < 0 || r.x0 < 0 || r.y0 + 8 > 32 || r.x0 + 8 > 32) continue;
            const ImagePlane expected = downsample(op, p.patch);
            for (std::size_t j = 0; j < expected.size(); ++j)
                CHECK(std::abs(expected.samples()[j] - p.guide.samples()[j]) <= 1e-15);
        }
    }
    CHECK_THROWS_AS(patch_pair(fine, ImagePlane(3, 15, 16), PatchGrid{8, 0, 0, {32, 32}}, 2, bg), ShapeMismatch);
}

TEST_CASE("shifted offsets are uniform over multiples of the factor") {
    const PatchGrid base{16, 0, 0, {64, 64}};
    constexpr int n = 10000, classes = 8;
    std::vector<int> ys(classes, 0), xs(classes, 0);
    for (int i = 0; i < n; ++i) {
        const PatchGrid g = shift_patch_grid(StreamKey{77, 1, static_cast<std::uint32_t>(i), 0, StreamPurpose::GridShift}, base, 2);
        REQUIRE(g.offset_y % 2 == 0);
        REQUIRE(g.offset_x % 2 == 0);
        REQUIRE(g.offset_y < 16);
        ++ys[g.offset_y / 2];
        ++xs[g.offset_x / 2];
    }
    const double expected = static_cast<double>(n) / classes;
    const double tol = 3.0 * std::sqrt(n * (1.0 / classes) * (1.0 - 1.0 / classes));
    double chi2 = 0.0;
    for (int c = 0; c < classes; ++c) {
        CHECK(std::abs(ys[c] - expected) <= tol);
        CHECK(std::abs(xs[c] - expected) <= tol);
        chi2 += (ys[c] - expected) * (ys[c] - expected) / expected;
    }
    // 99.9% quantile of chi-square with 7 degrees of freedom.
    CHECK(chi2 < 24.32);
}

TEST_CASE("replaying a key replays the offset") {
    const PatchGrid base{32, 0, 0, {128, 128}};
    const StreamKey key{5, 2, 17, 0, StreamPurpose::GridShift};
    CHECK(shift_patch_grid(key, base, 2) == shift_patch_grid(key, base, 2));
}

TEST_CASE("grid validation") {
    CHECK_NOTHROW(validate(PatchGrid{8, 6, 2, {16, 16}}, 2));
    CHECK_THROWS_AS(validate(PatchGrid{8, 3, 0, {16, 16}}, 2), InvalidParameter);
    CHECK_THROWS_AS(validate(PatchGrid{8, 8, 0, {16, 16}}, 2), InvalidParameter);
    const PatchGrid g = guide_grid(PatchGrid{8, 6, 2, {16, 16}}, 2);
    CHECK(g == PatchGrid{4, 3, 1, {8, 8}});
}
