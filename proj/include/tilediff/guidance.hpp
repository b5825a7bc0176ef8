#pragma once

#include "tilediff/image.hpp"

namespace tilediff {

/// Block-mean pooling A over disjoint k x k blocks, applied per channel.
/// A has full row rank and A A^T = I / k^2, so A^dagger is k x k replication.
struct DownsampleOperator {
    int factor = 2;

    friend bool operator==(const DownsampleOperator&, const DownsampleOperator&) = default;
};

enum class GuidanceConvention {
    /// Guide while i < r (r = 0: never guided).
    Alg1,
    /// Guide while i >= r (r = 0: always guided).
    Inverted,
};

struct GuidanceConfig {
    int r = 28;
    GuidanceConvention convention = GuidanceConvention::Alg1;

    friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

/// Block means; the result's resolution tag is the input tag times k.
/// Throws ShapeMismatch when height or width is not divisible by k.
ImagePlane downsample(const DownsampleOperator& op, const ImagePlane& u);

/// k x k replication of every sample; the result's tag is the input tag / k.
ImagePlane pseudo_upsample(const DownsampleOperator& op, const ImagePlane& y);

/// (I - A^dagger A) u + A^dagger y: the Euclidean projection of u onto
/// {v : A v = y}. Matrix-free: every k x k block of u is shifted so that its
/// mean equals the matching sample of y. Keeps u's resolution tag.
ImagePlane guided_estimate(const DownsampleOperator& op, const ImagePlane& u, const ImagePlane& y);

/// In-place variant used on the hot path.
void project_onto_guide(const DownsampleOperator& op, ImagePlane& u, const ImagePlane& y);

bool should_guide(int step, const GuidanceConfig& cfg);

/// Throws InvalidParameter for factors below 2.
void validate(const DownsampleOperator& op);
/// Throws InvalidParameter unless 0 <= r <= num_steps.
void validate(const GuidanceConfig& cfg, int num_steps);

}  // namespace tilediff
