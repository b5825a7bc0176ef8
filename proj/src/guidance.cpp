#include "tilediff/guidance.hpp"

#include "tilediff/error.hpp"

#include <string>

namespace tilediff {

void validate(const DownsampleOperator& op) {
    if (op.factor < 2) throw InvalidParameter("downsample factor must be at least 2");
}

void validate(const GuidanceConfig& cfg, int num_steps) {
    if (cfg.r < 0 || cfg.r > num_steps) {
        throw InvalidParameter("relaxation bound r=" + std::to_string(cfg.r) + " outside [0, " +
                               std::to_string(num_steps) + "]");
    }
}

ImagePlane downsample(const DownsampleOperator& op, const ImagePlane& u) {
    validate(op);
    const long k = op.factor;
    if (u.height() % k != 0 || u.width() % k != 0) {
        throw ShapeMismatch("downsample: " + describe_shape(u) + " not divisible by " + std::to_string(k));
    }
    const long h = u.height() / k;
    const long w = u.width() / k;
    ImagePlane out(u.channels(), h, w, u.resolution() * static_cast<double>(k));
    const double inv = 1.0 / static_cast<double>(k * k);
    for (int c = 0; c < u.channels(); ++c) {
        for (long by = 0; by < h; ++by) {
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
    }
    return out;
}

ImagePlane pseudo_upsample(const DownsampleOperator& op, const ImagePlane& y) {
    validate(op);
    const long k = op.factor;
    ImagePlane out(y.channels(), y.height() * k, y.width() * k, y.resolution() / static_cast<double>(k));
    for (int c = 0; c < y.channels(); ++c) {
        for (long oy = 0; oy < out.height(); ++oy) {
            const double* src = y.row(c, oy / k);
            double* dst = out.row(c, oy);
            for (long ox = 0; ox < out.width(); ++ox) dst[ox] = src[ox / k];
        }
    }
    return out;
}

void project_onto_guide(const DownsampleOperator& op, ImagePlane& u, const ImagePlane& y) {
    validate(op);
    const long k = op.factor;
    if (u.channels() != y.channels() || u.height() != y.height() * k || u.width() != y.width() * k) {
        throw ShapeMismatch("guided_estimate: estimate " + describe_shape(u) + " and guide " + describe_shape(y) +
                            " are incompatible with factor " + std::to_string(k));
    }
    const double inv = 1.0 / static_cast<double>(k * k);
    for (int c = 0; c < u.channels(); ++c) {
        for (long by = 0; by < y.height(); ++by) {
            const double* guide = y.row(c, by);
            for (long bx = 0; bx < y.width(); ++bx) {
                double mean = 0.0;
                for (long dy = 0; dy < k; ++dy) {
                    const double* src = u.row(c, by * k + dy) + bx * k;
                    for (long dx = 0; dx < k; ++dx) mean += src[dx];
                }
                mean *= inv;
                const double shift = guide[bx] - mean;
                for (long dy = 0; dy < k; ++dy) {
                    double* dst = u.row(c, by * k + dy) + bx * k;
                    for (long dx = 0; dx < k; ++dx) dst[dx] += shift;
                }
            }
        }
    }
}

ImagePlane guided_estimate(const DownsampleOperator& op, const ImagePlane& u, const ImagePlane& y) {
    ImagePlane out = u;
    project_onto_guide(op, out, y);
    return out;
}

bool should_guide(int step, const GuidanceConfig& cfg) {
    switch (cfg.convention) {
        case GuidanceConvention::Alg1:
            return step < cfg.r;
        case GuidanceConvention::Inverted:
            return step >= cfg.r;
    }
    return false;
}

}  // namespace tilediff
