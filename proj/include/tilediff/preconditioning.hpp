#pragma once

#include "tilediff/image.hpp"

#include <functional>

namespace tilediff {

class Denoiser;
class RngStream;

struct PreconditionConfig {
    double sigma_data = 0.5;
};

/// Log-normal training noise distribution, ln(sigma) ~ Normal(mean, std^2).
struct NoiseLevelDistribution {
    double log_mean = -1.2;
    double log_std = 1.2;
};

/// exp(log_mean + log_std * z) with z standard normal from `stream`.
double sample_noise_level(const NoiseLevelDistribution& dist, RngStream& stream);

double c_skip(double sigma, const PreconditionConfig& cfg = {});
double c_out(double sigma, const PreconditionConfig& cfg = {});
double c_in(double sigma, const PreconditionConfig& cfg = {});
/// sigma^-2 + sigma_data^-2. Throws DomainError at sigma <= 0.
double loss_weight(double sigma, const PreconditionConfig& cfg = {});

/// Raw network F(scaled input; sigma, s).
using RawNetwork = std::function<ImagePlane(const ImagePlane&, double sigma, double s)>;

/// c_skip(sigma) x + c_out(sigma) F(c_in(sigma) x; sigma, s). The result
/// carries x's shape and resolution tag.
ImagePlane precondition_denoise(const RawNetwork& raw_net, const ImagePlane& x, double sigma, double s,
                                const PreconditionConfig& cfg = {});

/// lambda(sigma) * ||D(clean + noise; sigma, s) - clean||^2 summed over all samples.
double denoising_loss(const Denoiser& denoiser, const ImagePlane& clean, double sigma, double s,
                      const ImagePlane& noise, const PreconditionConfig& cfg = {});

}  // namespace tilediff
