#include "tilediff/preconditioning.hpp"

#include "tilediff/denoiser.hpp"
#include "tilediff/error.hpp"
#include "tilediff/rng.hpp"

#include <cmath>

namespace tilediff {

namespace {

void check_sigma(double sigma) {
    if (!(sigma >= 0.0)) throw DomainError("noise level must be non-negative");
}

}  // namespace

double sample_noise_level(const NoiseLevelDistribution& dist, RngStream& stream) {
    if (!(dist.log_std >= 0.0)) throw InvalidParameter("log-normal noise distribution needs std >= 0");
    return std::exp(dist.log_mean + dist.log_std * stream.next_normal());
}

double c_skip(double sigma, const PreconditionConfig& cfg) {
    check_sigma(sigma);
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    return sd2 / (sigma * sigma + sd2);
}

double c_out(double sigma, const PreconditionConfig& cfg) {
    check_sigma(sigma);
    return sigma * cfg.sigma_data / std::sqrt(cfg.sigma_data * cfg.sigma_data + sigma * sigma);
}

double c_in(double sigma, const PreconditionConfig& cfg) {
    check_sigma(sigma);
    return 1.0 / std::sqrt(sigma * sigma + cfg.sigma_data * cfg.sigma_data);
}

double loss_weight(double sigma, const PreconditionConfig& cfg) {
    if (!(sigma > 0.0)) throw DomainError("loss weight is undefined at sigma = 0");
    return 1.0 / (sigma * sigma) + 1.0 / (cfg.sigma_data * cfg.sigma_data);
}

ImagePlane precondition_denoise(const RawNetwork& raw_net, const ImagePlane& x, double sigma, double s,
                                const PreconditionConfig& cfg) {
    if (!x.all_finite()) throw DomainError("precondition_denoise: non-finite input");
    const double skip = c_skip(sigma, cfg);
    const double out = c_out(sigma, cfg);
    const double in = c_in(sigma, cfg);

    ImagePlane scaled = x;
    for (double& v : scaled.samples()) v *= in;
    const ImagePlane f = raw_net(scaled, sigma, s);
    if (!f.same_shape(x)) {
        throw ContractViolation("raw network returned " + describe_shape(f) + " for input " + describe_shape(x));
    }

    ImagePlane result = x;
    auto r = result.samples();
    auto fs = f.samples();
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = skip * r[j] + out * fs[j];
    return result;
}

double denoising_loss(const Denoiser& denoiser, const ImagePlane& clean, double sigma, double s,
                      const ImagePlane& noise, const PreconditionConfig& cfg) {
    if (!clean.same_shape(noise)) throw ShapeMismatch("denoising_loss: clean and noise differ in shape");
    const double weight = loss_weight(sigma, cfg);

    ImagePlane noisy = clean;
    auto ns = noise.samples();
    auto xs = noisy.samples();
    for (std::size_t j = 0; j < xs.size(); ++j) xs[j] += ns[j];

    const ImagePlane denoised = denoiser(noisy, sigma, s);
    if (!denoised.same_shape(clean)) throw ContractViolation("denoiser changed the image shape");
    double sum = 0.0;
    auto ds = denoised.samples();
    auto cs = clean.samples();
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const double r = ds[j] - cs[j];
        sum += r * r;
    }
    return weight * sum;
}

}  // namespace tilediff
