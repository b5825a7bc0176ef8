#pragma once

#include "tilediff/image.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tilediff {

/// Denoiser contract D(x; sigma, s): returns an estimate of the clean
/// image with x's shape. Implementations must be deterministic and safe to
/// call concurrently.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual ImagePlane operator()(const ImagePlane& x, double sigma, double s) const = 0;
};

/// Adapts a plain function to the Denoiser contract.
class FunctionDenoiser final : public Denoiser {
public:
    using Fn = std::function<ImagePlane(const ImagePlane&, double, double)>;
    explicit FunctionDenoiser(Fn fn) : fn_(std::move(fn)) {}
    ImagePlane operator()(const ImagePlane& x, double sigma, double s) const override { return fn_(x, sigma, s); }

private:
    Fn fn_;
};

/// Forwards to another denoiser and counts evaluations (thread-safe).
class CountingDenoiser final : public Denoiser {
public:
    explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}
    ImagePlane operator()(const ImagePlane& x, double sigma, double s) const override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_(x, sigma, s);
    }
    long calls() const noexcept { return calls_.load(); }
    void reset() noexcept { calls_ = 0; }

private:
    const Denoiser& inner_;
    mutable std::atomic<long> calls_{0};
};

/// Shape a full-size mean image must have; broadcast means need none.
struct MeanShape {
    int channels = 0;
    long height = 0;
    long width = 0;
    friend bool operator==(const MeanShape&, const MeanShape&) = default;
};

/// One isotropic Gaussian component. `mean` is either a single value
/// (broadcast to every sample), one value per channel, or a full image
/// in [channel][row][column] order.
struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> mean;
    double stddev = 1.0;
};

/// Isotropic Gaussian mixture over whole images. Its posterior mean under
/// additive Gaussian noise is available in closed form, so it serves as an
/// exact reference denoiser.
class GaussianMixtureOracle final : public Denoiser {
public:
    /// Validates weights (sum to 1 within 1e-12, each in (0,1]) and stds (> 0).
    explicit GaussianMixtureOracle(std::vector<MixtureComponent> components, std::optional<MeanShape> shape = {});

    const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    const std::optional<MeanShape>& mean_shape() const noexcept { return shape_; }

    /// Ignores s.
    ImagePlane operator()(const ImagePlane& x, double sigma, double s) const override;

    /// Sample-wise weighted mean of the component means, shaped like `like`.
    ImagePlane mixture_mean(const ImagePlane& like) const;

    /// Mean of component k at sample (c, y, x) of an image shaped like `like`.
    double mean_at(std::size_t k, const ImagePlane& like, int c, long y, long x) const;

private:
    void check_compatible(const ImagePlane& x) const;

    std::vector<MixtureComponent> components_;
    std::optional<MeanShape> shape_;
};

/// Posterior mean of a mixture; the free-function form of the oracle.
ImagePlane gmm_denoise(const GaussianMixtureOracle& oracle, const ImagePlane& x, double sigma);

/// Every pixel independently follows the same colour mixture: component k
/// is a C-vector mean (or one value for all channels) with isotropic std.
/// The posterior mean factorizes over pixels, so responsibilities are
/// computed per pixel rather than for the whole image.
class PixelMixtureOracle final : public Denoiser {
public:
    explicit PixelMixtureOracle(std::vector<MixtureComponent> components);

    const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    ImagePlane operator()(const ImagePlane& x, double sigma, double s) const override;

private:
    std::vector<MixtureComponent> components_;
};

/// Picks a different denoiser per spatial-resolution band: band j is used
/// for s in [lower_j, lower_{j+1}); s below every lower bound uses band 0.
class ResolutionSwitchedOracle final : public Denoiser {
public:
    struct Band {
        double lower = 0.0;
        std::shared_ptr<const Denoiser> oracle;
    };
    explicit ResolutionSwitchedOracle(std::vector<Band> bands);

    ImagePlane operator()(const ImagePlane& x, double sigma, double s) const override;
    const Denoiser& band_for(double s) const;
    const std::vector<Band>& bands() const noexcept { return bands_; }

private:
    std::vector<Band> bands_;
};

/// Interleaved [sin(v f_0), cos(v f_0), sin(v f_1), ...] with frequencies
/// f_j = max_period^(-j / (dim/2 - 1)), so the lowest frequency is 1/max_period.
std::vector<double> sinusoidal_encode(double value, int dim, double max_period = 10000.0);

/// Loads an oracle description (JSON). Either a single mixture
///   {"shape": [c,h,w]?, "components": [{"weight": w, "mean": [...] | "mean_file": path, "std": s}, ...]}
/// or a resolution-switched one
///   {"bands": [{"lower": s_lo, "mixture": {...}}, ...]}.
/// A mixture with "pixelwise": true describes a PixelMixtureOracle.
/// Relative mean_file paths resolve against the JSON file's directory;
/// mean files are raw dumps written by write_raw.
std::unique_ptr<Denoiser> load_oracle(const std::filesystem::path& path);
std::unique_ptr<Denoiser> parse_oracle(const std::string& json_text,
                                       const std::filesystem::path& base_dir = std::filesystem::path("."));

/// Named reference denoisers used by the CLI and tests:
///   gaussian  single component, mean 0, std 0.5
///   bimodal   two equal-weight components at -0.5 / +0.5, std 0.1
///   texture   eight flat levels in [-0.7, 0.7] with std 0.15
///   tissue    resolution-switched: blob layouts on a bright background
///             for s >= 75 um/px, per-pixel stain colours below
std::unique_ptr<Denoiser> builtin_oracle(const std::string& name, int channels, long patch_size);

/// "builtin:<name>" or a path to a JSON description.
std::unique_ptr<Denoiser> make_denoiser(const std::string& reference, int channels, long patch_size);

}  // namespace tilediff
