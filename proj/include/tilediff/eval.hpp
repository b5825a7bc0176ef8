#pragma once

#include "tilediff/denoiser.hpp"
#include "tilediff/patch_grid.hpp"
#include "tilediff/pyramid.hpp"
#include "tilediff/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tilediff {

/// Delimiter-separated result table with a header row.
struct ReportTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    void write(std::ostream& os, char delimiter = '\t') const;
};

std::string format_number(double v);

// ---------------------------------------------------------------------------
// Seams

struct SeamReport {
    double boundary_gradient_mean = 0.0;
    double interior_gradient_mean = 0.0;
    double ratio = 1.0;
};

/// Mean |first difference| across the patch boundaries of `grid` versus
/// every other neighbouring pair, over both axes and all channels.
/// Constant images report ratio 1. Throws InvalidParameter when the grid
/// has no interior boundary.
SeamReport seam_energy(const ImagePlane& img, const PatchGrid& grid);

// ---------------------------------------------------------------------------
// Solver accuracy

struct SweepRow {
    int steps = 0;
    double error = 0.0;
};

struct SolverSweepOptions {
    int seeds = 256;
    long samples_per_image = 4;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int reference_steps = 2048;
    std::uint64_t base_seed = 1;
};

/// Exact probability-flow trajectory for a single isotropic Gaussian
/// N(mean, s^2): x(t) = mean + (x(t0) - mean) sqrt((s^2 + t^2) / (s^2 + t0^2)).
double single_gaussian_flow(double x0, double t0, double t, double mean, double stddev);

/// Mean RMS error at t = sigma_min (step N-1) for each N in `step_counts`.
/// Single-component oracles are checked against the closed-form flow,
/// mixtures against a `reference_steps` Heun run from the same noise.
std::vector<SweepRow> solver_accuracy_sweep(const GaussianMixtureOracle& oracle, std::span<const int> step_counts,
                                            SolverMethod method, const SolverSweepOptions& options = {});

/// Least-squares slope of log(error) against log(1/N): the observed order.
double convergence_order(std::span<const SweepRow> rows);

// ---------------------------------------------------------------------------
// Statistics

struct RankCorrelation {
    double rho = 0.0;
    /// Two-sided p-value from the t approximation with n-2 degrees of freedom.
    double p_value = 1.0;
};

/// Spearman rank correlation with average ranks for ties.
RankCorrelation spearman(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Relaxation

struct RelaxationOptions {
    long patch_size = 32;
    int factor = 2;
    int channels = 1;
    int seeds = 50;
    std::uint64_t base_seed = 1000;
    double resolution = 1.0;
    GuidanceConvention convention = GuidanceConvention::Alg1;
    SolverMethod method = SolverMethod::Heun;
};

struct RelaxationRow {
    int r = 0;
    double mean_error = 0.0;
    std::vector<double> errors;  ///< one per seed
};

struct RelaxationReport {
    std::vector<RelaxationRow> rows;
    /// Same seeds without any guide.
    std::vector<double> unguided_errors;
    double unguided_mean = 0.0;
    RankCorrelation trend;
};

/// For each seed: sample an M x M image, downsample it by k to get the
/// guide y, then run a single guided patch from fresh noise for every r
/// and record ||A x_N - y||_2.
RelaxationReport relaxation_sweep(const NoiseSchedule& schedule, const Denoiser& denoiser,
                                  std::span<const int> r_values, const RelaxationOptions& options = {});

// ---------------------------------------------------------------------------
// Mask-shifting baseline

struct MaskShiftTraceEntry {
    long index = 0;
    long row = 0;
    long col = 0;
    long started = 0;   ///< sequence number when the patch started
    long finished = 0;  ///< sequence number when it completed
};

struct MaskShiftReport {
    long patches = 0;
    long stride = 0;
    long denoiser_calls = 0;
    double seconds = 0.0;
    std::vector<MaskShiftTraceEntry> trace;
};

/// Patch origins along one axis for overlapping patches of size M with
/// stride round_down_k(M (1 - overlap)); the last origin is clamped so the
/// patch ends at the border.
std::vector<long> mask_shift_origins(long extent, long patch_size, double overlap, int factor);

long grid_shift_patch_count(Extent extent, long patch_size, long offset_y, long offset_x);
long mask_shift_patch_count(Extent extent, long patch_size, double overlap, int factor);

/// Sequential baseline: overlapping patches in raster order, each run
/// through all N guided steps; samples already produced by earlier patches
/// are reset to their frozen values after every step.
ImagePlane mask_shift_upscale(const ImagePlane& z_prev, const PyramidSettings& settings, double overlap,
                              const Denoiser& denoiser, std::uint64_t seed, MaskShiftReport* report = nullptr);

// ---------------------------------------------------------------------------
// Distribution checks

struct DistributionThresholds {
    double mean_standard_errors = 4.0;
    double weight_tolerance = 0.05;
};

struct DistributionReport {
    std::size_t samples = 0;
    /// max over sample positions of |empirical mean - mixture mean| / standard error
    double max_mean_z = 0.0;
    /// max |empirical covariance - mixture covariance| over position pairs
    double max_covariance_error = 0.0;
    /// mean 1-D Wasserstein-1 distance over random projections
    double sliced_distance = 0.0;
    std::vector<double> mode_weights;
    double max_weight_error = 0.0;
    bool mean_ok = false;
    bool weights_ok = false;
    bool passed() const noexcept { return mean_ok && weights_ok; }
};

/// Exact draw from the mixture, shaped like `like`.
ImagePlane draw_from_mixture(const GaussianMixtureOracle& oracle, const ImagePlane& like, RngStream& stream);

/// Compares sampler outputs against the mixture they should follow. Each
/// sample is assigned to its most responsible component (noise-free).
/// Needs at least 1000 samples.
DistributionReport distribution_test(const GaussianMixtureOracle& oracle, std::span<const ImagePlane> samples,
                                     const DistributionThresholds& thresholds = {}, std::uint64_t seed = 99);

/// ||downsample^(levels)(z_L) - z_0||_2 over tissue cells of `mask`
/// (all cells when mask is null), normalised by the number of samples.
double pyramid_consistency_rms(const ImagePlane& z_final, const ImagePlane& z0, int factor, int levels,
                               const TissueMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Studies shared by the command line and the acceptance suite

/// Smooth low-frequency field in [-0.5, 0.5] with phases drawn from `seed`;
/// used as the coarse guide for single-stage studies.
ImagePlane smooth_guide(int channels, long extent, double resolution, std::uint64_t seed);

struct SeamStudyOptions {
    long patch_size = 32;
    long extent = 256;  ///< output extent; the guide is extent / k
    int seeds = 20;
    std::uint64_t base_seed = 1;
    bool include_mask_shift = false;
    double overlap = 0.5;
};

struct SeamTrial {
    std::uint64_t seed = 0;
    /// Ratios measured on the unshifted grid for every variant.
    double fixed_ratio = 0.0;
    double shift_ratio = 0.0;
    double mask_ratio = 0.0;  ///< NaN unless mask-shifting was run
};

/// Upscales one smooth guide per seed with a fixed grid and with grid
/// shifting (and optionally mask-shifting), using `base` for everything
/// except the geometry.
std::vector<SeamTrial> seam_study(const PyramidSettings& base, const Denoiser& denoiser,
                                  const SeamStudyOptions& options = {});

struct StitchBenchRow {
    long extent = 0;
    double overlap = 0.0;
    double grid_mean_patches = 0.0;  ///< per iteration, from the trace
    long grid_max_patches = 0;
    long grid_denoiser_calls = 0;
    double grid_seconds = 0.0;
    long mask_patches = 0;
    long mask_denoiser_calls = 0;
    double mask_seconds = 0.0;
};

/// One grid-shift stage per extent and one mask-shifting pass per
/// (extent, overlap), all on the same guide and seed.
std::vector<StitchBenchRow> stitch_benchmark(const PyramidSettings& base, const Denoiser& denoiser,
                                             std::span<const long> extents, std::span<const double> overlaps,
                                             std::uint64_t seed);

}  // namespace tilediff
