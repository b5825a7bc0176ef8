#include "tilediff/eval.hpp"

#include "tilediff/error.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/kernels.hpp"
#include "tilediff/rng.hpp"
#include "tilediff/tissue.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tilediff {

void ReportTable::add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw InvalidParameter("report row width differs from the header");
    rows.push_back(std::move(row));
}

void ReportTable::write(std::ostream& os, char delimiter) const {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << delimiter;
            os << cells[i];
        }
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

// ---------------------------------------------------------------------------

SeamReport seam_energy(const ImagePlane& img, const PatchGrid& grid) {
    const long M = grid.patch_size;
    if (M <= 0) throw InvalidParameter("seam_energy: patch size must be positive");
    if (grid.extent != img.extent()) throw ShapeMismatch("seam_energy: grid extent differs from the image");
    auto is_boundary = [M](long pos, long offset) { return (pos + offset) % M == 0; };

    bool has_boundary = false;
    for (long x = 1; x < img.width() && !has_boundary; ++x) has_boundary = is_boundary(x, grid.offset_x);
    for (long y = 1; y < img.height() && !has_boundary; ++y) has_boundary = is_boundary(y, grid.offset_y);
    if (!has_boundary) throw InvalidParameter("seam_energy: grid has a single patch, no boundaries to measure");

    double boundary_sum = 0.0, interior_sum = 0.0;
    long boundary_n = 0, interior_n = 0;
    for (int c = 0; c < img.channels(); ++c) {
        for (long y = 0; y < img.height(); ++y) {
            const double* row = img.row(c, y);
            for (long x = 1; x < img.width(); ++x) {
                const double d = std::abs(row[x] - row[x - 1]);
                if (is_boundary(x, grid.offset_x)) {
                    boundary_sum += d;
                    ++boundary_n;
                } else {
                    interior_sum += d;
                    ++interior_n;
                }
            }
            if (y == 0) continue;
            const double* above = img.row(c, y - 1);
            const bool b = is_boundary(y, grid.offset_y);
            for (long x = 0; x < img.width(); ++x) {
                const double d = std::abs(row[x] - above[x]);
                if (b) {
                    boundary_sum += d;
                    ++boundary_n;
                } else {
                    interior_sum += d;
                    ++interior_n;
                }
            }
        }
    }
    SeamReport rep;
    rep.boundary_gradient_mean = boundary_n ? boundary_sum / static_cast<double>(boundary_n) : 0.0;
    rep.interior_gradient_mean = interior_n ? interior_sum / static_cast<double>(interior_n) : 0.0;
    if (rep.boundary_gradient_mean == 0.0 && rep.interior_gradient_mean == 0.0) {
        rep.ratio = 1.0;
    } else if (rep.interior_gradient_mean == 0.0) {
        rep.ratio = std::numeric_limits<double>::infinity();
    } else {
        rep.ratio = rep.boundary_gradient_mean / rep.interior_gradient_mean;
    }
    return rep;
}

// ---------------------------------------------------------------------------

double single_gaussian_flow(double x0, double t0, double t, double mean, double stddev) {
    const double s2 = stddev * stddev;
    return mean + (x0 - mean) * std::sqrt((s2 + t * t) / (s2 + t0 * t0));
}

std::vector<SweepRow> solver_accuracy_sweep(const GaussianMixtureOracle& oracle, std::span<const int> step_counts,
                                            SolverMethod method, const SolverSweepOptions& options) {
    if (options.seeds <= 0 || options.samples_per_image <= 0) {
        throw InvalidParameter("solver sweep needs positive seed and sample counts");
    }
    const bool closed_form = oracle.components().size() == 1 && oracle.components()[0].mean.size() == 1;
    const long n = options.samples_per_image;

    std::vector<ImagePlane> starts;
    starts.reserve(static_cast<std::size_t>(options.seeds));
    for (int s = 0; s < options.seeds; ++s) {
        starts.push_back(initial_noise(1, 1, n, options.sigma_max, options.base_seed + static_cast<std::uint64_t>(s), 0));
    }

    std::vector<ImagePlane> references;
    if (closed_form) {
        const auto& comp = oracle.components()[0];
        for (const auto& x0 : starts) {
            ImagePlane ref = x0;
            for (double& v : ref.samples()) {
                v = single_gaussian_flow(v, options.sigma_max, options.sigma_min, comp.mean[0], comp.stddev);
            }
            references.push_back(std::move(ref));
        }
    } else {
        const NoiseSchedule fine =
            build_schedule(options.reference_steps, options.sigma_min, options.sigma_max, options.rho);
        StepContext ctx{fine, oracle, {}, {}, 1.0, SolverMethod::Heun, {}};
        for (const auto& x0 : starts) references.push_back(integrate(ctx, x0, nullptr, 0, options.reference_steps - 1));
    }

    std::vector<SweepRow> rows;
    for (int steps : step_counts) {
        const NoiseSchedule sched = build_schedule(steps, options.sigma_min, options.sigma_max, options.rho);
        StepContext ctx{sched, oracle, {}, {}, 1.0, method, {}};
        double total = 0.0;
        for (std::size_t s = 0; s < starts.size(); ++s) {
            const ImagePlane end = integrate(ctx, starts[s], nullptr, 0, steps - 1);
            double sq = 0.0;
            auto a = end.samples();
            auto b = references[s].samples();
            for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
            total += std::sqrt(sq / static_cast<double>(a.size()));
        }
        rows.push_back({steps, total / static_cast<double>(starts.size())});
    }
    return rows;
}

double convergence_order(std::span<const SweepRow> rows) {
    if (rows.size() < 2) throw InvalidParameter("convergence order needs at least two rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        const double x = std::log(static_cast<double>(r.steps));
        const double y = std::log(r.error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return -slope;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

RankCorrelation spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw InvalidParameter("spearman needs two equal series of length >= 3");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    RankCorrelation out;
    if (sxx == 0.0 || syy == 0.0) return out;
    out.rho = sxy / std::sqrt(sxx * syy);
    if (std::abs(out.rho) >= 1.0) {
        out.p_value = 0.0;
        return out;
    }
    const double dof = n - 2.0;
    const double t = out.rho * std::sqrt(dof / (1.0 - out.rho * out.rho));
    boost::math::students_t dist(dof);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return out;
}

// ---------------------------------------------------------------------------

RelaxationReport relaxation_sweep(const NoiseSchedule& schedule, const Denoiser& denoiser,
                                  std::span<const int> r_values, const RelaxationOptions& options) {
    if (options.seeds <= 0) throw InvalidParameter("relaxation sweep needs at least one seed");
    for (int r : r_values) validate(GuidanceConfig{r, options.convention}, schedule.num_steps());

    const DownsampleOperator op{options.factor};
    const long M = options.patch_size;
    const int N = schedule.num_steps();
    RelaxationReport rep;
    for (int r : r_values) rep.rows.push_back({r, 0.0, {}});

    auto error_of = [&](const ImagePlane& x, const ImagePlane& y) {
        const ImagePlane ax = downsample(op, x);
        double sq = 0.0;
        auto a = ax.samples();
        auto b = y.samples();
        for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
        return std::sqrt(sq);
    };

    for (int s = 0; s < options.seeds; ++s) {
        const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(s);
        StepContext ctx{schedule, denoiser, {0, options.convention}, op, options.resolution, options.method, {}};
        const ImagePlane source = sample_unconditional(ctx, options.channels, M, M, seed);
        const ImagePlane y = downsample(op, source);
        ImagePlane x0 = initial_noise(options.channels, M, M, schedule.sigma_max(), seed, 1);
        x0.set_resolution(options.resolution);

        for (auto& row : rep.rows) {
            ctx.guidance.r = row.r;
            row.errors.push_back(error_of(integrate(ctx, x0, &y, 0, N), y));
        }
        rep.unguided_errors.push_back(error_of(integrate(ctx, x0, nullptr, 0, N), y));
    }

    std::vector<double> rs, errs;
    for (auto& row : rep.rows) {
        row.mean_error = std::accumulate(row.errors.begin(), row.errors.end(), 0.0) / static_cast<double>(row.errors.size());
        for (double e : row.errors) {
            rs.push_back(row.r);
            errs.push_back(e);
        }
    }
    rep.unguided_mean = std::accumulate(rep.unguided_errors.begin(), rep.unguided_errors.end(), 0.0) /
                        static_cast<double>(rep.unguided_errors.size());
    if (rs.size() >= 3) rep.trend = spearman(rs, errs);
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<long> mask_shift_origins(long extent, long patch_size, double overlap, int factor) {
    if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidParameter("overlap must lie in [0, 1)");
    long stride = std::lround(static_cast<double>(patch_size) * (1.0 - overlap) / factor) * factor;
    stride = std::clamp<long>(stride, factor, patch_size);
    std::vector<long> origins{0};
    long o = 0;
    while (o + patch_size < extent) {
        o = std::min(o + stride, extent - patch_size);
        origins.push_back(o);
    }
    return origins;
}

long grid_shift_patch_count(Extent extent, long patch_size, long offset_y, long offset_x) {
    return PatchGrid{patch_size, offset_y, offset_x, extent}.count();
}

long mask_shift_patch_count(Extent extent, long patch_size, double overlap, int factor) {
    return static_cast<long>(mask_shift_origins(extent.height, patch_size, overlap, factor).size() *
                             mask_shift_origins(extent.width, patch_size, overlap, factor).size());
}

ImagePlane mask_shift_upscale(const ImagePlane& z_prev, const PyramidSettings& settings, double overlap,
                              const Denoiser& denoiser, std::uint64_t seed, MaskShiftReport* report) {
    if (!(overlap > 0.0 && overlap < 1.0)) throw InvalidParameter("mask-shifting overlap must lie in (0, 1)");
    const StagePlan& plan = settings.plan;
    validate(plan);
    validate(settings.guidance, settings.schedule.num_steps());
    const auto started_at = std::chrono::steady_clock::now();

    const int k = plan.factor;
    const long M = plan.patch_size;
    const long H = z_prev.height() * k;
    const long W = z_prev.width() * k;
    const double resolution = z_prev.resolution() / k;
    const std::vector<double> background =
        plan.background.empty() ? corner_median_background(z_prev) : plan.background;

    CountingDenoiser counted(denoiser);
    StepContext ctx{settings.schedule, counted, settings.guidance, DownsampleOperator{k}, resolution, settings.method, 1};

    const ImagePlane noise = initial_noise(plan.channels, H, W, settings.schedule.sigma_max(), seed, 1, settings.storage);
    ImagePlane out(plan.channels, H, W, resolution, settings.storage);
    std::vector<char> done(static_cast<std::size_t>(H * W), 0);

    const auto ys = mask_shift_origins(H, M, overlap, k);
    const auto xs = mask_shift_origins(W, M, overlap, k);
    MaskShiftReport rep;
    rep.stride = ys.size() > 1 ? ys[1] - ys[0] : M;
    long sequence = 0;

    for (std::size_t iy = 0; iy < ys.size(); ++iy) {
        for (std::size_t ix = 0; ix < xs.size(); ++ix) {
            const PatchRect rect{ys[iy], xs[ix], M};
            const PatchRect guide_rect{rect.y0 / k, rect.x0 / k, M / k};
            const ImagePlane guide = extract_patch(z_prev, guide_rect, background);
            const ImagePlane frozen = extract_patch(out, rect, background);

            // Positions inside the patch already produced by earlier patches.
            std::vector<std::size_t> frozen_at;
            for (long y = 0; y < M; ++y) {
                for (long x = 0; x < M; ++x) {
                    const long gy = rect.y0 + y, gx = rect.x0 + x;
                    if (gy < H && gx < W && done[static_cast<std::size_t>(gy * W + gx)]) {
                        frozen_at.push_back(static_cast<std::size_t>(y * M + x));
                    }
                }
            }
            auto reset_frozen = [&](ImagePlane& p) {
                for (int c = 0; c < p.channels(); ++c) {
                    auto dst = p.channel(c);
                    auto src = frozen.channel(c);
                    for (std::size_t j : frozen_at) dst[j] = src[j];
                }
            };

            MaskShiftTraceEntry entry{static_cast<long>(rep.trace.size()), static_cast<long>(iy),
                                      static_cast<long>(ix), sequence++, 0};
            ImagePlane x = extract_patch(noise, rect, background);
            x.set_resolution(resolution);
            reset_frozen(x);
            for (int i = 0; i < settings.schedule.num_steps(); ++i) {
                try {
                    x = guided_step(ctx, x, &guide, i);
                } catch (const NumericalFailure& e) {
                    FailureSite outer;
                    outer.patch = entry.index;
                    throw e.with_context(outer);
                }
                reset_frozen(x);
            }
            write_patch(out, rect, x);
            for (long y = rect.y0; y < std::min(rect.y0 + M, H); ++y)
                for (long xx = rect.x0; xx < std::min(rect.x0 + M, W); ++xx) done[static_cast<std::size_t>(y * W + xx)] = 1;
            entry.finished = sequence++;
            rep.trace.push_back(entry);
        }
    }
    rep.patches = static_cast<long>(rep.trace.size());
    rep.denoiser_calls = counted.calls();
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_at).count();
    if (report) *report = std::move(rep);
    return out;
}

// ---------------------------------------------------------------------------

ImagePlane draw_from_mixture(const GaussianMixtureOracle& oracle, const ImagePlane& like, RngStream& stream) {
    const auto& comps = oracle.components();
    double u = stream.next_uniform();
    std::size_t k = 0;
    for (; k + 1 < comps.size(); ++k) {
        if (u < comps[k].weight) break;
        u -= comps[k].weight;
    }
    ImagePlane out(like.channels(), like.height(), like.width(), like.resolution());
    for (int c = 0; c < like.channels(); ++c)
        for (long y = 0; y < like.height(); ++y)
            for (long x = 0; x < like.width(); ++x)
                out.at(c, y, x) = oracle.mean_at(k, like, c, y, x) + comps[k].stddev * stream.next_normal();
    return out;
}

DistributionReport distribution_test(const GaussianMixtureOracle& oracle, std::span<const ImagePlane> samples,
                                     const DistributionThresholds& thresholds, std::uint64_t seed) {
    if (samples.size() < 1000) throw InvalidParameter("distribution test needs at least 1000 samples");
    const ImagePlane& like = samples.front();
    const std::size_t n = like.size();
    const auto& comps = oracle.components();
    const std::size_t K = comps.size();
    const double count = static_cast<double>(samples.size());

    // Component means laid out flat, and the mixture's first two moments.
    std::vector<std::vector<double>> mu(K, std::vector<double>(n));
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t j = 0;
        for (int c = 0; c < like.channels(); ++c)
            for (long y = 0; y < like.height(); ++y)
                for (long x = 0; x < like.width(); ++x) mu[k][j++] = oracle.mean_at(k, like, c, y, x);
    }
    std::vector<double> mean(n, 0.0);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < n; ++j) mean[j] += comps[k].weight * mu[k][j];
    auto true_cov = [&](std::size_t a, std::size_t b) {
        double v = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            v += comps[k].weight * (mu[k][a] * mu[k][b] + (a == b ? comps[k].stddev * comps[k].stddev : 0.0));
        }
        return v - mean[a] * mean[b];
    };

    DistributionReport rep;
    rep.samples = samples.size();

    std::vector<double> emp_mean(n, 0.0);
    for (const auto& s : samples) {
        if (!s.same_shape(like)) throw ShapeMismatch("distribution test samples differ in shape");
        auto v = s.samples();
        for (std::size_t j = 0; j < n; ++j) emp_mean[j] += v[j];
    }
    for (double& v : emp_mean) v /= count;
    for (std::size_t j = 0; j < n; ++j) {
        const double se = std::sqrt(true_cov(j, j) / count);
        rep.max_mean_z = std::max(rep.max_mean_z, std::abs(emp_mean[j] - mean[j]) / se);
    }

    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) {
            double acc = 0.0;
            for (const auto& s : samples) acc += (s.samples()[a] - emp_mean[a]) * (s.samples()[b] - emp_mean[b]);
            rep.max_covariance_error = std::max(rep.max_covariance_error, std::abs(acc / (count - 1.0) - true_cov(a, b)));
        }
    }

    // Mode assignment: most responsible component for the noise-free sample.
    std::vector<double> counts(K, 0.0);
    for (const auto& s : samples) {
        auto v = s.samples();
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double var = comps[k].stddev * comps[k].stddev;
            double d2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) d2 += (v[j] - mu[k][j]) * (v[j] - mu[k][j]);
            const double score = std::log(comps[k].weight) - 0.5 * static_cast<double>(n) * std::log(var) - 0.5 * d2 / var;
            if (score > best_score) {
                best_score = score;
                best = k;
            }
        }
        counts[best] += 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) {
        rep.mode_weights.push_back(counts[k] / count);
        rep.max_weight_error = std::max(rep.max_weight_error, std::abs(counts[k] / count - comps[k].weight));
    }

    // Sliced Wasserstein-1 against exact draws.
    RngStream stream(StreamKey{seed, 0, 0, 0, StreamPurpose::Evaluation});
    std::vector<ImagePlane> reference;
    reference.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) reference.push_back(draw_from_mixture(oracle, like, stream));
    constexpr int kDirections = 16;
    std::vector<double> pa(samples.size()), pb(samples.size()), dir(n);
    double total = 0.0;
    for (int d = 0; d < kDirections; ++d) {
        double norm = 0.0;
        for (double& v : dir) {
            v = stream.next_normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            pa[i] = std::inner_product(dir.begin(), dir.end(), samples[i].samples().begin(), 0.0);
            pb[i] = std::inner_product(dir.begin(), dir.end(), reference[i].samples().begin(), 0.0);
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double w = 0.0;
        for (std::size_t i = 0; i < pa.size(); ++i) w += std::abs(pa[i] - pb[i]);
        total += w / count;
    }
    rep.sliced_distance = total / kDirections;

    rep.mean_ok = rep.max_mean_z <= thresholds.mean_standard_errors;
    rep.weights_ok = rep.max_weight_error <= thresholds.weight_tolerance;
    return rep;
}

double pyramid_consistency_rms(const ImagePlane& z_final, const ImagePlane& z0, int factor, int levels,
                               const TissueMask* mask) {
    ImagePlane down = z_final;
    for (int l = 0; l < levels; ++l) down = downsample(DownsampleOperator{factor}, down);
    if (!down.same_shape(z0)) throw ShapeMismatch("pyramid consistency: levels do not match z_0");
    double sq = 0.0;
    long n = 0;
    for (int c = 0; c < z0.channels(); ++c) {
        for (long y = 0; y < z0.height(); ++y) {
            for (long x = 0; x < z0.width(); ++x) {
                if (mask && !mask->cell(y / mask->cell_size(), x / mask->cell_size())) continue;
                const double d = down.at(c, y, x) - z0.at(c, y, x);
                sq += d * d;
                ++n;
            }
        }
    }
    return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

// ---------------------------------------------------------------------------

ImagePlane smooth_guide(int channels, long extent, double resolution, std::uint64_t seed) {
    RngStream stream(StreamKey{seed, 0, 0, 1, StreamPurpose::Evaluation});
    ImagePlane g(channels, extent, extent, resolution);
    const double two_pi = 2.0 * std::acos(-1.0);
    const double e = static_cast<double>(extent);
    for (int c = 0; c < channels; ++c) {
        const double px = two_pi * stream.next_uniform();
        const double py = two_pi * stream.next_uniform();
        for (long y = 0; y < extent; ++y) {
            const double fy = std::cos(two_pi * static_cast<double>(y) * 0.75 / e + py);
            for (long x = 0; x < extent; ++x) g.at(c, y, x) = 0.5 * std::sin(two_pi * static_cast<double>(x) / e + px) * fy;
        }
    }
    return g;
}

namespace {

PyramidSettings single_stage(const PyramidSettings& base, long patch_size) {
    PyramidSettings s = base;
    s.plan.levels = 1;
    s.plan.patch_size = patch_size;
    s.plan.tissue_masking = false;
    return s;
}

}  // namespace

std::vector<SeamTrial> seam_study(const PyramidSettings& base, const Denoiser& denoiser,
                                  const SeamStudyOptions& options) {
    const int k = base.plan.factor;
    if (options.extent % k != 0) throw InvalidParameter("seam study extent must be divisible by k");
    PyramidSettings s = single_stage(base, options.patch_size);
    const PatchGrid fixed{options.patch_size, 0, 0, {options.extent, options.extent}};

    std::vector<SeamTrial> trials;
    for (int i = 0; i < options.seeds; ++i) {
        SeamTrial t;
        t.seed = options.base_seed + static_cast<std::uint64_t>(i);
        const ImagePlane guide = smooth_guide(s.plan.channels, options.extent / k, 2.0, t.seed);
        s.plan.grid_shift = false;
        t.fixed_ratio = seam_energy(upscale_stage(guide, s, denoiser, t.seed), fixed).ratio;
        s.plan.grid_shift = true;
        t.shift_ratio = seam_energy(upscale_stage(guide, s, denoiser, t.seed), fixed).ratio;
        t.mask_ratio = std::numeric_limits<double>::quiet_NaN();
        if (options.include_mask_shift) {
            t.mask_ratio = seam_energy(mask_shift_upscale(guide, s, options.overlap, denoiser, t.seed), fixed).ratio;
        }
        trials.push_back(t);
    }
    return trials;
}

std::vector<StitchBenchRow> stitch_benchmark(const PyramidSettings& base, const Denoiser& denoiser,
                                             std::span<const long> extents, std::span<const double> overlaps,
                                             std::uint64_t seed) {
    const int k = base.plan.factor;
    PyramidSettings s = single_stage(base, base.plan.patch_size);
    std::vector<StitchBenchRow> rows;
    for (long extent : extents) {
        if (extent % k != 0) throw InvalidParameter("benchmark extent must be divisible by k");
        const ImagePlane guide = smooth_guide(s.plan.channels, extent / k, 2.0, seed);

        CountingDenoiser counted(denoiser);
        StageTrace trace;
        const auto started = std::chrono::steady_clock::now();
        (void)upscale_stage(guide, s, counted, seed, &trace);
        const double grid_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        double mean = 0.0;
        for (const auto& it : trace.iterations) mean += static_cast<double>(it.patches);
        mean /= static_cast<double>(trace.iterations.size());

        for (double overlap : overlaps) {
            MaskShiftReport rep;
            (void)mask_shift_upscale(guide, s, overlap, denoiser, seed, &rep);
            StitchBenchRow row;
            row.extent = extent;
            row.overlap = overlap;
            row.grid_mean_patches = mean;
            row.grid_max_patches = trace.max_patches_per_iteration();
            row.grid_denoiser_calls = counted.calls();
            row.grid_seconds = grid_seconds;
            row.mask_patches = rep.patches;
            row.mask_denoiser_calls = rep.denoiser_calls;
            row.mask_seconds = rep.seconds;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace tilediff
