// Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.

#include "tilediff/config.hpp"
#include "tilediff/denoiser.hpp"
#include "tilediff/eval.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/preconditioning.hpp"
#include "tilediff/pyramid.hpp"
#include "tilediff/pyramid_io.hpp"
#include "tilediff/rng.hpp"
#include "tilediff/schedule.hpp"
#include "tilediff/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tilediff;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Verdict()> check;
};

ImagePlane random_plane(RngStream& rng, int c, long h, long w) {
    ImagePlane p(c, h, w);
    for (double& v : p.samples()) v = rng.next_normal();
    return p;
}

double max_abs_diff(const ImagePlane& a, const ImagePlane& b) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a.samples()[j] - b.samples()[j]));
    return m;
}

double l2(const ImagePlane& a, const ImagePlane& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a.samples()[j] - b.samples()[j]) * (a.samples()[j] - b.samples()[j]);
    return std::sqrt(s);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------

Verdict projection_exactness() {
    RngStream rng(StreamKey{1001, 0, 0, 0, StreamPurpose::Test});
    double worst_constraint = 0.0, worst_idem = 0.0;
    const int factors[3] = {2, 4, 8};
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = factors[trial % 3];
        const DownsampleOperator op{k};
        const long bh = 1 + static_cast<long>(rng.next_below(4)), bw = 1 + static_cast<long>(rng.next_below(4));
        const ImagePlane u = random_plane(rng, 1 + static_cast<int>(rng.next_below(3)), bh * k, bw * k);
        const ImagePlane y = random_plane(rng, u.channels(), bh, bw);
        const ImagePlane g = guided_estimate(op, u, y);
        worst_constraint = std::max(worst_constraint, max_abs_diff(downsample(op, g), y));
        worst_idem = std::max(worst_idem, max_abs_diff(guided_estimate(op, g, y), g));
    }

    // Minimality on 4 x 4 instances: 1000 random feasible points each.
    long beaten = 0;
    const DownsampleOperator op{2};
    for (int inst = 0; inst < 10; ++inst) {
        const ImagePlane u = random_plane(rng, 1, 4, 4);
        const ImagePlane y = random_plane(rng, 1, 2, 2);
        const ImagePlane g = guided_estimate(op, u, y);
        const double best = l2(g, u);
        for (int v = 0; v < 1000; ++v) {
            ImagePlane feasible = g;
            const ImagePlane z = guided_estimate(op, random_plane(rng, 1, 4, 4), ImagePlane(1, 2, 2));
            const double t = 3.0 * rng.next_uniform();
            for (std::size_t j = 0; j < z.size(); ++j) feasible.samples()[j] += t * z.samples()[j];
            if (l2(feasible, u) < best - 1e-12) ++beaten;
        }
    }
    const bool pass = worst_constraint <= 1e-9 && worst_idem <= 1e-12 && beaten == 0;
    return {pass, "max |A u_bar - y| = " + fmt(worst_constraint) + ", idempotence " + fmt(worst_idem) +
                      ", feasible points closer than the projection: " + std::to_string(beaten) + "/10000"};
}

// Dense pooling matrix for one channel.
std::vector<std::vector<double>> dense_pooling(long h, long w, int k) {
    std::vector<std::vector<double>> a(static_cast<std::size_t>((h / k) * (w / k)),
                                       std::vector<double>(static_cast<std::size_t>(h * w), 0.0));
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            a[static_cast<std::size_t>((y / k) * (w / k) + x / k)][static_cast<std::size_t>(y * w + x)] = 1.0 / (k * k);
    return a;
}

Verdict pseudoinverse_algebra() {
    RngStream rng(StreamKey{1002, 0, 0, 0, StreamPurpose::Test});
    double worst_aap = 0.0, worst_dense = 0.0;
    for (int k : {2, 4, 8}) {
        const DownsampleOperator op{k};
        for (int trial = 0; trial < 20; ++trial) {
            const ImagePlane y = random_plane(rng, 2, 8 / k + 1, 8 / k + 1);
            worst_aap = std::max(worst_aap, max_abs_diff(downsample(op, pseudo_upsample(op, y)), y));
        }
        // Dense A^dagger = A^T (A A^T)^{-1} = k^2 A^T, since A A^T = I / k^2 is checked here too.
        const long n = 8;
        const auto a = dense_pooling(n, n, k);
        const std::size_t rows = a.size(), cols = a[0].size();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t l = 0; l < rows; ++l) {
                double g = 0.0;
                for (std::size_t j = 0; j < cols; ++j) g += a[i][j] * a[l][j];
                worst_dense = std::max(worst_dense, std::abs(g - (i == l ? 1.0 / (k * k) : 0.0)));
            }
        }
        for (int trial = 0; trial < 20; ++trial) {
            const ImagePlane u = random_plane(rng, 1, n, n);
            const ImagePlane y = random_plane(rng, 1, n / k, n / k);
            std::vector<double> au(rows, 0.0), pinv_y(cols, 0.0), proj(cols, 0.0);
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    au[i] += a[i][j] * u.samples()[j];
                    pinv_y[j] += k * k * a[i][j] * y.samples()[i];
                }
            }
            // (I - A^dagger A) u + A^dagger y
            for (std::size_t j = 0; j < cols; ++j) {
                double back = 0.0;
                for (std::size_t i = 0; i < rows; ++i) back += k * k * a[i][j] * au[i];
                proj[j] = u.samples()[j] - back + pinv_y[j];
            }
            const ImagePlane d = downsample(op, u), up = pseudo_upsample(op, y), g = guided_estimate(op, u, y);
            for (std::size_t i = 0; i < rows; ++i) worst_dense = std::max(worst_dense, std::abs(d.samples()[i] - au[i]));
            for (std::size_t j = 0; j < cols; ++j) {
                worst_dense = std::max(worst_dense, std::abs(up.samples()[j] - pinv_y[j]));
                worst_dense = std::max(worst_dense, std::abs(g.samples()[j] - proj[j]));
            }
        }
    }
    const bool pass = worst_aap <= 1e-12 && worst_dense <= 1e-12;
    return {pass, "max |A A^dagger y - y| = " + fmt(worst_aap) + ", max matrix-free vs dense = " + fmt(worst_dense)};
}

Verdict scaling_identities() {
    RngStream rng(StreamKey{1003, 0, 0, 0, StreamPurpose::Test});
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double sigma = std::pow(10.0, -4.0 + 7.0 * rng.next_uniform());
        const double co = c_out(sigma), ci = c_in(sigma), cs = c_skip(sigma);
        worst = std::max(worst, std::abs(loss_weight(sigma) * co * co - 1.0));
        worst = std::max(worst, std::abs(ci * ci * (sigma * sigma + 0.25) - 1.0));
        worst = std::max(worst, std::abs(cs - 0.25 * ci * ci) / cs);
    }
    return {worst <= 1e-12, "max relative error " + fmt(worst) + " over 10^4 noise levels"};
}

Verdict schedule_fidelity() {
    const auto s = build_schedule(40, 0.002, 80.0, 7.0);
    const bool ends = s.time(0) == 80.0 && s.time(39) == 0.002 && s.time(40) == 0.0;
    RngStream rng(StreamKey{1004, 0, 0, 0, StreamPurpose::Test});
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(200));
        const double lo = std::exp(-8.0 + 8.0 * rng.next_uniform());
        const double hi = lo * (1.0 + std::exp(10.0 * rng.next_uniform()));
        const auto r = build_schedule(n, lo, hi, 0.2 + 15.0 * rng.next_uniform());
        for (int i = 0; i < n; ++i) {
            if (!(r.time(i) > r.time(i + 1))) {
                ++bad;
                break;
            }
        }
    }
    return {ends && bad == 0, "t_0 = " + fmt(s.time(0)) + ", t_39 = " + fmt(s.time(39)) + ", t_40 = " + fmt(s.time(40)) +
                                  ", non-monotone draws " + std::to_string(bad) + "/1000"};
}

Verdict solver_order() {
    const GaussianMixtureOracle oracle({{1.0, {0.0}, 0.5}});
    const std::vector<int> ns{10, 20, 40, 80, 160};
    const auto heun = solver_accuracy_sweep(oracle, ns, SolverMethod::Heun);
    const auto euler = solver_accuracy_sweep(oracle, ns, SolverMethod::Euler);
    const double ho = convergence_order(heun), eo = convergence_order(euler);
    bool below = true;
    for (std::size_t i = 0; i < 4; ++i) below = below && heun[i].error < euler[i].error;
    const bool pass = ho >= 1.7 && ho <= 2.3 && eo >= 0.8 && eo <= 1.2 && below;
    return {pass, "Heun slope " + fmt(ho) + ", Euler slope " + fmt(eo) + ", Heun below Euler at N=10..80: " +
                      (below ? "yes" : "no")};
}

Verdict end_to_end_distribution() {
    const GaussianMixtureOracle oracle({{0.3, {-0.6}, 0.1}, {0.7, {0.5}, 0.15}});
    const auto schedule = build_schedule(40, 0.002, 80.0, 7.0);
    const StepContext ctx{schedule, oracle, {}, {}, 1.0, SolverMethod::Heun};
    std::vector<ImagePlane> samples;
    samples.reserve(10000);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) samples.push_back(sample_unconditional(ctx, 1, 1, 4, seed));
    const auto rep = distribution_test(oracle, samples);
    std::string weights;
    for (double w : rep.mode_weights) weights += (weights.empty() ? "" : "/") + fmt(w);
    return {rep.passed(), "mode weights " + weights + " (target 0.3/0.7, tol 0.05), max mean z " + fmt(rep.max_mean_z) +
                              " (limit 4), sliced W1 " + fmt(rep.sliced_distance)};
}

Verdict relaxation() {
    const auto schedule = build_schedule(40, 0.002, 80.0, 7.0);
    const auto oracle = builtin_oracle("texture", 1, 32);
    RelaxationOptions opts;
    opts.patch_size = 32;
    opts.seeds = 50;
    const std::vector<int> rs{0, 10, 20, 28, 40};
    const auto rep = relaxation_sweep(schedule, *oracle, rs, opts);
    bool monotone = true;
    std::string means;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        means += (i ? ", " : "") + std::string("r=") + std::to_string(rep.rows[i].r) + ":" + fmt(rep.rows[i].mean_error);
        if (i > 0) monotone = monotone && rep.rows[i].mean_error <= rep.rows[i - 1].mean_error;
    }
    const double e0 = rep.rows[0].mean_error, e28 = rep.rows[3].mean_error, e40 = rep.rows[4].mean_error;
    const bool between = e28 < e0 && e28 > e40;
    const bool pass = monotone && between && rep.trend.rho < 0.0 && rep.trend.p_value < 0.01;
    return {pass, means + "; Spearman rho " + fmt(rep.trend.rho) + ", p " + fmt(rep.trend.p_value)};
}

Verdict seam_suppression() {
    PyramidSettings base;
    base.plan.channels = 1;
    base.plan.background = {0.0};
    const auto oracle = builtin_oracle("texture", 1, 32);
    SeamStudyOptions opts;
    opts.patch_size = 32;
    opts.extent = 256;
    opts.seeds = 20;
    const auto trials = seam_study(base, *oracle, opts);
    int wins = 0;
    double worst_shift = 0.0, mean_fixed = 0.0;
    for (const auto& t : trials) {
        wins += t.shift_ratio < t.fixed_ratio;
        worst_shift = std::max(worst_shift, t.shift_ratio);
        mean_fixed += t.fixed_ratio / static_cast<double>(trials.size());
    }
    return {wins >= 18 && worst_shift <= 1.1, "grid shift below fixed grid in " + std::to_string(wins) +
                                                  "/20 seeds, worst grid-shift ratio " + fmt(worst_shift) +
                                                  ", mean fixed-grid ratio " + fmt(mean_fixed)};
}

Verdict patch_economy() {
    PyramidSettings base;
    base.plan.channels = 1;
    base.plan.background = {0.0};
    base.plan.patch_size = 32;
    const auto oracle = builtin_oracle("texture", 1, 32);
    const std::vector<long> extents{64, 128, 256};
    const std::vector<double> overlaps{0.5};
    const auto rows = stitch_benchmark(base, *oracle, extents, overlaps, 5);
    bool pass = rows.size() == 3;
    std::ostringstream detail;
    for (const auto& r : rows) {
        const long per_axis = (r.extent + 31) / 32;
        const bool grid_ok = r.grid_max_patches <= (per_axis + 1) * (per_axis + 1);
        const bool mask_ok = r.mask_patches >= (2 * per_axis - 1) * (2 * per_axis - 1);
        pass = pass && grid_ok && mask_ok;
        detail << "extent " << r.extent << ": grid max " << r.grid_max_patches << "/iter (limit "
               << (per_axis + 1) * (per_axis + 1) << "), mask " << r.mask_patches << " (min "
               << (2 * per_axis - 1) * (2 * per_axis - 1) << "); ";
    }
    return {pass, detail.str()};
}

Verdict determinism() {
    RunConfig cfg;
    cfg.plan.levels = 3;
    cfg.plan.factor = 2;
    cfg.plan.patch_size = 32;
    cfg.plan.channels = 3;
    cfg.steps = 40;
    cfg.raw_dumps = true;
    const auto oracle = make_denoiser(cfg.denoiser, cfg.plan.channels, cfg.plan.patch_size);
    const fs::path root = fs::temp_directory_path() / "tilediff_acceptance_determinism";
    fs::remove_all(root);

    std::vector<PyramidManifest> manifests;
    std::vector<fs::path> dirs;
    for (int workers : {1, 2, 8}) {
        cfg.workers = workers;
        const fs::path dir = root / ("w" + std::to_string(workers));
        const PyramidRun run = generate_wsi(to_settings(cfg), *oracle, 20240);
        manifests.push_back(write_pyramid(run, dir, cfg));
        dirs.push_back(dir);
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    bool identical = true;
    for (std::size_t w = 1; w < manifests.size(); ++w) {
        for (std::size_t l = 0; l < manifests[0].levels.size(); ++l) {
            const auto& a = manifests[0].levels[l];
            const auto& b = manifests[w].levels[l];
            identical = identical && a.checksum == b.checksum && a.raw_sha256 == b.raw_sha256 &&
                        slurp(dirs[0] / a.raw_file) == slurp(dirs[w] / b.raw_file);
        }
    }
    const bool verified = verify_pyramid(dirs[0]).empty();
    const std::string top = manifests[0].levels.back().checksum.substr(0, 16);
    fs::remove_all(root);
    return {identical && verified, std::string("raw dumps and PNG checksums ") + (identical ? "identical" : "differ") +
                                       " across 1/2/8 workers (level 3 checksum " + top + "...), verify " +
                                       (verified ? "clean" : "reported problems")};
}

Verdict paper_geometry() {
    RunConfig cfg;
    cfg.plan.patch_size = 512;
    cfg.plan.factor = 2;
    cfg.plan.levels = 7;
    validate(cfg);
    const double s0 = draw_initial_resolution(cfg.plan, 1);
    const bool pass = cfg.plan.final_extent() == 65536 && cfg.plan.resolution_at(s0, 7) == s0 / 128.0;
    return {pass, "final extent " + std::to_string(cfg.plan.final_extent()) + ", s_7 / s_0 = " +
                      fmt(cfg.plan.resolution_at(s0, 7) / s0)};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "projection exactness", 10.0, projection_exactness},
        {2, "pseudoinverse algebra", 5.0, pseudoinverse_algebra},
        {3, "scaling-function identities", 1.0, scaling_identities},
        {4, "schedule fidelity", 1.0, schedule_fidelity},
        {5, "solver order", 60.0, solver_order},
        {6, "end-to-end distribution", 300.0, end_to_end_distribution},
        {7, "relaxation sweep", 600.0, relaxation},
        {8, "grid-shift seam suppression", 600.0, seam_suppression},
        {9, "patch-count economy", 300.0, patch_economy},
        {10, "determinism across workers", 900.0, determinism},
        {11, "paper-scale geometry", 1.0, paper_geometry},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds < c.budget_seconds;
        const bool pass = v.pass && in_time;
        failed += !pass;
        std::printf("[%s] criterion %d %s: %s (%.2f s of %.0f s budget)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    v.detail.c_str(), seconds, c.budget_seconds);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
