// Serial reference kernels against their OpenMP versions, plus grid
// shifting against the sequential mask-shifting baseline.

#include "tilediff/denoiser.hpp"
#include "tilediff/eval.hpp"
#include "tilediff/guidance.hpp"
#include "tilediff/kernels.hpp"
#include "tilediff/pyramid.hpp"
#include "tilediff/rng.hpp"
#include "tilediff/solver.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

using namespace tilediff;

namespace {

constexpr long kPatch = 32;

// Shared inputs for one patch iteration over an extent x extent image.
struct IterationFixture {
    NoiseSchedule schedule = build_schedule(40, 0.002, 80.0, 7.0);
    std::unique_ptr<Denoiser> oracle = builtin_oracle("tissue", 3, kPatch);
    StepContext ctx{schedule, *oracle, {28}, {2}, 20.0, SolverMethod::Heun, 1};
    ImagePlane x;
    ImagePlane z;
    std::vector<double> background{0.8, 0.8, 0.8};
    PatchGrid grid;

    explicit IterationFixture(long extent)
        : x(initial_noise(3, extent, extent, 80.0, 1, 1)),
          z(smooth_guide(3, extent / 2, 40.0, 1)),
          grid{kPatch, 6, 10, {extent, extent}} {}

    kernels::PatchIteration iteration() const { return {ctx, x, &z, grid, 5, background, nullptr, 1, 6}; }
};

void BM_StepPatchesSerial(benchmark::State& state) {
    const IterationFixture f(state.range(0));
    ImagePlane out(3, state.range(0), state.range(0), 20.0);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::step_patches_serial(f.iteration(), out));
    state.SetItemsProcessed(state.iterations() * f.grid.count());
}

void BM_StepPatchesOmp(benchmark::State& state) {
    const IterationFixture f(state.range(0));
    ImagePlane out(3, state.range(0), state.range(0), 20.0);
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::step_patches_omp(f.iteration(), out, workers));
    state.SetItemsProcessed(state.iterations() * f.grid.count());
}

void BM_DownsampleSerial(benchmark::State& state) {
    const ImagePlane u = initial_noise(3, state.range(0), state.range(0), 1.0, 2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(downsample(DownsampleOperator{2}, u));
    state.SetBytesProcessed(state.iterations() * static_cast<long>(u.size() * sizeof(double)));
}

void BM_DownsampleOmp(benchmark::State& state) {
    const ImagePlane u = initial_noise(3, state.range(0), state.range(0), 1.0, 2, 1);
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::downsample_omp(DownsampleOperator{2}, u, workers));
    state.SetBytesProcessed(state.iterations() * static_cast<long>(u.size() * sizeof(double)));
}

void BM_InitialNoiseSerial(benchmark::State& state) {
    const long e = state.range(0);
    for (auto _ : state) benchmark::DoNotOptimize(initial_noise(3, e, e, 80.0, 3, 2));
    state.SetItemsProcessed(state.iterations() * 3 * e * e);
}

void BM_InitialNoiseOmp(benchmark::State& state) {
    const long e = state.range(0);
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::initial_noise_omp(3, e, e, 80.0, 3, 2, {}, workers));
    state.SetItemsProcessed(state.iterations() * 3 * e * e);
}

PyramidSettings stage_settings() {
    PyramidSettings s;
    s.plan.levels = 1;
    s.plan.patch_size = kPatch;
    s.plan.channels = 1;
    s.plan.background = {0.0};
    s.plan.tissue_masking = false;
    return s;
}

void BM_GridShiftStage(benchmark::State& state) {
    const auto oracle = builtin_oracle("texture", 1, kPatch);
    const ImagePlane guide = smooth_guide(1, state.range(0) / 2, 2.0, 4);
    const PyramidSettings s = stage_settings();
    for (auto _ : state) benchmark::DoNotOptimize(upscale_stage(guide, s, *oracle, 4));
}

void BM_MaskShiftStage(benchmark::State& state) {
    const auto oracle = builtin_oracle("texture", 1, kPatch);
    const ImagePlane guide = smooth_guide(1, state.range(0) / 2, 2.0, 4);
    const PyramidSettings s = stage_settings();
    const double overlap = static_cast<double>(state.range(1)) / 4.0;
    for (auto _ : state) benchmark::DoNotOptimize(mask_shift_upscale(guide, s, overlap, *oracle, 4));
}

}  // namespace

BENCHMARK(BM_StepPatchesSerial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_StepPatchesOmp)->ArgsProduct({{128, 256}, {2, 4, 8}})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_DownsampleSerial)->Arg(1024)->Arg(4096)->UseRealTime();
BENCHMARK(BM_DownsampleOmp)->ArgsProduct({{1024, 4096}, {2, 4, 8}})->UseRealTime();
BENCHMARK(BM_InitialNoiseSerial)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_InitialNoiseOmp)->ArgsProduct({{1024, 2048}, {2, 4, 8}})->Unit(benchmark::kMillisecond)->UseRealTime();
// Overlap argument is in quarters: 1 = 1/4, 2 = 1/2, 3 = 3/4.
BENCHMARK(BM_GridShiftStage)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MaskShiftStage)->ArgsProduct({{64, 128, 256}, {1, 2, 3}})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
