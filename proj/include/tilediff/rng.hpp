#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace tilediff {

/// What a random stream is used for. Part of the stream key so that two
/// consumers at the same (stage, iteration, patch) never share draws.
enum class StreamPurpose : std::uint32_t {
    InitialNoise = 1,
    GridShift = 2,
    Resolution = 3,
    Evaluation = 4,
    Test = 5,
};

/// Key tuple identifying one independent stream. There is no global RNG
/// state anywhere in the engine; every draw is a pure function of a key
/// and a counter.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint32_t stage = 0;
    std::uint32_t iteration = 0;
    std::uint64_t patch = 0;
    StreamPurpose purpose = StreamPurpose::Test;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Philox-4x32 with 10 rounds (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Counter-based stream: draw n of a stream is philox(seed, [n/4, stream id]) lane n%4.
/// Copying a stream copies its position; two streams with the same key
/// produce the same sequence regardless of which thread runs them.
class RngStream {
public:
    explicit RngStream(const StreamKey& key);

    std::uint32_t next_u32();
    /// Uniform in [0, 1), 53 bits.
    double next_uniform();
    /// Uniform in (0, 1], never zero; used by Box-Muller.
    double next_uniform_open0();
    /// Uniform integer in [0, n) without modulo bias (Lemire's method).
    std::uint32_t next_below(std::uint32_t n);
    double next_normal();

    /// Skip ahead so the next draw is draw number `position`.
    void seek(std::uint64_t position);
    std::uint64_t position() const noexcept { return position_; }

private:
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t stream_id_ = 0;
    std::uint64_t position_ = 0;
    std::array<std::uint32_t, 4> block_{};
    std::uint64_t block_index_ = ~std::uint64_t{0};
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

/// Convenience factory matching the engine's key tuple.
inline RngStream rng_stream(std::uint64_t seed, std::uint32_t stage, std::uint32_t iteration, std::uint64_t patch,
                            StreamPurpose purpose) {
    return RngStream(StreamKey{seed, stage, iteration, patch, purpose});
}

/// Fills `out` with Normal(0, stddev^2) draws from one stream.
void fill_normal(RngStream& stream, std::span<double> out, double stddev);

}  // namespace tilediff
