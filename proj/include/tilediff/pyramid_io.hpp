#pragma once

#include "tilediff/config.hpp"
#include "tilediff/image.hpp"
#include "tilediff/pyramid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tilediff {

inline constexpr const char* kSoftwareVersion = "0.1.0";
inline constexpr const char* kManifestFormat = "tilediff-pyramid";
inline constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------------------
// Raw dumps: "TILEDIFF", u32 version, u32 bytes per sample (8 or 4),
// u32 channels, u32 height, u32 width, f64 resolution, then samples in
// planar order, all little-endian.

void write_raw(const std::filesystem::path& path, const ImagePlane& img, bool as_float = false);
ImagePlane read_raw(const std::filesystem::path& path, const StorageOptions& storage = {});

// ---------------------------------------------------------------------------
// PNG: samples in [-1, 1] map affinely to [0, 255], clamped and rounded.

std::uint8_t quantize(double v) noexcept;
double dequantize(std::uint8_t q) noexcept;

/// 8-bit RGB; single-channel images are replicated to grey.
void write_png(const std::filesystem::path& path, const ImagePlane& img);
/// Reads an 8-bit PNG into `channels` (1 or 3) planes.
ImagePlane read_png(const std::filesystem::path& path, int channels, double resolution = 0.0);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pyramid directory: level_<l>/tile_<x>_<y>.png, optional level_<l>/level.raw,
// and `manifest` (typed `key:type = value` lines).

struct TileRecord {
    long x = 0;  ///< column index
    long y = 0;  ///< row index
    std::string sha256;

    std::string file(int level) const;
};

struct LevelRecord {
    int level = 0;
    long height = 0;
    long width = 0;
    double resolution = 0.0;
    long tile_size = 0;
    long tiles_x = 0;
    long tiles_y = 0;
    std::vector<TileRecord> tiles;
    std::string raw_file;  ///< empty when no raw dump was written
    std::string raw_sha256;
    /// SHA-256 over the concatenated tile digests, in row-major tile order.
    std::string checksum;
    double seconds = 0.0;

    long tile_count() const noexcept { return tiles_x * tiles_y; }
};

struct PyramidManifest {
    std::string format = kManifestFormat;
    int version = kManifestVersion;
    std::string software = kSoftwareVersion;
    bool complete = false;
    std::string error;
    std::uint64_t seed = 0;
    double s0 = 0.0;
    RunConfig config{};
    std::vector<LevelRecord> levels;

    std::string serialize() const;
    static PyramidManifest parse(const std::string& text);
};

std::string level_checksum(const std::vector<TileRecord>& tiles);

/// Streams levels to disk as they complete. The manifest is rewritten after
/// every level with status incomplete and only marked complete by finish().
class PyramidWriter {
public:
    PyramidWriter(std::filesystem::path dir, RunConfig config, std::uint64_t seed);

    const LevelRecord& write_level(int level, const ImagePlane& img, double seconds);
    void finish();
    /// Records the failure and leaves the manifest marked incomplete.
    void fail(const std::string& message);

    const PyramidManifest& manifest() const noexcept { return manifest_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    void flush() const;

    std::filesystem::path dir_;
    PyramidManifest manifest_;
};

PyramidManifest write_pyramid(const PyramidRun& run, const std::filesystem::path& dir, const RunConfig& config);
PyramidManifest read_manifest(const std::filesystem::path& dir);

/// Exact from the raw dump when present, otherwise reassembled from the
/// 8-bit tiles.
ImagePlane read_level(const std::filesystem::path& dir, int level);

/// Problems found in a pyramid directory; empty when it is intact. Checks
/// completion status, tile presence and digests, level checksums, the
/// extent chain and the spatial-resolution chain s_l = s_0 / k^l.
std::vector<std::string> verify_pyramid(const std::filesystem::path& dir);

}  // namespace tilediff
