#pragma once

#include "tilediff/guidance.hpp"
#include "tilediff/pyramid.hpp"
#include "tilediff/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tilediff {

enum class SamplePrecision { Single, Double };

/// Everything a run needs, flat and serializable.
struct RunConfig {
    StagePlan plan{};

    int steps = 40;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    SolverMethod method = SolverMethod::Heun;

    GuidanceConfig guidance{};
    double sigma_data = 0.5;

    /// "builtin:<name>" or a path to an oracle JSON file.
    std::string denoiser = "builtin:tissue";
    std::uint64_t seed = 0;
    int workers = 1;
    std::string output = "pyramid";
    SamplePrecision precision = SamplePrecision::Double;

    /// Stored tile edge; 0 means the patch size.
    long tile_size = 0;
    long spill_extent = 16384;
    std::string scratch_dir{};
    bool raw_dumps = false;

    long effective_tile_size() const noexcept { return tile_size > 0 ? tile_size : plan.patch_size; }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws InvalidParameter on any inconsistent field.
void validate(const RunConfig& cfg);

/// One `key:type = value` line per field, in a fixed order. `prefix` is
/// prepended to every key (used for the manifest's config echo).
std::string serialize(const RunConfig& cfg, const std::string& prefix = "");

/// Parses `key[:type] = value` lines; `#` starts a comment. Unknown keys,
/// malformed values and type annotations that disagree with the key are
/// rejected with InvalidParameter. Lines whose key lacks `prefix` are skipped.
RunConfig parse_config(const std::string& text, RunConfig base = {}, const std::string& prefix = "");
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies a single `key = value` assignment.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every configurable key, in serialization order.
std::vector<std::string> config_keys();

/// TILEDIFF_<KEY> with dots as underscores, upper-cased.
std::string env_name(const std::string& key);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
/// Overrides keys from the environment (or from `lookup` when given).
void apply_env(RunConfig& cfg, const EnvLookup& lookup = {});

PyramidSettings to_settings(const RunConfig& cfg);

std::string to_string(SolverMethod m);
std::string to_string(GuidanceConvention c);
std::string to_string(SamplePrecision p);
SolverMethod parse_method(const std::string& s);
GuidanceConvention parse_convention(const std::string& s);
SamplePrecision parse_precision(const std::string& s);

}  // namespace tilediff
