#include "tilediff/config.hpp"

#include "tilediff/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tilediff {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw InvalidParameter("config key '" + key + "': cannot parse '" + value + "' as " + what);
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty()) bad_value(key, value, "an integer");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty()) bad_value(key, value, "a number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value, "a boolean");
}

std::vector<double> parse_doubles(const std::string& key, std::string value) {
    value = trim(value);
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::vector<double> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_doubles(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    return out + "]";
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string unquote(const std::string& s) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') return s;
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (s[i] == '\\' && i + 2 < s.size()) ++i;
        out += s[i];
    }
    return out;
}

struct Field {
    const char* key;
    const char* type;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

template <class T>
Field int_field(const char* key, T RunConfig::*member) {
    return {key, "i64", [member](const RunConfig& c) { return std::to_string(c.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_integer<T>(k, v); }};
}

template <class T>
Field plan_int(const char* key, T StagePlan::*member) {
    return {key, "i64", [member](const RunConfig& c) { return std::to_string(c.plan.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) {
                c.plan.*member = parse_integer<T>(k, v);
            }};
}

Field double_field(const char* key, double RunConfig::*member) {
    return {key, "f64", [member](const RunConfig& c) { return format_double(c.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}

Field plan_double(const char* key, double StagePlan::*member) {
    return {key, "f64", [member](const RunConfig& c) { return format_double(c.plan.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) { c.plan.*member = parse_double(k, v); }};
}

Field plan_bool(const char* key, bool StagePlan::*member) {
    return {key, "bool", [member](const RunConfig& c) { return std::string(c.plan.*member ? "true" : "false"); },
            [member](RunConfig& c, const std::string& k, const std::string& v) { c.plan.*member = parse_bool(k, v); }};
}

Field string_field(const char* key, std::string RunConfig::*member) {
    return {key, "str", [member](const RunConfig& c) { return quote(c.*member); },
            [member](RunConfig& c, const std::string&, const std::string& v) { c.*member = unquote(v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(plan_int("plan.levels", &StagePlan::levels));
        f.push_back(plan_int("plan.factor", &StagePlan::factor));
        f.push_back(plan_int("plan.patch_size", &StagePlan::patch_size));
        f.push_back(plan_int("plan.channels", &StagePlan::channels));
        f.push_back(plan_double("plan.s0_min", &StagePlan::s0_min));
        f.push_back(plan_double("plan.s0_max", &StagePlan::s0_max));
        f.push_back({"plan.background", "f64[]", [](const RunConfig& c) { return format_doubles(c.plan.background); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.plan.background = parse_doubles(k, v);
                     }});
        f.push_back(plan_bool("plan.grid_shift", &StagePlan::grid_shift));
        f.push_back(plan_bool("plan.tissue_masking", &StagePlan::tissue_masking));
        f.push_back({"plan.tissue_threshold", "f64",
                     [](const RunConfig& c) { return format_double(c.plan.tissue.sample_threshold); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.plan.tissue.sample_threshold = parse_double(k, v);
                     }});
        f.push_back({"plan.tissue_fraction", "f64",
                     [](const RunConfig& c) { return format_double(c.plan.tissue.min_fraction); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.plan.tissue.min_fraction = parse_double(k, v);
                     }});
        f.push_back(int_field("schedule.steps", &RunConfig::steps));
        f.push_back(double_field("schedule.sigma_min", &RunConfig::sigma_min));
        f.push_back(double_field("schedule.sigma_max", &RunConfig::sigma_max));
        f.push_back(double_field("schedule.rho", &RunConfig::rho));
        f.push_back({"schedule.method", "str", [](const RunConfig& c) { return to_string(c.method); },
                     [](RunConfig& c, const std::string&, const std::string& v) { c.method = parse_method(unquote(v)); }});
        f.push_back({"guidance.r", "i64", [](const RunConfig& c) { return std::to_string(c.guidance.r); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.guidance.r = parse_integer<int>(k, v);
                     }});
        f.push_back({"guidance.convention", "str", [](const RunConfig& c) { return to_string(c.guidance.convention); },
                     [](RunConfig& c, const std::string&, const std::string& v) {
                         c.guidance.convention = parse_convention(unquote(v));
                     }});
        f.push_back(double_field("precondition.sigma_data", &RunConfig::sigma_data));
        f.push_back(string_field("denoiser", &RunConfig::denoiser));
        f.push_back({"seed", "u64", [](const RunConfig& c) { return std::to_string(c.seed); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.seed = parse_integer<std::uint64_t>(k, v);
                     }});
        f.push_back(int_field("workers", &RunConfig::workers));
        f.push_back(string_field("output", &RunConfig::output));
        f.push_back({"precision", "str", [](const RunConfig& c) { return to_string(c.precision); },
                     [](RunConfig& c, const std::string&, const std::string& v) {
                         c.precision = parse_precision(unquote(v));
                     }});
        f.push_back(int_field("storage.tile_size", &RunConfig::tile_size));
        f.push_back(int_field("storage.spill_extent", &RunConfig::spill_extent));
        f.push_back(string_field("storage.scratch_dir", &RunConfig::scratch_dir));
        f.push_back({"storage.raw_dumps", "bool", [](const RunConfig& c) { return std::string(c.raw_dumps ? "true" : "false"); },
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.raw_dumps = parse_bool(k, v); }});
        return f;
    }();
    return table;
}

const Field& field_for(const std::string& key) {
    for (const auto& f : fields()) {
        if (key == f.key) return f;
    }
    throw InvalidParameter("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(SolverMethod m) { return m == SolverMethod::Heun ? "heun" : "euler"; }
std::string to_string(GuidanceConvention c) { return c == GuidanceConvention::Alg1 ? "alg1" : "inverted"; }
std::string to_string(SamplePrecision p) { return p == SamplePrecision::Single ? "single" : "double"; }

SolverMethod parse_method(const std::string& s) {
    if (s == "heun") return SolverMethod::Heun;
    if (s == "euler") return SolverMethod::Euler;
    throw InvalidParameter("solver method must be heun or euler, got '" + s + "'");
}

GuidanceConvention parse_convention(const std::string& s) {
    if (s == "alg1") return GuidanceConvention::Alg1;
    if (s == "inverted") return GuidanceConvention::Inverted;
    throw InvalidParameter("guidance convention must be alg1 or inverted, got '" + s + "'");
}

SamplePrecision parse_precision(const std::string& s) {
    if (s == "single") return SamplePrecision::Single;
    if (s == "double") return SamplePrecision::Double;
    throw InvalidParameter("precision must be single or double, got '" + s + "'");
}

void validate(const RunConfig& cfg) {
    validate(cfg.plan);
    (void)build_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);
    validate(cfg.guidance, cfg.steps);
    if (!(cfg.sigma_data > 0.0)) throw InvalidParameter("sigma_data must be positive");
    if (cfg.workers < 1) throw InvalidParameter("worker count must be at least 1");
    if (cfg.tile_size < 0) throw InvalidParameter("tile size must be non-negative");
    if (cfg.spill_extent < 1) throw InvalidParameter("spill extent must be positive");
    if (cfg.denoiser.empty()) throw InvalidParameter("denoiser reference must not be empty");
}

std::string serialize(const RunConfig& cfg, const std::string& prefix) {
    std::string out;
    for (const auto& f : fields()) out += prefix + f.key + ":" + f.type + " = " + f.get(cfg) + "\n";
    return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    field_for(key).set(cfg, key, trim(value));
}

RunConfig parse_config(const std::string& text, RunConfig base, const std::string& prefix) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Comments only start outside a quoted string.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidParameter("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        std::string type;
        if (const auto colon = key.find(':'); colon != std::string::npos) {
            type = trim(std::string_view(key).substr(colon + 1));
            key = trim(std::string_view(key).substr(0, colon));
        }
        if (!prefix.empty()) {
            if (key.rfind(prefix, 0) != 0) continue;
            key = key.substr(prefix.size());
        }
        const Field& f = field_for(key);
        if (!type.empty() && type != f.type) {
            throw InvalidParameter("config key '" + key + "' has type " + f.type + ", annotated as " + type);
        }
        f.set(base, key, value);
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

std::string env_name(const std::string& key) {
    std::string out = "TILEDIFF_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

void apply_env(RunConfig& cfg, const EnvLookup& lookup) {
    for (const auto& f : fields()) {
        const std::string name = env_name(f.key);
        std::optional<std::string> value;
        if (lookup) {
            value = lookup(name);
        } else if (const char* v = std::getenv(name.c_str())) {
            value = v;
        }
        if (value) f.set(cfg, f.key, trim(*value));
    }
}

PyramidSettings to_settings(const RunConfig& cfg) {
    validate(cfg);
    PyramidSettings s;
    s.plan = cfg.plan;
    s.schedule = build_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);
    s.guidance = cfg.guidance;
    s.method = cfg.method;
    s.workers = cfg.workers;
    s.single_precision = cfg.precision == SamplePrecision::Single;
    s.storage.spill_extent = cfg.spill_extent;
    if (!cfg.scratch_dir.empty()) s.storage.scratch_dir = cfg.scratch_dir;
    return s;
}

}  // namespace tilediff
