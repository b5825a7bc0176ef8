#include "tilediff/pyramid_io.hpp"

#include "tilediff/error.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace tilediff {

namespace fs = std::filesystem;

namespace {

constexpr char kRawMagic[8] = {'T', 'I', 'L', 'E', 'D', 'I', 'F', 'F'};
constexpr std::uint32_t kRawVersion = 1;

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <class T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return bytes;
}

void write_text(const fs::path& path, const std::string& text) {
    // Write beside the target and rename so readers never see a torn file.
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string level_dir_name(int level) { return "level_" + std::to_string(level); }

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

std::string unquote(const std::string& s) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') return s;
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (s[i] == '\\' && i + 2 < s.size()) {
            ++i;
            out += s[i] == 'n' ? '\n' : s[i];
            continue;
        }
        out += s[i];
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------------

void write_raw(const fs::path& path, const ImagePlane& img, bool as_float) {
    std::vector<unsigned char> out;
    out.reserve(40 + img.size() * (as_float ? 4 : 8));
    out.insert(out.end(), std::begin(kRawMagic), std::end(kRawMagic));
    put_le<std::uint32_t>(out, kRawVersion);
    put_le<std::uint32_t>(out, as_float ? 4u : 8u);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.channels()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.height()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.width()));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(img.resolution()));
    for (double v : img.samples()) {
        if (as_float) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write raw dump " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for raw dump " + path.string());
}

ImagePlane read_raw(const fs::path& path, const StorageOptions& storage) {
    const auto bytes = read_bytes(path);
    constexpr std::size_t header = 8 + 5 * 4 + 8;
    if (bytes.size() < header || std::memcmp(bytes.data(), kRawMagic, 8) != 0) {
        throw IoError(path.string() + " is not a raw sample dump");
    }
    const unsigned char* p = bytes.data() + 8;
    const auto version = get_le<std::uint32_t>(p);
    const auto width_bytes = get_le<std::uint32_t>(p + 4);
    const auto channels = get_le<std::uint32_t>(p + 8);
    const auto height = get_le<std::uint32_t>(p + 12);
    const auto width = get_le<std::uint32_t>(p + 16);
    const double resolution = std::bit_cast<double>(get_le<std::uint64_t>(p + 20));
    if (version != kRawVersion) throw IoError(path.string() + ": unsupported raw dump version");
    if (width_bytes != 4 && width_bytes != 8) throw IoError(path.string() + ": unsupported sample width");
    const std::size_t count = std::size_t{channels} * height * width;
    if (bytes.size() != header + count * width_bytes) throw IoError(path.string() + ": truncated raw dump");

    ImagePlane img(static_cast<int>(channels), height, width, resolution, storage);
    auto dst = img.samples();
    const unsigned char* s = bytes.data() + header;
    for (std::size_t i = 0; i < count; ++i) {
        dst[i] = width_bytes == 8 ? std::bit_cast<double>(get_le<std::uint64_t>(s + 8 * i))
                                  : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(s + 4 * i)));
    }
    return img;
}

// ---------------------------------------------------------------------------

std::uint8_t quantize(double v) noexcept {
    if (std::isnan(v)) return 0;
    const double scaled = std::clamp((v + 1.0) * 0.5, 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(std::lround(scaled));
}

double dequantize(std::uint8_t q) noexcept { return static_cast<double>(q) / 255.0 * 2.0 - 1.0; }

void write_png(const fs::path& path, const ImagePlane& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw InvalidParameter("PNG export needs 1 or 3 channels, got " + std::to_string(img.channels()));
    }
    const long h = img.height();
    const long w = img.width();
    std::vector<unsigned char> rgb(static_cast<std::size_t>(h * w * 3));
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int src = img.channels() == 1 ? 0 : c;
                rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] = quantize(img.at(src, y, x));
            }
        }
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot write PNG " + path.string() + ": " + msg);
    }
}

ImagePlane read_png(const fs::path& path, int channels, double resolution) {
    if (channels != 1 && channels != 3) throw InvalidParameter("PNG import needs 1 or 3 channels");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    const long h = image.height;
    const long w = image.width;
    ImagePlane img(channels, h, w, resolution);
    for (int c = 0; c < channels; ++c)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) img.at(c, y, x) = dequantize(rgb[static_cast<std::size_t>((y * w + x) * 3 + c)]);
    return img;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) {
        throw IoError("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

// ---------------------------------------------------------------------------

std::string TileRecord::file(int level) const {
    return level_dir_name(level) + "/tile_" + std::to_string(x) + "_" + std::to_string(y) + ".png";
}

std::string level_checksum(const std::vector<TileRecord>& tiles) {
    std::string joined;
    for (const auto& t : tiles) joined += t.sha256;
    return sha256_hex({reinterpret_cast<const unsigned char*>(joined.data()), joined.size()});
}

std::string PyramidManifest::serialize() const {
    std::ostringstream os;
    os << "manifest.format:str = " << quote(format) << "\n";
    os << "manifest.version:i64 = " << version << "\n";
    os << "manifest.software:str = " << quote(software) << "\n";
    os << "manifest.status:str = " << quote(complete ? "complete" : "incomplete") << "\n";
    os << "manifest.error:str = " << quote(error) << "\n";
    os << "run.seed:u64 = " << seed << "\n";
    os << "run.s0:f64 = " << format_double(s0) << "\n";
    os << "run.levels:i64 = " << levels.size() << "\n";
    os << tilediff::serialize(config, "config.");
    for (const auto& l : levels) {
        const std::string p = "level." + std::to_string(l.level) + ".";
        os << p << "height:i64 = " << l.height << "\n";
        os << p << "width:i64 = " << l.width << "\n";
        os << p << "resolution:f64 = " << format_double(l.resolution) << "\n";
        os << p << "tile_size:i64 = " << l.tile_size << "\n";
        os << p << "tiles_x:i64 = " << l.tiles_x << "\n";
        os << p << "tiles_y:i64 = " << l.tiles_y << "\n";
        os << p << "tile_count:i64 = " << l.tile_count() << "\n";
        for (const auto& t : l.tiles) {
            os << p << "tile." << t.x << "." << t.y << ".sha256:str = " << quote(t.sha256) << "\n";
        }
        os << p << "raw:str = " << quote(l.raw_file) << "\n";
        os << p << "raw_sha256:str = " << quote(l.raw_sha256) << "\n";
        os << p << "checksum:str = " << quote(l.checksum) << "\n";
        os << p << "seconds:f64 = " << format_double(l.seconds) << "\n";
    }
    return os.str();
}

PyramidManifest PyramidManifest::parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::string config_text;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("manifest line without '=': " + line);
        std::string key = trim(line.substr(0, eq));
        if (key.rfind("config.", 0) == 0) {
            config_text += line + "\n";
            continue;
        }
        if (const auto colon = key.find(':'); colon != std::string::npos) key = key.substr(0, colon);
        kv[key] = unquote(trim(line.substr(eq + 1)));
    }

    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError("manifest is missing '" + key + "'");
        return it->second;
    };
    auto get_long = [&](const std::string& key) {
        try {
            return std::stol(get(key));
        } catch (const std::logic_error&) {
            throw IoError("manifest value for '" + key + "' is not an integer");
        }
    };
    auto get_double = [&](const std::string& key) {
        try {
            return std::stod(get(key));
        } catch (const std::logic_error&) {
            throw IoError("manifest value for '" + key + "' is not a number");
        }
    };

    PyramidManifest m;
    m.format = get("manifest.format");
    m.version = static_cast<int>(get_long("manifest.version"));
    m.software = get("manifest.software");
    const std::string& status = get("manifest.status");
    if (status != "complete" && status != "incomplete") throw IoError("manifest status '" + status + "' is unknown");
    m.complete = status == "complete";
    m.error = get("manifest.error");
    try {
        m.seed = std::stoull(get("run.seed"));
    } catch (const std::logic_error&) {
        throw IoError("manifest seed is not an unsigned integer");
    }
    m.s0 = get_double("run.s0");
    try {
        m.config = parse_config(config_text, {}, "config.");
    } catch (const InvalidParameter& e) {
        throw IoError(std::string("manifest config echo: ") + e.what());
    }
    const long count = get_long("run.levels");
    for (long i = 0; i < count; ++i) {
        const std::string p = "level." + std::to_string(i) + ".";
        LevelRecord l;
        l.level = static_cast<int>(i);
        l.height = get_long(p + "height");
        l.width = get_long(p + "width");
        l.resolution = get_double(p + "resolution");
        l.tile_size = get_long(p + "tile_size");
        l.tiles_x = get_long(p + "tiles_x");
        l.tiles_y = get_long(p + "tiles_y");
        if (get_long(p + "tile_count") != l.tile_count()) throw IoError(p + "tile_count disagrees with the tile grid");
        for (long ty = 0; ty < l.tiles_y; ++ty) {
            for (long tx = 0; tx < l.tiles_x; ++tx) {
                l.tiles.push_back({tx, ty, get(p + "tile." + std::to_string(tx) + "." + std::to_string(ty) + ".sha256")});
            }
        }
        l.raw_file = get(p + "raw");
        l.raw_sha256 = get(p + "raw_sha256");
        l.checksum = get(p + "checksum");
        l.seconds = get_double(p + "seconds");
        m.levels.push_back(std::move(l));
    }
    return m;
}

// ---------------------------------------------------------------------------

PyramidWriter::PyramidWriter(fs::path dir, RunConfig config, std::uint64_t seed) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    manifest_.config = std::move(config);
    manifest_.seed = seed;
    flush();
}

const LevelRecord& PyramidWriter::write_level(int level, const ImagePlane& img, double seconds) {
    if (level != static_cast<int>(manifest_.levels.size())) {
        throw ContractViolation("pyramid levels must be written in order starting at 0");
    }
    if (img.channels() != 1 && img.channels() != 3) {
        throw InvalidParameter("pyramid levels need 1 or 3 channels for PNG tiles");
    }
    const fs::path ldir = dir_ / level_dir_name(level);
    std::error_code ec;
    fs::create_directories(ldir, ec);
    if (ec) throw IoError("cannot create " + ldir.string() + ": " + ec.message());

    LevelRecord rec;
    rec.level = level;
    rec.height = img.height();
    rec.width = img.width();
    rec.resolution = img.resolution();
    rec.tile_size = manifest_.config.effective_tile_size();
    rec.tiles_x = (rec.width + rec.tile_size - 1) / rec.tile_size;
    rec.tiles_y = (rec.height + rec.tile_size - 1) / rec.tile_size;
    rec.seconds = seconds;
    rec.tiles.resize(static_cast<std::size_t>(rec.tile_count()));

    const long total = rec.tile_count();
    const long T = rec.tile_size;
    long failed_index = std::numeric_limits<long>::max();
    std::exception_ptr failure;
    // Tiles are write-disjoint files.
#pragma omp parallel for num_threads(std::max(1, manifest_.config.workers)) schedule(dynamic, 1)
    for (long i = 0; i < total; ++i) {
        try {
            TileRecord& t = rec.tiles[static_cast<std::size_t>(i)];
            t.x = i % rec.tiles_x;
            t.y = i / rec.tiles_x;
            const long y0 = t.y * T, x0 = t.x * T;
            const long th = std::min(T, rec.height - y0), tw = std::min(T, rec.width - x0);
            ImagePlane tile(img.channels(), th, tw, img.resolution());
            for (int c = 0; c < img.channels(); ++c)
                for (long y = 0; y < th; ++y) std::copy_n(img.row(c, y0 + y) + x0, tw, tile.row(c, y));
            const fs::path path = dir_ / t.file(level);
            write_png(path, tile);
            t.sha256 = sha256_file(path);
        } catch (...) {
#pragma omp critical(tilediff_tile_failure)
            {
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
    rec.checksum = level_checksum(rec.tiles);

    if (manifest_.config.raw_dumps) {
        rec.raw_file = level_dir_name(level) + "/level.raw";
        write_raw(dir_ / rec.raw_file, img, manifest_.config.precision == SamplePrecision::Single);
        rec.raw_sha256 = sha256_file(dir_ / rec.raw_file);
    }
    if (level == 0) manifest_.s0 = img.resolution();
    manifest_.levels.push_back(std::move(rec));
    flush();
    return manifest_.levels.back();
}

void PyramidWriter::finish() {
    manifest_.complete = true;
    manifest_.error.clear();
    flush();
}

void PyramidWriter::fail(const std::string& message) {
    manifest_.complete = false;
    manifest_.error = message;
    flush();
}

void PyramidWriter::flush() const { write_text(dir_ / "manifest", manifest_.serialize()); }

PyramidManifest write_pyramid(const PyramidRun& run, const fs::path& dir, const RunConfig& config) {
    PyramidWriter writer(dir, config, run.seed);
    for (std::size_t l = 0; l < run.levels.size(); ++l) {
        const double seconds = l < run.stage_seconds.size() ? run.stage_seconds[l] : 0.0;
        writer.write_level(static_cast<int>(l), run.levels[l], seconds);
    }
    writer.finish();
    return writer.manifest();
}

PyramidManifest read_manifest(const fs::path& dir) {
    const auto bytes = read_bytes(dir / "manifest");
    return PyramidManifest::parse(std::string(bytes.begin(), bytes.end()));
}

ImagePlane read_level(const fs::path& dir, int level) {
    const PyramidManifest m = read_manifest(dir);
    if (level < 0 || level >= static_cast<int>(m.levels.size())) {
        throw IoError("level " + std::to_string(level) + " is not recorded in " + (dir / "manifest").string());
    }
    const LevelRecord& rec = m.levels[static_cast<std::size_t>(level)];
    if (!rec.raw_file.empty()) return read_raw(dir / rec.raw_file);

    const int channels = m.config.plan.channels == 1 ? 1 : 3;
    ImagePlane img(channels, rec.height, rec.width, rec.resolution);
    for (const auto& t : rec.tiles) {
        const ImagePlane tile = read_png(dir / t.file(level), channels);
        const long y0 = t.y * rec.tile_size, x0 = t.x * rec.tile_size;
        if (y0 + tile.height() > rec.height || x0 + tile.width() > rec.width) {
            throw IoError(t.file(level) + " extends past the level extent");
        }
        for (int c = 0; c < channels; ++c)
            for (long y = 0; y < tile.height(); ++y) std::copy_n(tile.row(c, y), tile.width(), img.row(c, y0 + y) + x0);
    }
    return img;
}

std::vector<std::string> verify_pyramid(const fs::path& dir) {
    std::vector<std::string> problems;
    PyramidManifest m;
    try {
        m = read_manifest(dir);
    } catch (const Error& e) {
        problems.emplace_back(std::string("manifest: ") + e.what());
        return problems;
    }
    if (m.format != kManifestFormat) problems.push_back("manifest: unknown format '" + m.format + "'");
    if (m.version != kManifestVersion) problems.push_back("manifest: unsupported version " + std::to_string(m.version));
    if (!m.complete) problems.push_back("manifest: run marked incomplete" + (m.error.empty() ? "" : " (" + m.error + ")"));
    if (m.levels.empty()) {
        problems.emplace_back("manifest: no levels recorded");
        return problems;
    }

    const StagePlan& plan = m.config.plan;
    const LevelRecord& base = m.levels.front();
    if (base.resolution != m.s0) problems.push_back("level_0: resolution differs from the recorded s0");
    long scale = 1;
    for (const auto& l : m.levels) {
        const std::string name = level_dir_name(l.level);
        if (l.level > 0) scale *= plan.factor;
        if (l.height != base.height * scale || l.width != base.width * scale) {
            problems.push_back(name + ": extent " + std::to_string(l.height) + "x" + std::to_string(l.width) +
                               " breaks the k^l extent chain");
        }
        if (l.resolution != plan.resolution_at(m.s0, l.level)) {
            problems.push_back(name + ": spatial resolution " + format_double(l.resolution) + " != s0/k^" +
                               std::to_string(l.level));
        }
        if (l.tile_size <= 0 || l.tiles_x != (l.width + l.tile_size - 1) / l.tile_size ||
            l.tiles_y != (l.height + l.tile_size - 1) / l.tile_size) {
            problems.push_back(name + ": tile grid does not cover the level extent");
        }
        for (const auto& t : l.tiles) {
            const fs::path path = dir / t.file(l.level);
            if (!fs::exists(path)) {
                problems.push_back(t.file(l.level) + ": missing");
                continue;
            }
            try {
                if (sha256_file(path) != t.sha256) problems.push_back(t.file(l.level) + ": checksum mismatch");
            } catch (const Error& e) {
                problems.push_back(t.file(l.level) + ": " + e.what());
            }
        }
        if (level_checksum(l.tiles) != l.checksum) problems.push_back(name + ": level checksum mismatch");
        if (!l.raw_file.empty()) {
            const fs::path path = dir / l.raw_file;
            if (!fs::exists(path)) {
                problems.push_back(l.raw_file + ": missing");
            } else if (sha256_file(path) != l.raw_sha256) {
                problems.push_back(l.raw_file + ": checksum mismatch");
            }
        }
    }
    return problems;
}

}  // namespace tilediff
