#include "tilediff/denoiser.hpp"

#include "tilediff/error.hpp"
#include "tilediff/pyramid_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tilediff {

namespace {

constexpr double kWeightTolerance = 1e-12;

std::size_t plane_size(const ImagePlane& x) { return static_cast<std::size_t>(x.height()) * x.width(); }

}  // namespace

GaussianMixtureOracle::GaussianMixtureOracle(std::vector<MixtureComponent> components, std::optional<MeanShape> shape)
    : components_(std::move(components)), shape_(shape) {
    if (components_.empty()) throw InvalidParameter("mixture needs at least one component");
    double total = 0.0;
    for (const auto& comp : components_) {
        if (!(comp.weight > 0.0 && comp.weight <= 1.0)) throw InvalidParameter("mixture weights must lie in (0, 1]");
        if (!(comp.stddev > 0.0) || !std::isfinite(comp.stddev)) {
            throw InvalidParameter("mixture stds must be positive");
        }
        if (comp.mean.empty()) throw InvalidParameter("mixture component has no mean");
        if (!std::all_of(comp.mean.begin(), comp.mean.end(), [](double v) { return std::isfinite(v); })) {
            throw InvalidParameter("mixture mean is not finite");
        }
        total += comp.weight;
    }
    if (std::abs(total - 1.0) > kWeightTolerance) throw InvalidParameter("mixture weights must sum to 1");

    for (const auto& comp : components_) {
        if (comp.mean.size() <= 1) continue;
        if (shape_ && comp.mean.size() == static_cast<std::size_t>(shape_->channels)) continue;
        if (shape_ && comp.mean.size() == static_cast<std::size_t>(shape_->channels) * shape_->height * shape_->width) {
            continue;
        }
        if (!shape_) continue;  // per-channel means without a declared shape; checked per call
        throw InvalidParameter("mixture mean length " + std::to_string(comp.mean.size()) +
                               " matches neither 1, the channel count, nor the declared shape");
    }
}

void GaussianMixtureOracle::check_compatible(const ImagePlane& x) const {
    for (const auto& comp : components_) {
        const std::size_t n = comp.mean.size();
        if (n == 1 || n == static_cast<std::size_t>(x.channels())) continue;
        if (n == x.size() && (!shape_ || (shape_->channels == x.channels() && shape_->height == x.height() &&
                                          shape_->width == x.width()))) {
            continue;
        }
        throw ShapeMismatch("image " + describe_shape(x) + " does not match mixture mean of length " +
                            std::to_string(n));
    }
}

double GaussianMixtureOracle::mean_at(std::size_t k, const ImagePlane& like, int c, long y, long x) const {
    const auto& m = components_[k].mean;
    if (m.size() == 1) return m[0];
    if (m.size() == static_cast<std::size_t>(like.channels())) return m[static_cast<std::size_t>(c)];
    return m[(static_cast<std::size_t>(c) * like.height() + y) * like.width() + x];
}

ImagePlane GaussianMixtureOracle::operator()(const ImagePlane& x, double sigma, double /*s*/) const {
    check_compatible(x);
    if (!x.all_finite()) throw DomainError("gaussian mixture denoiser: non-finite input");
    if (!(sigma >= 0.0)) throw DomainError("gaussian mixture denoiser: negative noise level");
    if (sigma == 0.0) return x;

    const std::size_t K = components_.size();
    const std::size_t n = x.size();
    const std::size_t per_channel = plane_size(x);
    const double sigma2 = sigma * sigma;
    auto xs = x.samples();

    auto mean_of = [&](std::size_t k, std::size_t j) {
        const auto& m = components_[k].mean;
        if (m.size() == 1) return m[0];
        if (m.size() == static_cast<std::size_t>(x.channels()) && m.size() != n) return m[j / per_channel];
        return m[j];
    };

    std::vector<double> log_resp(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double var = components_[k].stddev * components_[k].stddev + sigma2;
        double d2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xs[j] - mean_of(k, j);
            d2 += d * d;
        }
        log_resp[k] = std::log(components_[k].weight) - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * var) -
                      0.5 * d2 / var;
    }
    const double peak = *std::max_element(log_resp.begin(), log_resp.end());
    double norm = 0.0;
    for (double& v : log_resp) {
        v = std::exp(v - peak);
        norm += v;
    }
    for (double& v : log_resp) v /= norm;

    ImagePlane out(x.channels(), x.height(), x.width(), x.resolution());
    auto os = out.samples();
    for (std::size_t k = 0; k < K; ++k) {
        const double gamma = log_resp[k];
        if (gamma == 0.0) continue;
        const double s2 = components_[k].stddev * components_[k].stddev;
        const double inv = 1.0 / (s2 + sigma2);
        for (std::size_t j = 0; j < n; ++j) {
            os[j] += gamma * (s2 * xs[j] + sigma2 * mean_of(k, j)) * inv;
        }
    }
    return out;
}

ImagePlane GaussianMixtureOracle::mixture_mean(const ImagePlane& like) const {
    check_compatible(like);
    ImagePlane out(like.channels(), like.height(), like.width(), like.resolution());
    for (std::size_t k = 0; k < components_.size(); ++k) {
        for (int c = 0; c < like.channels(); ++c)
            for (long y = 0; y < like.height(); ++y)
                for (long xx = 0; xx < like.width(); ++xx)
                    out.at(c, y, xx) += components_[k].weight * mean_at(k, like, c, y, xx);
    }
    return out;
}

ImagePlane gmm_denoise(const GaussianMixtureOracle& oracle, const ImagePlane& x, double sigma) {
    return oracle(x, sigma, 0.0);
}

ResolutionSwitchedOracle::ResolutionSwitchedOracle(std::vector<Band> bands) : bands_(std::move(bands)) {
    if (bands_.empty()) throw InvalidParameter("resolution-switched oracle needs at least one band");
    std::sort(bands_.begin(), bands_.end(), [](const Band& a, const Band& b) { return a.lower < b.lower; });
}

const Denoiser& ResolutionSwitchedOracle::band_for(double s) const {
    const Band* chosen = &bands_.front();
    for (const auto& band : bands_) {
        if (s >= band.lower) chosen = &band;
    }
    return *chosen->oracle;
}

ImagePlane ResolutionSwitchedOracle::operator()(const ImagePlane& x, double sigma, double s) const {
    return band_for(s)(x, sigma, s);
}

PixelMixtureOracle::PixelMixtureOracle(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
    (void)GaussianMixtureOracle(components_);  // weight, std and mean checks
}

ImagePlane PixelMixtureOracle::operator()(const ImagePlane& x, double sigma, double /*s*/) const {
    const int C = x.channels();
    for (const auto& comp : components_) {
        if (comp.mean.size() != 1 && comp.mean.size() != static_cast<std::size_t>(C)) {
            throw ShapeMismatch("pixel mixture colour of length " + std::to_string(comp.mean.size()) +
                                " does not fit " + describe_shape(x));
        }
    }
    if (!x.all_finite()) throw DomainError("pixel mixture denoiser: non-finite input");
    if (!(sigma >= 0.0)) throw DomainError("pixel mixture denoiser: negative noise level");
    if (sigma == 0.0) return x;

    const std::size_t K = components_.size();
    const double sigma2 = sigma * sigma;
    std::vector<double> log_norm(K), inv_var(K), shrink(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double s2 = components_[k].stddev * components_[k].stddev;
        const double var = s2 + sigma2;
        log_norm[k] = std::log(components_[k].weight) - 0.5 * C * std::log(2.0 * std::numbers::pi * var);
        inv_var[k] = 1.0 / var;
        shrink[k] = s2 / var;
    }
    auto mean_of = [&](std::size_t k, int c) {
        const auto& m = components_[k].mean;
        return m.size() == 1 ? m[0] : m[static_cast<std::size_t>(c)];
    };

    ImagePlane out(C, x.height(), x.width(), x.resolution());
    std::vector<double> resp(K);
    for (long y = 0; y < x.height(); ++y) {
        for (long xx = 0; xx < x.width(); ++xx) {
            for (std::size_t k = 0; k < K; ++k) {
                double d2 = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double d = x.at(c, y, xx) - mean_of(k, c);
                    d2 += d * d;
                }
                resp[k] = log_norm[k] - 0.5 * d2 * inv_var[k];
            }
            const double peak = *std::max_element(resp.begin(), resp.end());
            double norm = 0.0;
            for (double& v : resp) {
                v = std::exp(v - peak);
                norm += v;
            }
            for (int c = 0; c < C; ++c) {
                const double v = x.at(c, y, xx);
                double acc = 0.0;
                for (std::size_t k = 0; k < K; ++k) acc += resp[k] * (shrink[k] * v + (1.0 - shrink[k]) * mean_of(k, c));
                out.at(c, y, xx) = acc / norm;
            }
        }
    }
    return out;
}

std::vector<double> sinusoidal_encode(double value, int dim, double max_period) {
    if (dim <= 0 || dim % 2 != 0) throw InvalidParameter("sinusoidal encoding needs a positive even dimension");
    if (!(max_period > 0.0)) throw InvalidParameter("sinusoidal encoding needs max_period > 0");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int j = 0; j < half; ++j) {
        const double exponent = half > 1 ? static_cast<double>(j) / (half - 1) : 0.0;
        const double freq = std::pow(max_period, -exponent);
        out[2 * static_cast<std::size_t>(j)] = std::sin(value * freq);
        out[2 * static_cast<std::size_t>(j) + 1] = std::cos(value * freq);
    }
    return out;
}

namespace {

using nlohmann::json;

std::vector<MixtureComponent> components_from_json(const json& j, const std::filesystem::path& base_dir,
                                                   std::optional<MeanShape>& shape) {
    if (j.contains("shape")) {
        const auto& sh = j.at("shape");
        if (!sh.is_array() || sh.size() != 3) throw InvalidParameter("oracle shape must be [channels, height, width]");
        shape = MeanShape{sh[0].get<int>(), sh[1].get<long>(), sh[2].get<long>()};
    }
    std::vector<MixtureComponent> comps;
    for (const auto& c : j.at("components")) {
        MixtureComponent comp;
        comp.weight = c.at("weight").get<double>();
        comp.stddev = c.at("std").get<double>();
        if (c.contains("mean_file")) {
            auto p = std::filesystem::path(c.at("mean_file").get<std::string>());
            if (p.is_relative()) p = base_dir / p;
            const ImagePlane img = read_raw(p);
            comp.mean.assign(img.samples().begin(), img.samples().end());
            if (!shape) shape = MeanShape{img.channels(), img.height(), img.width()};
        } else {
            const auto& m = c.at("mean");
            if (m.is_number()) {
                comp.mean = {m.get<double>()};
            } else {
                comp.mean = m.get<std::vector<double>>();
            }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

std::shared_ptr<const Denoiser> mixture_from_json(const json& j, const std::filesystem::path& base_dir) {
    std::optional<MeanShape> shape;
    auto comps = components_from_json(j, base_dir, shape);
    if (j.value("pixelwise", false)) return std::make_shared<PixelMixtureOracle>(std::move(comps));
    return std::make_shared<GaussianMixtureOracle>(std::move(comps), shape);
}

}  // namespace

std::unique_ptr<Denoiser> parse_oracle(const std::string& json_text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("oracle description is not valid JSON: ") + e.what());
    }
    try {
        if (j.contains("bands")) {
            std::vector<ResolutionSwitchedOracle::Band> bands;
            for (const auto& b : j.at("bands")) {
                bands.push_back({b.at("lower").get<double>(), mixture_from_json(b.at("mixture"), base_dir)});
            }
            return std::make_unique<ResolutionSwitchedOracle>(std::move(bands));
        }
        std::optional<MeanShape> shape;
        auto comps = components_from_json(j, base_dir, shape);
        if (j.value("pixelwise", false)) return std::make_unique<PixelMixtureOracle>(std::move(comps));
        return std::make_unique<GaussianMixtureOracle>(std::move(comps), shape);
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("malformed oracle description: ") + e.what());
    }
}

std::unique_ptr<Denoiser> load_oracle(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open oracle file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_oracle(ss.str(), path.parent_path());
}

namespace {

// Colours in the model's [-1, 1] range, RGB order.
constexpr double kBackground[3] = {0.86, 0.84, 0.88};
constexpr double kStroma[3] = {0.55, 0.05, 0.45};
constexpr double kNuclei[3] = {-0.15, -0.45, 0.35};

std::vector<double> colour(const double (&rgb)[3], int channels) {
    std::vector<double> v(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        v[static_cast<std::size_t>(c)] = channels == 3 ? rgb[c] : (rgb[0] + rgb[1] + rgb[2]) / 3.0;
    }
    return v;
}

std::vector<double> blob_layout(int channels, long size, double cy, double cx, double ry, double rx) {
    const auto bg = colour(kBackground, channels);
    const auto fg = colour(kStroma, channels);
    std::vector<double> m(static_cast<std::size_t>(channels) * size * size);
    for (int c = 0; c < channels; ++c)
        for (long y = 0; y < size; ++y)
            for (long x = 0; x < size; ++x) {
                const double dy = (static_cast<double>(y) + 0.5) / size - cy;
                const double dx = (static_cast<double>(x) + 0.5) / size - cx;
                const bool inside = (dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0;
                m[(static_cast<std::size_t>(c) * size + y) * size + x] = inside ? fg[c] : bg[c];
            }
    return m;
}

}  // namespace

std::unique_ptr<Denoiser> builtin_oracle(const std::string& name, int channels, long patch_size) {
    if (channels <= 0) throw InvalidParameter("builtin oracle needs a positive channel count");
    if (name == "gaussian") {
        return std::make_unique<GaussianMixtureOracle>(std::vector<MixtureComponent>{{1.0, {0.0}, 0.5}});
    }
    if (name == "bimodal") {
        return std::make_unique<GaussianMixtureOracle>(
            std::vector<MixtureComponent>{{0.5, {-0.5}, 0.1}, {0.5, {0.5}, 0.1}});
    }
    if (name == "texture") {
        std::vector<MixtureComponent> comps;
        constexpr int kLevels = 8;
        for (int j = 0; j < kLevels; ++j) {
            comps.push_back({1.0 / kLevels, {-0.7 + 1.4 * j / (kLevels - 1)}, 0.15});
        }
        // 1/8 is exact, so the weights sum to 1 exactly.
        return std::make_unique<GaussianMixtureOracle>(std::move(comps));
    }
    if (name == "tissue") {
        if (patch_size <= 0) throw InvalidParameter("tissue oracle needs the patch size");
        const MeanShape shape{channels, patch_size, patch_size};
        std::vector<MixtureComponent> overview = {
            {0.25, blob_layout(channels, patch_size, 0.5, 0.5, 0.32, 0.26), 0.05},
            {0.25, blob_layout(channels, patch_size, 0.42, 0.35, 0.22, 0.30), 0.05},
            {0.25, blob_layout(channels, patch_size, 0.6, 0.58, 0.28, 0.2), 0.05},
            {0.25, colour(kBackground, channels), 0.05},
        };
        const auto bg = colour(kBackground, channels);
        const auto stroma = colour(kStroma, channels);
        const auto nuclei = colour(kNuclei, channels);
        std::vector<double> mid(static_cast<std::size_t>(channels));
        for (int c = 0; c < channels; ++c) mid[c] = 0.5 * (stroma[c] + nuclei[c]);
        std::vector<MixtureComponent> detail = {
            {0.3, bg, 0.05},
            {0.35, stroma, 0.12},
            {0.2, mid, 0.12},
            {0.15, nuclei, 0.1},
        };
        std::vector<ResolutionSwitchedOracle::Band> bands;
        bands.push_back({0.0, std::make_shared<PixelMixtureOracle>(std::move(detail))});
        bands.push_back({75.0, std::make_shared<GaussianMixtureOracle>(std::move(overview), shape)});
        return std::make_unique<ResolutionSwitchedOracle>(std::move(bands));
    }
    throw InvalidParameter("unknown builtin oracle '" + name + "'");
}

std::unique_ptr<Denoiser> make_denoiser(const std::string& reference, int channels, long patch_size) {
    constexpr std::string_view prefix = "builtin:";
    if (reference.rfind(prefix, 0) == 0) {
        return builtin_oracle(reference.substr(prefix.size()), channels, patch_size);
    }
    return load_oracle(reference);
}

}  // namespace tilediff
