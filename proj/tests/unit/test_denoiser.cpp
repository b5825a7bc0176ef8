#include <doctest.h>

#include "tilediff/denoiser.hpp"
#include "tilediff/error.hpp"
#include "tilediff/pyramid_io.hpp"
#include "tilediff/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

using namespace tilediff;

namespace {

ImagePlane scalar(double v) { return ImagePlane(1, 1, 1, 0.0, v); }

// Posterior mean of a 1-D mixture by composite Simpson quadrature over the
// clean value, weighted by the Gaussian noise likelihood.
double quadrature_posterior_mean(const std::vector<MixtureComponent>& comps, double x, double sigma) {
    double lo = x - 12.0 * sigma, hi = x + 12.0 * sigma;
    for (const auto& c : comps) {
        lo = std::min(lo, c.mean[0] - 12.0 * c.stddev);
        hi = std::max(hi, c.mean[0] + 12.0 * c.stddev);
    }
    constexpr int n = 200000;
    const double h = (hi - lo) / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double z = lo + h * i;
        double prior = 0.0;
        for (const auto& c : comps) {
            const double d = (z - c.mean[0]) / c.stddev;
            prior += c.weight * std::exp(-0.5 * d * d) / c.stddev;
        }
        const double e = (x - z) / sigma;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double f = w * prior * std::exp(-0.5 * e * e);
        num += f * z;
        den += f;
    }
    return num / den;
}

double log_density(const std::vector<MixtureComponent>& comps, double x, double sigma) {
    double p = 0.0;
    for (const auto& c : comps) {
        const double var = c.stddev * c.stddev + sigma * sigma;
        p += c.weight * std::exp(-0.5 * (x - c.mean[0]) * (x - c.mean[0]) / var) / std::sqrt(2.0 * std::numbers::pi * var);
    }
    return std::log(p);
}

std::vector<MixtureComponent> random_mixture(RngStream& rng) {
    const int K = 1 + static_cast<int>(rng.next_below(4));
    std::vector<double> w(static_cast<std::size_t>(K));
    double total = 0.0;
    for (double& v : w) total += (v = 0.2 + rng.next_uniform());
    std::vector<MixtureComponent> comps;
    double used = 0.0;
    for (int k = 0; k < K; ++k) {
        const double weight = k + 1 == K ? 1.0 - used : w[static_cast<std::size_t>(k)] / total;
        used += weight;
        comps.push_back({weight, {-1.5 + 3.0 * rng.next_uniform()}, 0.05 + 0.6 * rng.next_uniform()});
    }
    return comps;
}

}  // namespace

TEST_CASE("single component posterior mean") {
    const GaussianMixtureOracle o({{1.0, {0.3}, 0.5}});
    for (double x : {-2.0, 0.0, 0.7, 5.0}) {
        for (double sigma : {0.01, 0.5, 3.0}) {
            const double expected = (0.25 * x + sigma * sigma * 0.3) / (0.25 + sigma * sigma);
            CHECK(o(scalar(x), sigma, 1.0).at(0, 0, 0) == doctest::Approx(expected).epsilon(1e-14));
        }
    }
}

TEST_CASE("zero noise is the identity") {
    const auto o = builtin_oracle("texture", 1, 4);
    ImagePlane x(1, 4, 4);
    for (std::size_t j = 0; j < x.size(); ++j) x.samples()[j] = std::sin(static_cast<double>(j));
    CHECK((*o)(x, 0.0, 1.0) == x);
}

TEST_CASE("symmetric pair and a quadrature reference") {
    const std::vector<MixtureComponent> comps{{0.5, {-1.0}, 0.1}, {0.5, {1.0}, 0.1}};
    const GaussianMixtureOracle o(comps);
    CHECK(std::abs(o(scalar(0.0), 1.0, 1.0).at(0, 0, 0)) < 1e-15);
    const double closed = o(scalar(0.5), 1.0, 1.0).at(0, 0, 0);
    CHECK(closed == doctest::Approx(0.458628669732703718).epsilon(1e-12));
    CHECK(std::abs(closed - quadrature_posterior_mean(comps, 0.5, 1.0)) <= 1e-6);
}

TEST_CASE("random mixtures agree with quadrature") {
    RngStream rng(StreamKey{21, 0, 0, 0, StreamPurpose::Test});
    for (int trial = 0; trial < 40; ++trial) {
        const auto comps = random_mixture(rng);
        const GaussianMixtureOracle o(comps);
        const double x = -3.0 + 6.0 * rng.next_uniform();
        const double sigma = std::exp(-3.0 + 5.0 * rng.next_uniform());
        CHECK(std::abs(o(scalar(x), sigma, 1.0).at(0, 0, 0) - quadrature_posterior_mean(comps, x, sigma)) <= 1e-6);
    }
}

TEST_CASE("large noise returns the mixture mean") {
    const GaussianMixtureOracle o({{0.2, {-0.9}, 0.1}, {0.5, {0.4}, 0.3}, {0.3, {0.8}, 0.05}});
    const double mean = 0.2 * -0.9 + 0.5 * 0.4 + 0.3 * 0.8;
    for (double x : {-3.0, 0.0, 2.0}) CHECK(std::abs(o(scalar(x), 1e6, 1.0).at(0, 0, 0) - mean) <= 1e-3);
    CHECK(o.mixture_mean(scalar(0.0)).at(0, 0, 0) == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("denoiser residual is the score of the noisy density") {
    RngStream rng(StreamKey{22, 0, 0, 0, StreamPurpose::Test});
    for (int trial = 0; trial < 40; ++trial) {
        const auto comps = random_mixture(rng);
        const GaussianMixtureOracle o(comps);
        const double x = -2.0 + 4.0 * rng.next_uniform();
        const double sigma = std::exp(-2.0 + 3.0 * rng.next_uniform());
        const double score = (o(scalar(x), sigma, 1.0).at(0, 0, 0) - x) / (sigma * sigma);
        const double h = 1e-5;
        const double fd = (log_density(comps, x + h, sigma) - log_density(comps, x - h, sigma)) / (2 * h);
        CHECK(std::abs(score - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("far-out inputs stay finite") {
    const GaussianMixtureOracle o({{0.5, {-1.0}, 0.01}, {0.5, {1.0}, 0.01}});
    ImagePlane x(1, 8, 8, 0.0, 1e4);
    const ImagePlane d = o(x, 0.002, 1.0);
    CHECK(d.all_finite());
    CHECK(o(x, 80.0, 1.0).all_finite());
}

TEST_CASE("contract violations") {
    CHECK_THROWS_AS(GaussianMixtureOracle({{0.5, {0.0}, 0.1}}), InvalidParameter);
    CHECK_THROWS_AS(GaussianMixtureOracle({{1.0, {0.0}, 0.0}}), InvalidParameter);
    CHECK_THROWS_AS(GaussianMixtureOracle({{1.0, {0.0}, -1.0}}), InvalidParameter);
    CHECK_THROWS_AS(GaussianMixtureOracle({}), InvalidParameter);

    const GaussianMixtureOracle full({{1.0, std::vector<double>(16, 0.1), 0.2}}, MeanShape{1, 4, 4});
    CHECK_THROWS_AS(full(ImagePlane(1, 2, 2), 1.0, 1.0), ShapeMismatch);
    CHECK(full(ImagePlane(1, 4, 4), 1.0, 1.0).same_shape(ImagePlane(1, 4, 4)));

    const GaussianMixtureOracle o({{1.0, {0.0}, 0.5}});
    ImagePlane bad(1, 1, 2);
    bad.at(0, 0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(o(bad, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(o(ImagePlane(1, 1, 1), -1.0, 1.0), DomainError);
}

TEST_CASE("per-channel means broadcast over pixels") {
    const GaussianMixtureOracle o({{1.0, {0.1, -0.2, 0.3}, 0.5}});
    ImagePlane x(3, 2, 2);
    const ImagePlane d = o(x, 1.0, 1.0);
    const double shrink = 1.0 / 1.25;
    CHECK(d.at(0, 1, 1) == doctest::Approx(0.1 * shrink).epsilon(1e-14));
    CHECK(d.at(1, 0, 0) == doctest::Approx(-0.2 * shrink).epsilon(1e-14));
    CHECK(d.at(2, 0, 1) == doctest::Approx(0.3 * shrink).epsilon(1e-14));
}

TEST_CASE("pixel mixture equals the whole-image mixture on each pixel") {
    const std::vector<MixtureComponent> comps{{0.3, {0.8, 0.8, 0.9}, 0.05}, {0.7, {0.5, 0.0, 0.4}, 0.12}};
    const PixelMixtureOracle pixelwise(comps);
    const GaussianMixtureOracle single(comps);
    RngStream rng(StreamKey{23, 0, 0, 0, StreamPurpose::Test});
    ImagePlane x(3, 3, 5);
    for (double& v : x.samples()) v = rng.next_normal();
    for (double sigma : {0.05, 0.4, 3.0}) {
        const ImagePlane d = pixelwise(x, sigma, 1.0);
        for (long y = 0; y < 3; ++y) {
            for (long xx = 0; xx < 5; ++xx) {
                ImagePlane px(3, 1, 1);
                for (int c = 0; c < 3; ++c) px.at(c, 0, 0) = x.at(c, y, xx);
                const ImagePlane ref = single(px, sigma, 1.0);
                for (int c = 0; c < 3; ++c) CHECK(d.at(c, y, xx) == doctest::Approx(ref.at(c, 0, 0)).epsilon(1e-13));
            }
        }
    }
    CHECK_THROWS_AS(pixelwise(ImagePlane(2, 1, 1), 1.0, 1.0), ShapeMismatch);
}

TEST_CASE("resolution bands select by spatial resolution") {
    std::vector<ResolutionSwitchedOracle::Band> bands;
    bands.push_back({10.0, std::make_shared<GaussianMixtureOracle>(std::vector<MixtureComponent>{{1.0, {1.0}, 0.1}})});
    bands.push_back({0.0, std::make_shared<GaussianMixtureOracle>(std::vector<MixtureComponent>{{1.0, {-1.0}, 0.1}})});
    const ResolutionSwitchedOracle o(std::move(bands));
    CHECK(o(scalar(0.0), 1e6, 0.5).at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(o(scalar(0.0), 1e6, 10.0).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(o(scalar(0.0), 1e6, 500.0).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(&o.band_for(-5.0) == &o.band_for(0.0));
}

TEST_CASE("sinusoidal encoding") {
    const auto zero = sinusoidal_encode(0.0, 4, 10000.0);
    CHECK(zero == std::vector<double>{0.0, 1.0, 0.0, 1.0});
    RngStream rng(StreamKey{24, 0, 0, 0, StreamPurpose::Test});
    for (int i = 0; i < 100; ++i) {
        for (double v : sinusoidal_encode(-1e3 + 2e3 * rng.next_uniform(), 16)) CHECK(std::abs(v) <= 1.0);
    }
    const double period = 2.0 * std::numbers::pi * 100.0;
    const auto a = sinusoidal_encode(1.3, 8, 100.0);
    const auto b = sinusoidal_encode(1.3 + period, 8, 100.0);
    CHECK(a[6] == doctest::Approx(b[6]).epsilon(1e-9));
    CHECK(a[7] == doctest::Approx(b[7]).epsilon(1e-9));
    CHECK_THROWS_AS(sinusoidal_encode(1.0, 3), InvalidParameter);
    CHECK_THROWS_AS(sinusoidal_encode(1.0, 0), InvalidParameter);
}

TEST_CASE("oracle descriptions load from JSON") {
    const auto single = parse_oracle(R"({"components": [{"weight": 0.25, "mean": -0.5, "std": 0.1},
                                                        {"weight": 0.75, "mean": [0.5], "std": 0.2}]})");
    const auto* g = dynamic_cast<const GaussianMixtureOracle*>(single.get());
    REQUIRE(g);
    CHECK(g->components().size() == 2);
    CHECK(g->components()[1].mean[0] == 0.5);

    const auto pixel = parse_oracle(R"({"pixelwise": true, "components": [{"weight": 1.0, "mean": [0, 0, 0], "std": 0.5}]})");
    CHECK(dynamic_cast<const PixelMixtureOracle*>(pixel.get()));

    const auto banded = parse_oracle(R"({"bands": [{"lower": 0, "mixture": {"components": [{"weight": 1, "mean": 0, "std": 1}]}},
                                                   {"lower": 20, "mixture": {"pixelwise": true, "components": [{"weight": 1, "mean": 1, "std": 1}]}}]})");
    CHECK(dynamic_cast<const ResolutionSwitchedOracle*>(banded.get()));

    const auto dir = std::filesystem::temp_directory_path() / "tilediff_oracle_test";
    std::filesystem::create_directories(dir);
    ImagePlane mean(1, 2, 2, 0.0, 0.25);
    write_raw(dir / "mean.raw", mean);
    std::ofstream(dir / "oracle.json") << R"({"components": [{"weight": 1, "mean_file": "mean.raw", "std": 0.1}]})";
    const auto from_file = load_oracle(dir / "oracle.json");
    const auto* f = dynamic_cast<const GaussianMixtureOracle*>(from_file.get());
    REQUIRE(f);
    CHECK(f->components()[0].mean.size() == 4);
    CHECK(f->mean_shape().has_value());
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS(parse_oracle("{not json"), InvalidParameter);
    CHECK_THROWS_AS(parse_oracle(R"({"components": [{"weight": 1}]})"), InvalidParameter);
    CHECK_THROWS_AS(load_oracle("/nonexistent/oracle.json"), IoError);
}

TEST_CASE("builtin oracles") {
    for (const char* name : {"gaussian", "bimodal", "texture"}) CHECK(builtin_oracle(name, 1, 8));
    const auto tissue = make_denoiser("builtin:tissue", 3, 8);
    ImagePlane x(3, 8, 8, 0.0, 0.2);
    CHECK((*tissue)(x, 1.0, 120.0).all_finite());
    CHECK((*tissue)(x, 1.0, 4.0).all_finite());
    CHECK_THROWS_AS(builtin_oracle("nope", 1, 8), InvalidParameter);
}

TEST_CASE("call counting") {
    const GaussianMixtureOracle o({{1.0, {0.0}, 0.5}});
    CountingDenoiser counted(o);
    (void)counted(scalar(1.0), 1.0, 1.0);
    (void)counted(scalar(1.0), 1.0, 1.0);
    CHECK(counted.calls() == 2);
    counted.reset();
    CHECK(counted.calls() == 0);
}
