#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "neuromon/errors.hpp"
#include "neuromon/spectral.hpp"
#include "oracles.hpp"

using namespace neuromon;

namespace {
constexpr double kEps = neuromon::kDefaultEpsilon;

std::vector<double> random_series(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (double& v : out) v = dist(rng);
    return out;
}
}  // namespace

TEST_CASE("dft_spectrum constant series has zero non-DC power") {
    const std::vector<double> series{3, 3, 3, 3};
    Spectrum s = dft_spectrum(series, kEps);
    for (std::size_t f = 1; f < s.bins(); ++f) {
        CHECK(s.power[f] == doctest::Approx(0.0).epsilon(1e-15));
    }
    for (double p : s.normalized) CHECK(p == 0.0);
}

TEST_CASE("dft_spectrum impulse series has flat non-DC spectrum") {
    const std::vector<double> series{1, 0, 0, 0, 0, 0, 0, 0};
    Spectrum s = dft_spectrum(series, kEps);
    REQUIRE(s.bins() == 5);
    for (double p : s.normalized) {
        CHECK(p == doctest::Approx(0.25).epsilon(1e-9));
    }
}

TEST_CASE("dft_spectrum matches naive summation oracle") {
    auto series = random_series(16, 123);
    Spectrum s = dft_spectrum(series, kEps);
    auto ref = oracle::exact_features(series, kEps);
    REQUIRE(s.power.size() == ref.power.size());
    for (std::size_t i = 0; i < s.power.size(); ++i) {
        CHECK(std::abs(s.power[i] - ref.power[i]) < 1e-12);
    }
}

TEST_CASE("dft_spectrum rejects bad input") {
    CHECK_THROWS_AS(dft_spectrum(std::vector<double>{1.0}, kEps), DegenerateWindowError);
    CHECK_THROWS_AS(dft_spectrum(std::vector<double>{1.0, std::nan("")}, kEps), InputError);
    CHECK_THROWS_AS(dft_spectrum(std::vector<double>{1.0, 2.0}, 0.0), InputError);
}

TEST_CASE("spectral_entropy closed forms") {
    SUBCASE("impulse is maximally dispersed") {
        const std::vector<double> series{1, 0, 0, 0, 0, 0, 0, 0};
        CHECK(spectral_entropy(dft_spectrum(series, kEps)) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("pure tone at exact bin has zero entropy") {
        std::vector<double> series(8);
        for (std::size_t t = 0; t < 8; ++t) {
            series[t] = 2.0 + std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 4.0);
        }
        Spectrum s = dft_spectrum(series, kEps);
        CHECK(spectral_entropy(s) == doctest::Approx(0.0).epsilon(1e-9));
        // all power at bin f = 3
        CHECK(s.normalized[1] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("constant series has zero entropy by convention") {
        const std::vector<double> series{5, 5, 5, 5};
        CHECK(spectral_entropy(dft_spectrum(series, kEps)) == 0.0);
    }
    SUBCASE("F-1 == 1 degenerate case") {
        const std::vector<double> series{1, 2};
        CHECK(spectral_entropy(dft_spectrum(series, kEps)) == 0.0);
    }
}

TEST_CASE("intra_features closed forms") {
    SUBCASE("impulse T=8") {
        const std::vector<double> series{1, 0, 0, 0, 0, 0, 0, 0};
        FeatureVector fv = intra_features(series, kEps);
        CHECK(fv.dim == 3);
        CHECK(fv.values[0] == doctest::Approx(0.75).epsilon(1e-9));
        // E = (7/8)^2 + 7 * (1/8)^2 = 7/8
        CHECK(fv.values[2] == doctest::Approx(std::log(7.0 / 8.0 + kEps)).epsilon(1e-12));
    }
    SUBCASE("Nyquist-pure alternation") {
        const std::vector<double> series{2, 0, 2, 0};
        FeatureVector fv = intra_features(series, kEps);
        CHECK(fv.values[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(fv.values[1] == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("T < 4 rejected") {
        CHECK_THROWS_AS(intra_features(std::vector<double>{1, 2, 3}, kEps), DegenerateWindowError);
    }
}

TEST_CASE("exact features match oracle on seeded random series") {
    for (unsigned seed : {7u, 21u, 99u}) {
        auto series = random_series(32, seed);
        auto ref = oracle::exact_features(series, kEps);
        FeatureVector intra = intra_features(series, kEps);
        FeatureVector inter = inter_features(series, kEps);
        FeatureVector inst = inst_features(series, kEps);
        CHECK(std::abs(intra.values[0] - ref.r_hf) < 1e-10);
        CHECK(std::abs(intra.values[1] - ref.entropy) < 1e-10);
        CHECK(std::abs(intra.values[2] - std::log(ref.energy + kEps)) < 1e-10);
        CHECK(std::abs(inter.values[0] - ref.r_dom) < 1e-12);
        CHECK(std::abs(inst.values[0] - ref.r_lf) < 1e-12);
    }
}

TEST_CASE("inter/inst trivial examples") {
    std::vector<double> tone(8);
    for (std::size_t t = 0; t < 8; ++t) {
        tone[t] = 2.0 + std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 4.0);
    }
    CHECK(inter_features(tone, kEps).values[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(inter_features(std::vector<double>{4, 4, 4, 4}, kEps).values[0] == 0.0);

    const std::vector<double> impulse{1, 0, 0, 0, 0, 0, 0, 0};
    CHECK(inst_features(impulse, kEps).values[0] == doctest::Approx(0.25).epsilon(1e-9));
    // F = 3 for T = 4, so the low-frequency set is empty
    CHECK(inst_features(std::vector<double>{9, 1, 4, 7}, kEps).values[0] == 0.0);
}

TEST_CASE("slow ramp concentrates at the lowest non-DC bin") {
    std::vector<double> ramp(16);
    for (std::size_t t = 0; t < 16; ++t) {
        ramp[t] = 5.0 + std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 16.0);
    }
    auto ref = oracle::exact_features(ramp, kEps);
    FeatureVector fv = inst_features(ramp, kEps);
    CHECK(std::abs(fv.values[0] - ref.r_lf) < 1e-12);
    CHECK(fv.values[0] > 0.99);
}

TEST_CASE("Parseval cross-check on full two-sided spectrum") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        auto series = random_series(24 + seed % 16, seed * 17 + 1);
        const std::size_t n = series.size();
        std::vector<double> y(n);
        double mean = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            y[t] = std::abs(series[t]);
            mean += y[t];
        }
        mean /= static_cast<double>(n);
        double energy = 0.0;
        for (double& v : y) {
            v -= mean;
            energy += v * v;
        }
        double two_sided = 0.0;
        for (std::size_t f = 0; f < n; ++f) {
            std::complex<double> coeff{0.0, 0.0};
            for (std::size_t t = 0; t < n; ++t) {
                const double angle = -2.0 * std::numbers::pi *
                                     static_cast<double>(f) * static_cast<double>(t) /
                                     static_cast<double>(n);
                coeff += y[t] * std::complex<double>(std::cos(angle), std::sin(angle));
            }
            two_sided += std::norm(coeff);
        }
        CHECK(std::abs(two_sided - static_cast<double>(n) * energy) <
              1e-9 * std::max(1.0, static_cast<double>(n) * energy));
    }
}

TEST_CASE("scale covariance and shift invariance") {
    auto series = random_series(32, 5);
    for (double& v : series) v += 1.0;  // keep energy comfortably above epsilon scale
    FeatureVector base = intra_features(series, kEps);

    SUBCASE("scaling leaves ratios and entropy unchanged") {
        std::vector<double> scaled(series);
        for (double& v : scaled) v *= 3.0;
        FeatureVector fv = intra_features(scaled, kEps);
        CHECK(std::abs(fv.values[0] - base.values[0]) < 1e-9);
        CHECK(std::abs(fv.values[1] - base.values[1]) < 1e-9);
        // E scales by c^2, so e shifts by 2 log c
        CHECK(std::abs((fv.values[2] - base.values[2]) - 2.0 * std::log(3.0)) < 1e-7);
    }
    SUBCASE("constant shift of a positive series is absorbed by mean removal") {
        std::vector<double> shifted(series);
        for (double& v : shifted) v += 10.0;
        FeatureVector fv = intra_features(shifted, kEps);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(fv.values[i] - base.values[i]) < 1e-10);
        }
    }
}
