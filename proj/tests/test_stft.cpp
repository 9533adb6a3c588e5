#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "orfid/rng.hpp"
#include "orfid/stft.hpp"

using namespace orfid;

namespace {

// Independent oracle: per-frame DFT by direct summation.
std::vector<std::vector<cplx>> dft_sum_oracle(const std::vector<cplx>& x, std::size_t win,
                                              std::size_t hop) {
    const std::size_t frames = (x.size() - win) / hop + 1;
    std::vector<std::vector<cplx>> out(win, std::vector<cplx>(frames));
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t k = 0; k < win; ++k) {
            cplx acc(0.0, 0.0);
            for (std::size_t t = 0; t < win; ++t) {
                const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                                   static_cast<double>(t) / static_cast<double>(win);
                acc += x[f * hop + t] * cplx(std::cos(ang), std::sin(ang));
            }
            out[k][f] = acc;
        }
    return out;
}

std::vector<cplx> random_signal(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<cplx> x(n);
    for (auto& v : x) v = cplx(rng.next_gaussian(), rng.next_gaussian());
    return x;
}

}  // namespace

TEST_CASE("stft: DC input concentrates in bin zero") {
    std::vector<cplx> x(768, cplx(1.0, 0.0));
    const StftMatrix s = stft(x);
    REQUIRE(s.bins == 64);
    REQUIRE(s.frames == 89);
    for (std::size_t f = 0; f < s.frames; ++f) {
        CHECK(std::abs(s.at(0, f) - cplx(64.0, 0.0)) < 1e-9);
        for (std::size_t k = 1; k < s.bins; ++k) CHECK(std::abs(s.at(k, f)) < 1e-9);
    }
}

TEST_CASE("stft: on-grid tone lands in its bin") {
    std::vector<cplx> x(768);
    for (std::size_t t = 0; t < x.size(); ++t)
        x[t] = std::polar(1.0, 2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / 64.0);
    const StftMatrix s = stft(x);
    for (std::size_t f = 0; f < s.frames; ++f) {
        CHECK(std::abs(std::abs(s.at(5, f)) - 64.0) < 1e-9);
        for (std::size_t k = 0; k < s.bins; ++k)
            if (k != 5) CHECK(std::abs(s.at(k, f)) < 1e-9);
    }
}

TEST_CASE("stft: matches the direct DFT-sum oracle on random signals") {
    double max_err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = random_signal(768, seed);
        const StftMatrix s = stft(x);
        const auto oracle = dft_sum_oracle(x, 64, 8);
        for (std::size_t k = 0; k < 64; ++k)
            for (std::size_t f = 0; f < 89; ++f)
                max_err = std::max(max_err, std::abs(s.at(k, f) - oracle[k][f]));
    }
    CHECK(max_err < 1e-9);
}

TEST_CASE("stft: default frame arithmetic gives 64x89") {
    StftConfig cfg;
    CHECK(cfg.frame_count(768) == 89);
    CHECK((768 - 64) / 8 + 1 == 89);
}

TEST_CASE("stft: signal shorter than one window rejected") {
    std::vector<cplx> x(32, cplx(1.0, 0.0));
    CHECK_THROWS(stft(x));
}

TEST_CASE("stft: per-frame Parseval identity") {
    const auto x = random_signal(768, 99);
    const StftMatrix s = stft(x);
    StftConfig cfg;
    for (std::size_t f = 0; f < s.frames; ++f) {
        double freq_energy = 0.0;
        for (std::size_t k = 0; k < s.bins; ++k) freq_energy += std::norm(s.at(k, f));
        double time_energy = 0.0;
        for (std::size_t t = 0; t < cfg.window_len; ++t)
            time_energy += std::norm(x[f * cfg.hop + t]);
        CHECK(std::abs(freq_energy - 64.0 * time_energy) / (64.0 * time_energy) < 1e-6);
    }
}

TEST_CASE("stft: delaying by one hop shifts columns by one") {
    const auto x = random_signal(768 + 8, 123);
    const std::vector<cplx> head(x.begin(), x.begin() + 768);
    const std::vector<cplx> delayed(x.begin() + 8, x.begin() + 8 + 768);
    const StftMatrix a = stft(head);
    const StftMatrix b = stft(delayed);
    for (std::size_t k = 0; k < a.bins; ++k)
        for (std::size_t f = 0; f + 1 < a.frames; ++f)
            CHECK(std::abs(a.at(k, f + 1) - b.at(k, f)) < 1e-9);
}

TEST_CASE("features: constant-magnitude map standardizes to zeros") {
    StftMatrix s;
    s.bins = 4;
    s.frames = 5;
    s.values.assign(20, std::polar(3.0, 0.7));
    const Spectrogram sp = to_feature(s);
    for (double v : sp.values) CHECK(v == 0.0);
}

TEST_CASE("features: standardized output has zero mean and unit variance") {
    const auto x = random_signal(768, 7);
    const Spectrogram sp = to_feature(stft(x));
    double mean = 0.0;
    for (double v : sp.values) mean += v;
    mean /= static_cast<double>(sp.values.size());
    double var = 0.0;
    for (double v : sp.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(sp.values.size());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("features: a 100x energy ratio is two decades before standardization") {
    // 2x2 map with energies {1, 100, 1, 1}: log10 features {0, 2, 0, 0},
    // mean 0.5, variance (0.25*3 + 2.25)/4 = 0.75.
    StftMatrix s;
    s.bins = 2;
    s.frames = 2;
    s.values = {cplx(1.0, 0.0), cplx(10.0, 0.0), cplx(1.0, 0.0), cplx(1.0, 0.0)};
    StftConfig cfg;
    const Spectrogram sp = to_feature(s, cfg);
    const double std_dev = std::sqrt(0.75);
    CHECK(std::abs((sp.values[1] - sp.values[0]) * std_dev - 2.0) < 1e-9);
    CHECK(std::abs(sp.values[0] - (0.0 - 0.5) / std_dev) < 1e-9);
    CHECK(std::abs(sp.values[1] - (2.0 - 0.5) / std_dev) < 1e-9);
}

TEST_CASE("stft: non-power-of-two windows fall back to the direct transform") {
    StftConfig cfg;
    cfg.window_len = 48;
    cfg.hop = 16;
    const auto x = random_signal(256, 5);
    const StftMatrix s = stft(x, cfg);
    REQUIRE(s.bins == 48);
    const auto oracle = dft_sum_oracle(x, 48, 16);
    for (std::size_t k = 0; k < s.bins; ++k)
        for (std::size_t f = 0; f < s.frames; ++f)
            CHECK(std::abs(s.at(k, f) - oracle[k][f]) < 1e-9);
}
