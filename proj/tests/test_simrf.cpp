#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "orfid/simrf.hpp"

using namespace orfid;

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::vector<double> param_vector(const DeviceFingerprint& fp) {
    return {fp.cfo, fp.iq_gain, fp.iq_phase, fp.pn_rate, fp.pa_a1, fp.pa_a3};
}

}  // namespace

TEST_CASE("fingerprint bank: zero spread forces the identity fingerprint") {
    const auto bank = default_fingerprint_bank(1, 0.0, 42);
    REQUIRE(bank.size() == 1);
    CHECK(bank[0].cfo == 0.0);
    CHECK(bank[0].iq_gain == 1.0);
    CHECK(bank[0].iq_phase == 0.0);
    CHECK(bank[0].pn_rate == 0.0);
    CHECK(bank[0].pa_a1 == 1.0);
    CHECK(bank[0].pa_a3 == 0.0);
}

TEST_CASE("fingerprint bank: deterministic for identical inputs") {
    const auto a = default_fingerprint_bank(6, 1.0, 7);
    const auto b = default_fingerprint_bank(6, 1.0, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(param_vector(a[i]) == param_vector(b[i]));
}

TEST_CASE("fingerprint bank: all pairwise parameter distances positive") {
    const auto bank = default_fingerprint_bank(6, 1.0, 1);
    int pairs = 0;
    for (std::size_t i = 0; i < bank.size(); ++i)
        for (std::size_t j = i + 1; j < bank.size(); ++j) {
            const auto a = param_vector(bank[i]);
            const auto b = param_vector(bank[j]);
            double d2 = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
            CHECK(d2 > 0.0);
            ++pairs;
        }
    CHECK(pairs == 15);
}

TEST_CASE("fingerprint bank: parameters stay inside the scaled ranges") {
    const double spread = 1.7;
    const auto bank = default_fingerprint_bank(6, spread, 3);
    for (const auto& fp : bank) {
        CHECK(std::abs(fp.cfo) <= spread * 5e-4 + 1e-15);
        CHECK(std::abs(fp.iq_gain - 1.0) <= spread * 0.05 + 1e-15);
        CHECK(std::abs(fp.iq_phase) <= spread * 0.05 + 1e-15);
        CHECK(fp.pn_rate >= 0.0);
        CHECK(fp.pn_rate <= spread * 0.01 + 1e-15);
        CHECK(fp.pa_a1 == 1.0);
        CHECK(std::abs(fp.pa_a3) <= spread * 0.08 + 1e-15);
    }
}

TEST_CASE("fingerprint bank: empty bank rejected") {
    CHECK_THROWS(default_fingerprint_bank(0, 1.0, 1));
}

TEST_CASE("baseband: data-like is 4x oversampled unit-power QPSK") {
    RngStream rng(123);
    const auto x = gen_baseband(SignalContent::DataLike, 768, rng);
    REQUIRE(x.size() == 768);
    const double a = 1.0 / std::numbers::sqrt2;
    for (std::size_t t = 0; t < x.size(); t += 4) {
        for (std::size_t k = 1; k < 4; ++k) CHECK(x[t + k] == x[t]);
        CHECK(std::abs(std::abs(x[t].real()) - a) < 1e-15);
        CHECK(std::abs(std::abs(x[t].imag()) - a) < 1e-15);
    }
    CHECK(std::abs(mean_power(x) - 1.0) < 1e-12);
}

TEST_CASE("baseband: voice-like gating matches the pause probability") {
    int silent = 0, loud = 0, total_blocks = 0;
    double max_power = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngStream rng(seed);
        const auto x = gen_baseband(SignalContent::VoiceLike, 768, rng);
        CHECK(mean_power(x) <= 1.0 + 1e-12);
        for (std::size_t b0 = 0; b0 < x.size(); b0 += 64) {
            double p = 0.0;
            for (std::size_t t = 0; t < 64; ++t) p += std::norm(x[b0 + t]);
            p /= 64.0;
            if (p < 1e-6) ++silent;
            if (p > 0.1) ++loud;
            max_power = std::max(max_power, p);
            ++total_blocks;
        }
    }
    // 1200 blocks, pause probability 0.3: expect ~360 silent, sd ~15.9.
    CHECK(total_blocks == 1200);
    CHECK(silent > 280);
    CHECK(silent < 440);
    CHECK(loud > 0);
    CHECK(max_power <= 1.0 + 1e-9);
}

TEST_CASE("baseband: length below one block rejected") {
    RngStream rng(1);
    CHECK_THROWS(gen_baseband(SignalContent::DataLike, 63, rng));
}

TEST_CASE("fingerprint application: identity is a no-op") {
    RngStream data_rng(5);
    const auto x = gen_baseband(SignalContent::DataLike, 768, data_rng);
    DeviceFingerprint fp;  // defaults are the identity
    RngStream rng(9);
    const auto y = apply_fingerprint(x, fp, rng);
    for (std::size_t t = 0; t < x.size(); ++t) CHECK(std::abs(y[t] - x[t]) < 1e-15);
}

TEST_CASE("fingerprint application: pure CFO rotates all-ones input") {
    std::vector<cplx> x(256, cplx(1.0, 0.0));
    DeviceFingerprint fp;
    fp.cfo = 0.001;
    RngStream rng(1);
    const auto y = apply_fingerprint(x, fp, rng);
    for (std::size_t t = 0; t < y.size(); ++t) {
        const cplx expect = std::polar(1.0, 2.0 * std::numbers::pi * 0.001 * t);
        CHECK(std::abs(y[t] - expect) < 1e-12);
    }
}

TEST_CASE("fingerprint application: cubic PA term evaluates as expected") {
    std::vector<cplx> x(64, cplx(0.5, 0.0));
    DeviceFingerprint fp;
    fp.pa_a3 = 0.1;
    RngStream rng(1);
    const auto y = apply_fingerprint(x, fp, rng);
    for (const cplx& v : y) {
        CHECK(std::abs(v.real() - 0.5125) < 1e-15);
        CHECK(std::abs(v.imag()) < 1e-15);
    }
}

TEST_CASE("awgn: infinite SNR is a no-op") {
    std::vector<cplx> x(100, cplx(0.3, -0.4));
    RngStream rng(1);
    const auto y = add_awgn(x, std::numeric_limits<double>::infinity(), rng);
    CHECK(y == x);
}

TEST_CASE("awgn: measured noise power tracks requested SNR") {
    const std::size_t n = 100000;
    std::vector<cplx> x(n);
    RngStream data_rng(77);
    for (auto& v : x) v = std::polar(1.0, data_rng.next_uniform(0.0, 2.0 * std::numbers::pi));
    RngStream rng(8);
    const auto y = add_awgn(x, 20.0, rng);
    double noise_power = 0.0;
    for (std::size_t t = 0; t < n; ++t) noise_power += std::norm(y[t] - x[t]);
    noise_power /= static_cast<double>(n);
    CHECK(noise_power > 0.01 * 0.95);
    CHECK(noise_power < 0.01 * 1.05);
}

TEST_CASE("awgn: deterministic for the same stream seed") {
    std::vector<cplx> x(64, cplx(1.0, 0.0));
    RngStream r1(4), r2(4);
    CHECK(add_awgn(x, 10.0, r1) == add_awgn(x, 10.0, r2));
}

TEST_CASE("awgn: zero-power input rejected") {
    std::vector<cplx> x(64, cplx(0.0, 0.0));
    RngStream rng(1);
    CHECK_THROWS(add_awgn(x, 10.0, rng));
}

TEST_CASE("dataset generation: record counts, labels, and determinism") {
    DatasetSpec spec;
    spec.num_devices = 6;
    spec.samples_per_device = 100;
    spec.snr_db = 20.0;
    spec.seed = 11;
    const Dataset ds = generate_dataset(spec);
    REQUIRE(ds.samples.size() == 600);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        CHECK(ds.samples[i].label == static_cast<int>(i) / 100);

    const auto tmp = std::filesystem::temp_directory_path();
    const std::string p1 = (tmp / "orfid_ds1.rfds").string();
    const std::string p2 = (tmp / "orfid_ds2.rfds").string();
    write_rfds(ds, p1);
    write_rfds(generate_dataset(spec), p2);
    CHECK(slurp(p1) == slurp(p2));

    const Dataset back = read_rfds(p1);
    CHECK(back.num_classes == 6);
    CHECK(back.samples.size() == 600);
    CHECK(back.sample_len == 768);
    CHECK(back.content == SignalContent::DataLike);
    CHECK(back.seed == 11);
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        CHECK(back.samples[i].label == ds.samples[i].label);
        for (std::size_t t = 0; t < back.sample_len; ++t) {
            CHECK(back.samples[i].iq[t].real() ==
                  static_cast<double>(static_cast<float>(ds.samples[i].iq[t].real())));
            CHECK(back.samples[i].iq[t].imag() ==
                  static_cast<double>(static_cast<float>(ds.samples[i].iq[t].imag())));
        }
    }
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("dataset generation: invalid specs rejected") {
    DatasetSpec spec;
    spec.num_devices = 1;
    CHECK_THROWS(generate_dataset(spec));
    spec.num_devices = 2;
    spec.samples_per_device = 0;
    CHECK_THROWS(generate_dataset(spec));
}

TEST_CASE("rfds: bad magic rejected") {
    const auto tmp = std::filesystem::temp_directory_path();
    const std::string p = (tmp / "orfid_bad.rfds").string();
    std::ofstream out(p, std::ios::binary);
    out << "NOPE data";
    out.close();
    CHECK_THROWS(read_rfds(p));
    std::filesystem::remove(p);
}
