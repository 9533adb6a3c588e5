#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "orfid/binio.hpp"
#include "orfid/rng.hpp"

namespace orfid {

using cplx = std::complex<double>;

constexpr std::size_t kDefaultSignalLen = 768;

// Hardware impairments of one emulated transmitter. These are the only thing
// distinguishing devices; the payload waveforms are identical.
struct DeviceFingerprint {
    int device_id = 0;
    double cfo = 0.0;       // carrier frequency offset, cycles/sample
    double iq_gain = 1.0;   // IQ amplitude imbalance, linear
    double iq_phase = 0.0;  // IQ phase imbalance, rad
    double pn_rate = 0.0;   // phase-noise random-walk std per sample, rad
    double pa_a1 = 1.0;     // PA linear gain
    double pa_a3 = 0.0;     // PA cubic distortion
};

struct ComplexSignal {
    std::vector<cplx> iq;
    int label = 0;
    double snr_db = 0.0;
};

enum class SignalContent : std::uint8_t { VoiceLike = 0, DataLike = 1 };

inline const char* to_string(SignalContent c) {
    return c == SignalContent::VoiceLike ? "voice" : "data";
}

inline SignalContent signal_content_from_string(const std::string& s) {
    if (s == "voice") return SignalContent::VoiceLike;
    if (s == "data") return SignalContent::DataLike;
    throw std::invalid_argument("unknown signal content: " + s);
}

struct DatasetSpec {
    int num_devices = 6;
    int samples_per_device = 600;
    SignalContent content = SignalContent::DataLike;
    double snr_db = 20.0;
    std::uint64_t seed = 1;
    double fingerprint_spread = 1.0;
    std::size_t sample_len = kDefaultSignalLen;

    void validate() const {
        if (num_devices < 2) throw std::invalid_argument("dataset: num_devices must be >= 2");
        if (samples_per_device < 1)
            throw std::invalid_argument("dataset: samples_per_device must be >= 1");
        if (fingerprint_spread < 0.0)
            throw std::invalid_argument("dataset: fingerprint_spread must be >= 0");
        if (sample_len < 64) throw std::invalid_argument("dataset: sample_len must be >= 64");
    }
};

// Grid position in [-1, 1] for slot i of n (0 for a single slot).
inline double grid_level(std::size_t i, std::size_t n) {
    if (n <= 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

// Deterministic bank of n distinct fingerprints. Each parameter takes n grid
// levels inside its physical range; the level-to-device assignment is an
// independent seeded permutation per parameter so devices differ in several
// dimensions at once, not along one axis.
inline std::vector<DeviceFingerprint> default_fingerprint_bank(std::size_t n, double spread,
                                                               std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("fingerprint bank: n must be >= 1");
    if (spread < 0.0) throw std::invalid_argument("fingerprint bank: spread must be >= 0");

    std::vector<std::size_t> perm_gain(n), perm_phase(n), perm_pn(n), perm_pa(n);
    for (std::size_t i = 0; i < n; ++i) perm_gain[i] = perm_phase[i] = perm_pn[i] = perm_pa[i] = i;
    RngStream::derive(seed, {1}).shuffle(perm_gain.data(), n);
    RngStream::derive(seed, {2}).shuffle(perm_phase.data(), n);
    RngStream::derive(seed, {3}).shuffle(perm_pn.data(), n);
    RngStream::derive(seed, {4}).shuffle(perm_pa.data(), n);

    std::vector<DeviceFingerprint> bank(n);
    for (std::size_t i = 0; i < n; ++i) {
        DeviceFingerprint& fp = bank[i];
        fp.device_id = static_cast<int>(i);
        fp.cfo = spread * 5e-4 * grid_level(i, n);
        fp.iq_gain = 1.0 + spread * 0.05 * grid_level(perm_gain[i], n);
        fp.iq_phase = spread * 0.05 * grid_level(perm_phase[i], n);
        fp.pn_rate = spread * 0.01 * (n <= 1 ? 0.0 : static_cast<double>(perm_pn[i]) /
                                                         static_cast<double>(n - 1));
        fp.pa_a1 = 1.0;
        fp.pa_a3 = spread * 0.08 * grid_level(perm_pa[i], n);
    }
    return bank;
}

// Payload waveform, mean power <= 1. DataLike: unit-power QPSK at 4x
// rectangular-pulse oversampling. VoiceLike: per-64-sample blocks, silent with
// probability 0.3, otherwise a 3-tone burst normalized to the block amplitude.
inline std::vector<cplx> gen_baseband(SignalContent content, std::size_t length, RngStream& rng) {
    if (length < 64) throw std::invalid_argument("baseband: length must be >= 64");
    std::vector<cplx> x(length);

    if (content == SignalContent::DataLike) {
        const double a = 1.0 / std::numbers::sqrt2;
        std::size_t t = 0;
        while (t < length) {
            const std::uint64_t bits = rng.next_u64();
            const double re = (bits & 1) ? a : -a;
            const double im = (bits & 2) ? a : -a;
            const cplx sym(re, im);
            for (std::size_t k = 0; k < 4 && t < length; ++k) x[t++] = sym;
        }
        return x;
    }

    if (content != SignalContent::VoiceLike) throw std::invalid_argument("baseband: bad content");

    constexpr std::size_t kBlock = 64;
    constexpr int kTones = 3;
    for (std::size_t b0 = 0; b0 < length; b0 += kBlock) {
        const std::size_t blen = std::min(kBlock, length - b0);
        if (rng.next_double() < 0.3) continue;  // pause
        const double amp = rng.next_uniform(0.3, 1.0);
        double freqs[kTones], phases[kTones];
        for (int k = 0; k < kTones; ++k) {
            freqs[k] = rng.next_uniform(-0.5, 0.5);
            phases[k] = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
        }
        double power = 0.0;
        for (std::size_t t = 0; t < blen; ++t) {
            cplx s(0.0, 0.0);
            for (int k = 0; k < kTones; ++k) {
                const double ph = 2.0 * std::numbers::pi * freqs[k] * static_cast<double>(t) +
                                  phases[k];
                s += cplx(std::cos(ph), std::sin(ph));
            }
            x[b0 + t] = s;
            power += std::norm(s);
        }
        power /= static_cast<double>(blen);
        if (power > 0.0) {
            const double scale = amp / std::sqrt(power);
            for (std::size_t t = 0; t < blen; ++t) x[b0 + t] *= scale;
        }
    }
    return x;
}

// Transmit-chain impairments, in order: IQ imbalance, PA nonlinearity, CFO
// rotation, phase-noise random walk.
//   IQ:  y = mu*x + nu*conj(x), mu = (g e^{j phi} + 1)/2, nu = (g e^{j phi} - 1)/2
//   PA:  z = a1*y + a3*y*|y|^2
inline std::vector<cplx> apply_fingerprint(const std::vector<cplx>& x, const DeviceFingerprint& fp,
                                           RngStream& rng) {
    const cplx g = fp.iq_gain * std::polar(1.0, fp.iq_phase);
    const cplx mu = (g + 1.0) * 0.5;
    const cplx nu = (g - 1.0) * 0.5;

    std::vector<cplx> y(x.size());
    double phase_noise = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        cplx v = mu * x[t] + nu * std::conj(x[t]);
        v = fp.pa_a1 * v + fp.pa_a3 * v * std::norm(v);
        if (fp.cfo != 0.0)
            v *= std::polar(1.0, 2.0 * std::numbers::pi * fp.cfo * static_cast<double>(t));
        if (fp.pn_rate > 0.0) {
            phase_noise += fp.pn_rate * rng.next_gaussian();
            v *= std::polar(1.0, phase_noise);
        }
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw std::runtime_error("fingerprint: non-finite sample (overflow)");
        y[t] = v;
    }
    return y;
}

inline double mean_power(const std::vector<cplx>& x) {
    double p = 0.0;
    for (const cplx& v : x) p += std::norm(v);
    return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

// Circular complex AWGN at the requested SNR relative to the input's measured
// mean power. +inf snr_db is the no-noise sentinel.
inline std::vector<cplx> add_awgn(const std::vector<cplx>& x, double snr_db, RngStream& rng) {
    if (std::isinf(snr_db) && snr_db > 0.0) return x;
    const double px = mean_power(x);
    if (px <= 0.0) throw std::invalid_argument("awgn: zero-power input, SNR undefined");
    const double pn = px / std::pow(10.0, snr_db / 10.0);
    const double sigma = std::sqrt(pn / 2.0);
    std::vector<cplx> y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double nr = sigma * rng.next_gaussian();
        const double ni = sigma * rng.next_gaussian();
        y[t] = x[t] + cplx(nr, ni);
    }
    return y;
}

// Per-sample RNG stage tags; each stage gets its own derived stream so the
// chain stays reproducible sample-by-sample regardless of generation order.
namespace rng_stage {
constexpr std::uint64_t kBaseband = 0;
constexpr std::uint64_t kPhaseNoise = 1;
constexpr std::uint64_t kAwgn = 2;
}  // namespace rng_stage

inline ComplexSignal generate_sample(const DatasetSpec& spec, const DeviceFingerprint& fp,
                                     int sample_index) {
    const auto dev = static_cast<std::uint64_t>(fp.device_id);
    const auto idx = static_cast<std::uint64_t>(sample_index);
    RngStream rng_bb = RngStream::derive(spec.seed, {dev, idx, rng_stage::kBaseband});
    RngStream rng_pn = RngStream::derive(spec.seed, {dev, idx, rng_stage::kPhaseNoise});
    RngStream rng_noise = RngStream::derive(spec.seed, {dev, idx, rng_stage::kAwgn});

    std::vector<cplx> x = gen_baseband(spec.content, spec.sample_len, rng_bb);
    x = apply_fingerprint(x, fp, rng_pn);
    x = add_awgn(x, spec.snr_db, rng_noise);

    ComplexSignal s;
    s.iq = std::move(x);
    s.label = fp.device_id;
    s.snr_db = spec.snr_db;
    return s;
}

// ---------------------------------------------------------------------------
// RFDS dataset file (little-endian):
//   magic "RFDS", version u16=1, num_samples u32, sample_len u32,
//   num_classes u16, content_kind u8, reserved u8, snr_db f32, seed u64;
//   per record: label u16, then sample_len (I, Q) f32 pairs.
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<ComplexSignal> samples;
    int num_classes = 0;
    SignalContent content = SignalContent::DataLike;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    std::size_t sample_len = kDefaultSignalLen;
};

inline Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    const auto bank = default_fingerprint_bank(static_cast<std::size_t>(spec.num_devices),
                                               spec.fingerprint_spread, spec.seed);
    Dataset ds;
    ds.num_classes = spec.num_devices;
    ds.content = spec.content;
    ds.snr_db = spec.snr_db;
    ds.seed = spec.seed;
    ds.sample_len = spec.sample_len;
    ds.samples.reserve(static_cast<std::size_t>(spec.num_devices) *
                       static_cast<std::size_t>(spec.samples_per_device));
    for (int d = 0; d < spec.num_devices; ++d)
        for (int i = 0; i < spec.samples_per_device; ++i)
            ds.samples.push_back(generate_sample(spec, bank[static_cast<std::size_t>(d)], i));
    return ds;
}

inline void write_rfds(const Dataset& ds, const std::string& path) {
    ByteWriter w;
    w.put_bytes("RFDS", 4);
    w.put_u16(1);
    w.put_u32(static_cast<std::uint32_t>(ds.samples.size()));
    w.put_u32(static_cast<std::uint32_t>(ds.sample_len));
    w.put_u16(static_cast<std::uint16_t>(ds.num_classes));
    w.put_u8(static_cast<std::uint8_t>(ds.content));
    w.put_u8(0);
    w.put_f32(static_cast<float>(ds.snr_db));
    w.put_u64(ds.seed);
    for (const ComplexSignal& s : ds.samples) {
        if (s.iq.size() != ds.sample_len)
            throw std::runtime_error("rfds: sample length mismatch");
        w.put_u16(static_cast<std::uint16_t>(s.label));
        for (const cplx& v : s.iq) {
            w.put_f32(static_cast<float>(v.real()));
            w.put_f32(static_cast<float>(v.imag()));
        }
    }
    w.write_file(path);
}

inline Dataset read_rfds(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string(magic, 4) != "RFDS") throw std::runtime_error("rfds: bad magic in " + path);
    const std::uint16_t version = r.get_u16();
    if (version != 1) throw std::runtime_error("rfds: unsupported version");
    Dataset ds;
    const std::uint32_t num_samples = r.get_u32();
    ds.sample_len = r.get_u32();
    ds.num_classes = r.get_u16();
    const std::uint8_t content = r.get_u8();
    if (content > 1) throw std::runtime_error("rfds: bad content kind");
    ds.content = static_cast<SignalContent>(content);
    r.get_u8();  // reserved
    ds.snr_db = r.get_f32();
    ds.seed = r.get_u64();
    ds.samples.resize(num_samples);
    for (std::uint32_t i = 0; i < num_samples; ++i) {
        ComplexSignal& s = ds.samples[i];
        s.label = r.get_u16();
        s.snr_db = ds.snr_db;
        s.iq.resize(ds.sample_len);
        for (std::size_t t = 0; t < ds.sample_len; ++t) {
            const double re = r.get_f32();
            const double im = r.get_f32();
            s.iq[t] = cplx(re, im);
        }
    }
    if (r.remaining() != 0) throw std::runtime_error("rfds: trailing bytes in " + path);
    return ds;
}

}  // namespace orfid
