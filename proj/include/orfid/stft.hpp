#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "orfid/simrf.hpp"

namespace orfid {

// Rectangular-window STFT: window 64, hop 8 turns a 768-sample slice into the
// 64x89 time-frequency map. Unnormalized two-sided DFT per frame.
struct StftConfig {
    std::size_t window_len = 64;
    std::size_t hop = 8;
    double log_eps = 1e-12;

    std::size_t fft_len() const { return window_len; }

    std::size_t frame_count(std::size_t signal_len) const {
        if (signal_len < window_len)
            throw std::invalid_argument("stft: signal shorter than one window");
        return (signal_len - window_len) / hop + 1;
    }

    void validate() const {
        if (window_len < 2) throw std::invalid_argument("stft: window_len must be >= 2");
        if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
    }
};

struct Spectrogram {
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<double> values;  // row-major [bin][frame]
    int label = 0;

    double& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
    double at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, forward (e^{-j2pi kt/N}),
// unnormalized.
inline void fft_radix2(std::vector<cplx>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline void dft_direct(std::vector<cplx>& a) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                               static_cast<double>(t) / static_cast<double>(n);
            out[k] += a[t] * cplx(std::cos(ang), std::sin(ang));
        }
    a = std::move(out);
}

}  // namespace detail

// Complex STFT matrix, row-major [bin][frame]; frame f covers samples
// [f*hop, f*hop + window_len).
struct StftMatrix {
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<cplx> values;

    cplx& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
    cplx at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
};

inline StftMatrix stft(const std::vector<cplx>& x, const StftConfig& cfg = {}) {
    cfg.validate();
    const std::size_t frames = cfg.frame_count(x.size());
    const std::size_t bins = cfg.fft_len();
    StftMatrix out;
    out.bins = bins;
    out.frames = frames;
    out.values.assign(bins * frames, cplx(0.0, 0.0));
    std::vector<cplx> frame(bins);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t off = f * cfg.hop;
        for (std::size_t t = 0; t < cfg.window_len; ++t) frame[t] = x[off + t];
        if (detail::is_pow2(bins))
            detail::fft_radix2(frame);
        else
            detail::dft_direct(frame);
        for (std::size_t k = 0; k < bins; ++k) out.at(k, f) = frame[k];
    }
    return out;
}

// log10 energy, then standardized per sample to zero mean / unit variance
// (variance floor 1e-12: a constant map becomes all zeros).
inline Spectrogram to_feature(const StftMatrix& s, const StftConfig& cfg = {}) {
    Spectrogram out;
    out.bins = s.bins;
    out.frames = s.frames;
    out.values.resize(s.values.size());
    const std::size_t n = s.values.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = std::norm(s.values[i]);
        if (!std::isfinite(e)) throw std::runtime_error("spectrogram: non-finite energy");
        out.values[i] = std::log10(e + cfg.log_eps);
        mean += out.values[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = out.values[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    if (var < 1e-12) {
        for (std::size_t i = 0; i < n; ++i) out.values[i] = 0.0;
        return out;
    }
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = (out.values[i] - mean) * inv_std;
    return out;
}

inline Spectrogram make_spectrogram(const ComplexSignal& sig, const StftConfig& cfg = {}) {
    Spectrogram sp = to_feature(stft(sig.iq, cfg), cfg);
    sp.label = sig.label;
    return sp;
}

inline void dump_spectrogram_csv(const Spectrogram& sp, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t b = 0; b < sp.bins; ++b) {
        for (std::size_t f = 0; f < sp.frames; ++f) {
            if (f) out << ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", sp.at(b, f));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace orfid
