#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "orfid/binio.hpp"
#include "orfid/net.hpp"

namespace orfid {

struct TrainResult {
    std::vector<double> epoch_loss;
    int epochs_run = 0;
};

namespace nn {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
};

inline void adam_step(Network& net, AdamState& st, double lr) {
    ++st.t;
    const double b1 = TrainConfig::kBeta1, b2 = TrainConfig::kBeta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    std::size_t slot = 0;
    net.for_each_param([&](const std::string&, std::vector<double>& w, std::vector<double>& g) {
        if (st.m.size() <= slot) {
            st.m.emplace_back(w.size(), 0.0);
            st.v.emplace_back(w.size(), 0.0);
        }
        std::vector<double>& m = st.m[slot];
        std::vector<double>& v = st.v[slot];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + TrainConfig::kEps);
        }
        ++slot;
    });
}

}  // namespace nn

// Mini-batch Adam on softmax cross-entropy. Deterministic: per-epoch shuffles
// come from the training seed, all math is serial double precision.
inline TrainResult train(Network& net, const std::vector<Spectrogram>& data,
                         const std::vector<int>& labels, const TrainConfig& tc,
                         const std::function<void(int, double)>& on_epoch = {}) {
    tc.validate();
    const int alpha = net.config().alpha;
    if (data.size() != labels.size() || data.empty())
        throw std::invalid_argument("train: data/labels size mismatch or empty");
    std::vector<int> per_class(alpha, 0);
    for (int l : labels) {
        if (l < 0 || l >= alpha) throw std::invalid_argument("train: label out of range");
        ++per_class[l];
    }
    for (int c = 0; c < alpha; ++c)
        if (per_class[c] == 0)
            throw std::invalid_argument("train: class " + std::to_string(c) + " has no samples");

    const int n = static_cast<int>(data.size());
    const int bs = std::min(tc.batch_size, n);
    Workspace ws;
    net.prepare(ws, bs);
    nn::AdamState adam;
    TrainResult res;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> batch_labels;

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        RngStream shuffle_rng = RngStream::derive(tc.seed, {0x5BADu, static_cast<std::uint64_t>(epoch)});
        shuffle_rng.shuffle(order.data(), order.size());
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += bs) {
            const int b = std::min(bs, n - start);
            ws.batch = b;
            batch_labels.resize(b);
            for (int i = 0; i < b; ++i) {
                const int idx = order[start + i];
                load_input(ws, i, data[static_cast<std::size_t>(idx)]);
                batch_labels[i] = labels[static_cast<std::size_t>(idx)];
            }
            net.forward(ws, true);
            const double loss = softmax_cross_entropy(ws.logits, batch_labels, alpha, ws.d_logits);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch offset " +
                                         std::to_string(start));
            net.zero_grads();
            net.backward(ws);
            nn::adam_step(net, adam, tc.learning_rate);
            epoch_loss += loss * b;
        }
        epoch_loss /= n;
        res.epoch_loss.push_back(epoch_loss);
        res.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(epoch, epoch_loss);
        if (tc.early_stop_loss > 0.0 && epoch_loss < tc.early_stop_loss) break;
    }
    return res;
}

// Inference-mode activation vectors with argmax-of-logits predictions.
inline std::vector<ActivationRecord> extract_avs(Network& net,
                                                 const std::vector<Spectrogram>& data) {
    const int alpha = net.config().alpha;
    Workspace ws;
    net.prepare(ws, 1);
    std::vector<ActivationRecord> out;
    out.reserve(data.size());
    for (const Spectrogram& sp : data) {
        load_input(ws, 0, sp);
        net.forward(ws, false);
        ActivationRecord rec;
        rec.av.assign(ws.av.begin(), ws.av.begin() + alpha);
        rec.label = sp.label;
        rec.predicted = argmax_lowest(ws.logits.data(), alpha);
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// RFNN checkpoint (little-endian): magic "RFNN", version u16=1, config
// (alpha u16, input dims u16 x2, block count u16, per block channels/kernel
// u16, bn_momentum f64, bn_eps f64, known-device count u16 + ids u16), then
// per-layer f32 parameter blocks with u32 length prefixes, then BN running
// stats in the same framing.
// ---------------------------------------------------------------------------

inline void save_checkpoint(Network& net, const std::vector<int>& known_devices,
                            const std::string& path) {
    const NetworkConfig& cfg = net.config();
    ByteWriter w;
    w.put_bytes("RFNN", 4);
    w.put_u16(1);
    w.put_u16(static_cast<std::uint16_t>(cfg.alpha));
    w.put_u16(static_cast<std::uint16_t>(cfg.input_rows));
    w.put_u16(static_cast<std::uint16_t>(cfg.input_cols));
    w.put_u16(static_cast<std::uint16_t>(cfg.conv_channels.size()));
    for (std::size_t b = 0; b < cfg.conv_channels.size(); ++b) {
        w.put_u16(static_cast<std::uint16_t>(cfg.conv_channels[b]));
        w.put_u16(static_cast<std::uint16_t>(cfg.kernel_sizes[b]));
    }
    w.put_f64(cfg.bn_momentum);
    w.put_f64(cfg.bn_eps);
    w.put_u16(static_cast<std::uint16_t>(known_devices.size()));
    for (int d : known_devices) w.put_u16(static_cast<std::uint16_t>(d));
    const auto put_block = [&w](const std::vector<double>& vals) {
        w.put_u32(static_cast<std::uint32_t>(vals.size()));
        for (double v : vals) w.put_f32(static_cast<float>(v));
    };
    net.for_each_param([&](const std::string&, std::vector<double>& vals,
                           std::vector<double>&) { put_block(vals); });
    net.for_each_state([&](std::vector<double>& vals) { put_block(vals); });
    w.write_file(path);
}

struct LoadedCheckpoint {
    Network net;
    std::vector<int> known_devices;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string(magic, 4) != "RFNN") throw std::runtime_error("rfnn: bad magic in " + path);
    if (r.get_u16() != 1) throw std::runtime_error("rfnn: unsupported version");
    NetworkConfig cfg;
    cfg.alpha = r.get_u16();
    cfg.input_rows = r.get_u16();
    cfg.input_cols = r.get_u16();
    const std::uint16_t nb = r.get_u16();
    cfg.conv_channels.resize(nb);
    cfg.kernel_sizes.resize(nb);
    for (std::uint16_t b = 0; b < nb; ++b) {
        cfg.conv_channels[b] = r.get_u16();
        cfg.kernel_sizes[b] = r.get_u16();
    }
    cfg.bn_momentum = r.get_f64();
    cfg.bn_eps = r.get_f64();
    LoadedCheckpoint out{Network(cfg, 0), {}};
    const std::uint16_t nk = r.get_u16();
    out.known_devices.resize(nk);
    for (std::uint16_t i = 0; i < nk; ++i) out.known_devices[i] = r.get_u16();
    const auto get_block = [&r, &path](std::vector<double>& vals) {
        const std::uint32_t count = r.get_u32();
        if (count != vals.size())
            throw std::runtime_error("rfnn: parameter block size mismatch in " + path);
        for (std::uint32_t i = 0; i < count; ++i) vals[i] = r.get_f32();
    };
    out.net.for_each_param([&](const std::string&, std::vector<double>& vals,
                               std::vector<double>&) { get_block(vals); });
    out.net.for_each_state([&](std::vector<double>& vals) { get_block(vals); });
    if (r.remaining() != 0) throw std::runtime_error("rfnn: trailing bytes in " + path);
    return out;
}

}  // namespace orfid
