#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orfid/rng.hpp"
#include "orfid/stft.hpp"

namespace orfid {

// Conv blocks are conv(same, no bias) -> BN -> ReLU -> 2x2 max-pool; then
// FC1 (flatten -> alpha) whose ReLU output is the activation vector, and
// FC2 (alpha -> alpha) producing the logits.
struct NetworkConfig {
    std::vector<int> conv_channels{32, 32, 16, 16};
    std::vector<int> kernel_sizes{5, 5, 3, 3};
    int input_rows = 64;
    int input_cols = 89;
    int alpha = 6;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;

    static NetworkConfig desk(int alpha) {
        NetworkConfig c;
        c.alpha = alpha;
        return c;
    }

    static NetworkConfig paper(int alpha) {
        NetworkConfig c;
        c.conv_channels = {256, 128, 64, 64};
        c.alpha = alpha;
        return c;
    }

    void validate() const {
        if (alpha < 2) throw std::invalid_argument("network: alpha must be >= 2");
        if (conv_channels.size() != kernel_sizes.size())
            throw std::invalid_argument("network: conv_channels/kernel_sizes size mismatch");
        if (input_rows < 1 || input_cols < 1)
            throw std::invalid_argument("network: bad input size");
        for (int ch : conv_channels)
            if (ch < 1) throw std::invalid_argument("network: conv channels must be >= 1");
        for (int k : kernel_sizes)
            if (k < 1 || k % 2 == 0)
                throw std::invalid_argument("network: kernel sizes must be odd and >= 1");
        if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
            throw std::invalid_argument("network: bn_momentum must be in [0,1)");
        int h = input_rows, w = input_cols;
        for (std::size_t b = 0; b < conv_channels.size(); ++b) {
            h /= 2;
            w /= 2;
            if (h < 1 || w < 1)
                throw std::invalid_argument(
                    "network: spatial dims collapse below 1x1 at block " + std::to_string(b));
        }
    }

    // (H, W) after each block's pool.
    std::vector<std::pair<int, int>> block_dims() const {
        std::vector<std::pair<int, int>> dims;
        int h = input_rows, w = input_cols;
        for (std::size_t b = 0; b < conv_channels.size(); ++b) {
            h /= 2;
            w /= 2;
            dims.emplace_back(h, w);
        }
        return dims;
    }

    int flatten_size() const {
        if (conv_channels.empty()) return input_rows * input_cols;
        const auto dims = block_dims();
        return conv_channels.back() * dims.back().first * dims.back().second;
    }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int max_epochs = 100;
    std::uint64_t seed = 1;
    double early_stop_loss = 0.0;  // 0 disables

    // Adam constants
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
        if (learning_rate < 0.0) throw std::invalid_argument("train: learning_rate must be >= 0");
    }
};

struct ActivationRecord {
    std::vector<double> av;  // post-ReLU FC1 output, length alpha
    int label = 0;
    int predicted = 0;
};

namespace nn {

// Batch tensor over a flat buffer. Buffers are allocated once for the largest
// use and later re-labeled with smaller logical dims, so every loop must bound
// itself by the logical size, not v.size().
struct BatchBuf {
    int B = 0, C = 0, H = 0, W = 0;
    std::vector<double> v;

    void resize(int b, int c, int h, int w) {
        B = b;
        C = c;
        H = h;
        W = w;
        v.assign(static_cast<std::size_t>(b) * c * h * w, 0.0);
    }

    void relabel(int b, int c, int h, int w) {
        B = b;
        C = c;
        H = h;
        W = w;
    }

    std::size_t plane() const { return static_cast<std::size_t>(H) * W; }
    std::size_t per_sample() const { return static_cast<std::size_t>(C) * plane(); }
    std::size_t logical_size() const { return static_cast<std::size_t>(B) * per_sample(); }

    double* at(int b, int c) { return v.data() + (static_cast<std::size_t>(b) * C + c) * plane(); }
    const double* at(int b, int c) const {
        return v.data() + (static_cast<std::size_t>(b) * C + c) * plane();
    }
    double* sample(int b) { return v.data() + static_cast<std::size_t>(b) * per_sample(); }
    const double* sample(int b) const {
        return v.data() + static_cast<std::size_t>(b) * per_sample();
    }
};

struct ConvLayer {
    int in_c = 0, out_c = 0, k = 0, pad = 0;
    std::vector<double> w, gw;  // [out_c][in_c][k][k]

    void init(int in_channels, int out_channels, int kernel, RngStream& rng) {
        in_c = in_channels;
        out_c = out_channels;
        k = kernel;
        pad = kernel / 2;
        const std::size_t n = static_cast<std::size_t>(out_c) * in_c * k * k;
        w.resize(n);
        gw.assign(n, 0.0);
        const double he_std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
        for (std::size_t i = 0; i < n; ++i) w[i] = he_std * rng.next_gaussian();
    }

    const double* kernel_at(int oc, int ic) const {
        return w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
    }
    double* grad_at(int oc, int ic) {
        return gw.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
    }

    void forward(const BatchBuf& x, BatchBuf& y) const {
        const int H = x.H, W = x.W;
        for (int b = 0; b < x.B; ++b)
            for (int oc = 0; oc < out_c; ++oc) {
                double* yp = y.at(b, oc);
                std::fill(yp, yp + y.plane(), 0.0);
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* xp = x.at(b, ic);
                    const double* wp = kernel_at(oc, ic);
                    for (int i = 0; i < H; ++i) {
                        double* yrow = yp + static_cast<std::size_t>(i) * W;
                        for (int u = 0; u < k; ++u) {
                            const int si = i + u - pad;
                            if (si < 0 || si >= H) continue;
                            const double* xrow = xp + static_cast<std::size_t>(si) * W;
                            for (int v = 0; v < k; ++v) {
                                const double wv = wp[u * k + v];
                                const int dj = v - pad;
                                const int j0 = dj < 0 ? -dj : 0;
                                const int j1 = dj > 0 ? W - dj : W;
                                for (int j = j0; j < j1; ++j) yrow[j] += wv * xrow[j + dj];
                            }
                        }
                    }
                }
            }
    }

    // Accumulates weight gradients; writes input gradients when dx != nullptr.
    void backward(const BatchBuf& x, const BatchBuf& dy, BatchBuf* dx) {
        const int B = dy.B;
        const int H = dy.H, W = dy.W;
        for (int b = 0; b < B; ++b)
            for (int oc = 0; oc < out_c; ++oc) {
                const double* dyp = dy.at(b, oc);
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* xp = x.at(b, ic);
                    double* gwp = grad_at(oc, ic);
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v) {
                            const int dj = v - pad;
                            const int j0 = dj < 0 ? -dj : 0;
                            const int j1 = dj > 0 ? W - dj : W;
                            double acc = 0.0;
                            for (int i = 0; i < H; ++i) {
                                const int si = i + u - pad;
                                if (si < 0 || si >= H) continue;
                                const double* xrow = xp + static_cast<std::size_t>(si) * W;
                                const double* dyrow = dyp + static_cast<std::size_t>(i) * W;
                                for (int j = j0; j < j1; ++j) acc += xrow[j + dj] * dyrow[j];
                            }
                            gwp[u * k + v] += acc;
                        }
                }
            }
        if (!dx) return;
        for (int b = 0; b < B; ++b)
            for (int ic = 0; ic < in_c; ++ic) {
                double* dxp = dx->at(b, ic);
                std::fill(dxp, dxp + dx->plane(), 0.0);
                for (int oc = 0; oc < out_c; ++oc) {
                    const double* dyp = dy.at(b, oc);
                    const double* wp = kernel_at(oc, ic);
                    for (int i = 0; i < H; ++i) {
                        const double* dyrow = dyp + static_cast<std::size_t>(i) * W;
                        for (int u = 0; u < k; ++u) {
                            const int si = i + u - pad;
                            if (si < 0 || si >= H) continue;
                            double* dxrow = dxp + static_cast<std::size_t>(si) * W;
                            for (int v = 0; v < k; ++v) {
                                const double wv = wp[u * k + v];
                                const int dj = v - pad;
                                const int j0 = dj < 0 ? -dj : 0;
                                const int j1 = dj > 0 ? W - dj : W;
                                for (int j = j0; j < j1; ++j) dxrow[j + dj] += wv * dyrow[j];
                            }
                        }
                    }
                }
            }
    }
};

struct BatchNorm {
    int c = 0;
    double momentum = 0.9, eps = 1e-5;
    std::vector<double> gamma, beta, g_gamma, g_beta;
    std::vector<double> run_mean, run_var;
    std::vector<double> mean_, inv_std_;  // batch stats saved by the last train forward

    void init(int channels, double mom, double epsilon) {
        c = channels;
        momentum = mom;
        eps = epsilon;
        gamma.assign(c, 1.0);
        beta.assign(c, 0.0);
        g_gamma.assign(c, 0.0);
        g_beta.assign(c, 0.0);
        run_mean.assign(c, 0.0);
        run_var.assign(c, 0.0);
        mean_.assign(c, 0.0);
        inv_std_.assign(c, 1.0);
    }

    // Writes the normalized values (x-hat) into xhat and gamma*xhat+beta into
    // y; xhat is what backward needs, so the raw conv output can be discarded.
    void forward(const BatchBuf& x, BatchBuf& xhat, BatchBuf& y, bool train) {
        const std::size_t plane = x.plane();
        const double n = static_cast<double>(x.B) * static_cast<double>(plane);
        for (int ch = 0; ch < c; ++ch) {
            double mean, inv_std;
            if (train) {
                double sum = 0.0;
                for (int b = 0; b < x.B; ++b) {
                    const double* xp = x.at(b, ch);
                    for (std::size_t i = 0; i < plane; ++i) sum += xp[i];
                }
                mean = sum / n;
                double var = 0.0;
                for (int b = 0; b < x.B; ++b) {
                    const double* xp = x.at(b, ch);
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = xp[i] - mean;
                        var += d * d;
                    }
                }
                var /= n;
                inv_std = 1.0 / std::sqrt(var + eps);
                run_mean[ch] = momentum * run_mean[ch] + (1.0 - momentum) * mean;
                run_var[ch] = momentum * run_var[ch] + (1.0 - momentum) * var;
                mean_[ch] = mean;
                inv_std_[ch] = inv_std;
            } else {
                mean = run_mean[ch];
                inv_std = 1.0 / std::sqrt(run_var[ch] + eps);
            }
            const double g = gamma[ch], bt = beta[ch];
            for (int b = 0; b < x.B; ++b) {
                const double* xp = x.at(b, ch);
                double* hp = xhat.at(b, ch);
                double* yp = y.at(b, ch);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double h = (xp[i] - mean) * inv_std;
                    hp[i] = h;
                    yp[i] = g * h + bt;
                }
            }
        }
    }

    // In-place: dy becomes dx. Gradient flows through the batch statistics.
    void backward(const BatchBuf& xhat, BatchBuf& dy) {
        const int B = dy.B;
        const std::size_t plane = dy.plane();
        const double n = static_cast<double>(B) * static_cast<double>(plane);
        for (int ch = 0; ch < c; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* hp = xhat.at(b, ch);
                const double* dp = dy.at(b, ch);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dp[i];
                    sum_dy_xhat += dp[i] * hp[i];
                }
            }
            g_gamma[ch] += sum_dy_xhat;
            g_beta[ch] += sum_dy;
            const double scale = gamma[ch] * inv_std_[ch];
            const double mean_dy = sum_dy / n;
            const double mean_dy_xhat = sum_dy_xhat / n;
            for (int b = 0; b < B; ++b) {
                const double* hp = xhat.at(b, ch);
                double* dp = dy.at(b, ch);
                for (std::size_t i = 0; i < plane; ++i)
                    dp[i] = scale * (dp[i] - mean_dy - hp[i] * mean_dy_xhat);
            }
        }
    }
};

inline void relu_forward_inplace(BatchBuf& y, std::vector<std::uint8_t>& mask) {
    const std::size_t n = y.logical_size();
    mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool on = y.v[i] > 0.0;
        mask[i] = on;
        if (!on) y.v[i] = 0.0;
    }
}

inline void relu_backward_inplace(BatchBuf& dy, const std::vector<std::uint8_t>& mask) {
    const std::size_t n = dy.logical_size();
    for (std::size_t i = 0; i < n; ++i)
        if (!mask[i]) dy.v[i] = 0.0;
}

// 2x2 max pool, floor semantics (trailing odd row/col dropped). argmax stores
// the winning offset 2*di+dj per output cell; the first maximum wins ties.
inline void maxpool_forward(const BatchBuf& x, BatchBuf& y, std::vector<std::uint8_t>& argmax) {
    const int H2 = x.H / 2, W2 = x.W / 2;
    argmax.resize(static_cast<std::size_t>(x.B) * x.C * H2 * W2);
    std::size_t a = 0;
    for (int b = 0; b < x.B; ++b)
        for (int ch = 0; ch < x.C; ++ch) {
            const double* xp = x.at(b, ch);
            double* yp = y.at(b, ch);
            for (int i = 0; i < H2; ++i)
                for (int j = 0; j < W2; ++j) {
                    double best = xp[(2 * i) * x.W + 2 * j];
                    std::uint8_t arg = 0;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const double v = xp[(2 * i + di) * x.W + 2 * j + dj];
                            if (v > best) {
                                best = v;
                                arg = static_cast<std::uint8_t>(2 * di + dj);
                            }
                        }
                    yp[i * W2 + j] = best;
                    argmax[a++] = arg;
                }
        }
}

inline void maxpool_backward(const BatchBuf& dy, const std::vector<std::uint8_t>& argmax,
                             BatchBuf& dx) {
    std::fill_n(dx.v.begin(), dx.logical_size(), 0.0);
    const int H2 = dy.H, W2 = dy.W;
    std::size_t a = 0;
    for (int b = 0; b < dy.B; ++b)
        for (int ch = 0; ch < dy.C; ++ch) {
            const double* dyp = dy.at(b, ch);
            double* dxp = dx.at(b, ch);
            for (int i = 0; i < H2; ++i)
                for (int j = 0; j < W2; ++j) {
                    const std::uint8_t arg = argmax[a++];
                    const int di = arg >> 1, dj = arg & 1;
                    dxp[(2 * i + di) * dx.W + 2 * j + dj] += dyp[i * W2 + j];
                }
        }
}

struct DenseLayer {
    int in_dim = 0, out_dim = 0;
    std::vector<double> w, b, gw, gb;  // w is [out][in]

    void init(int in_d, int out_d, RngStream& rng) {
        in_dim = in_d;
        out_dim = out_d;
        w.resize(static_cast<std::size_t>(in_dim) * out_dim);
        b.assign(out_dim, 0.0);
        gw.assign(w.size(), 0.0);
        gb.assign(out_dim, 0.0);
        const double he_std = std::sqrt(2.0 / static_cast<double>(in_dim));
        for (double& v : w) v = he_std * rng.next_gaussian();
    }

    void forward(const double* x, double* y) const {
        for (int o = 0; o < out_dim; ++o) {
            const double* wrow = w.data() + static_cast<std::size_t>(o) * in_dim;
            double acc = b[o];
            for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x[i];
            y[o] = acc;
        }
    }

    void backward(const double* x, const double* dy, double* dx) {
        for (int o = 0; o < out_dim; ++o) {
            const double d = dy[o];
            double* gwrow = gw.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) gwrow[i] += d * x[i];
            gb[o] += d;
        }
        if (!dx) return;
        for (int i = 0; i < in_dim; ++i) dx[i] = 0.0;
        for (int o = 0; o < out_dim; ++o) {
            const double d = dy[o];
            const double* wrow = w.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) dx[i] += wrow[i] * d;
        }
    }
};

}  // namespace nn

// Scratch buffers for one forward/backward pass. Activations that backward
// needs (block inputs, BN x-hat, masks) persist per block; conv outputs and
// flowing gradients ping-pong through two shared buffers sized for the
// largest block.
struct Workspace {
    int capacity = 0;  // max batch prepared for
    int batch = 0;     // logical batch of the current pass
    nn::BatchBuf input;
    std::vector<nn::BatchBuf> xhat;      // per block, conv-out shape
    std::vector<nn::BatchBuf> pool_out;  // per block
    std::vector<std::vector<std::uint8_t>> relu_mask;
    std::vector<std::vector<std::uint8_t>> pool_arg;
    nn::BatchBuf tmp_a, tmp_b;
    std::vector<double> fc1_out, av, logits;  // capacity x alpha each
    std::vector<double> d_logits, d_av, d_flat;
};

class Network {
public:
    Network() = default;

    Network(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        RngStream rng = RngStream::derive(seed, {0xFEEDu});
        const std::size_t nb = cfg_.conv_channels.size();
        blocks_.resize(nb);
        int in_c = 1;
        for (std::size_t b = 0; b < nb; ++b) {
            blocks_[b].conv.init(in_c, cfg_.conv_channels[b], cfg_.kernel_sizes[b], rng);
            blocks_[b].bn.init(cfg_.conv_channels[b], cfg_.bn_momentum, cfg_.bn_eps);
            in_c = cfg_.conv_channels[b];
        }
        fc1_.init(cfg_.flatten_size(), cfg_.alpha, rng);
        fc2_.init(cfg_.alpha, cfg_.alpha, rng);
        // The AV layer is only alpha units wide, so a dead-ReLU collapse is
        // absorbing. A small positive FC1 bias starts every unit alive, and an
        // identity FC2 ties unit i to logit i so class gradients keep their
        // own unit above the ReLU floor.
        std::fill(fc1_.b.begin(), fc1_.b.end(), 0.1);
        std::fill(fc2_.w.begin(), fc2_.w.end(), 0.0);
        for (int i = 0; i < cfg_.alpha; ++i)
            fc2_.w[static_cast<std::size_t>(i) * cfg_.alpha + i] = 1.0;
    }

    const NetworkConfig& config() const { return cfg_; }

    void prepare(Workspace& ws, int batch) const {
        ws.capacity = batch;
        ws.batch = batch;
        ws.input.resize(batch, 1, cfg_.input_rows, cfg_.input_cols);
        const auto dims = cfg_.block_dims();
        const std::size_t nb = blocks_.size();
        ws.xhat.resize(nb);
        ws.pool_out.resize(nb);
        ws.relu_mask.resize(nb);
        ws.pool_arg.resize(nb);
        int h = cfg_.input_rows, w = cfg_.input_cols;
        std::size_t max_plane = static_cast<std::size_t>(h) * w;
        for (std::size_t b = 0; b < nb; ++b) {
            const int c = cfg_.conv_channels[b];
            ws.xhat[b].resize(batch, c, h, w);
            max_plane = std::max(max_plane, static_cast<std::size_t>(c) * h * w);
            h = dims[b].first;
            w = dims[b].second;
            ws.pool_out[b].resize(batch, c, h, w);
        }
        ws.tmp_a.resize(batch, 1, 1, static_cast<int>(max_plane));
        ws.tmp_b.resize(batch, 1, 1, static_cast<int>(max_plane));
        const std::size_t ba = static_cast<std::size_t>(batch) * cfg_.alpha;
        ws.fc1_out.assign(ba, 0.0);
        ws.av.assign(ba, 0.0);
        ws.logits.assign(ba, 0.0);
        ws.d_logits.assign(ba, 0.0);
        ws.d_av.assign(ba, 0.0);
        ws.d_flat.assign(static_cast<std::size_t>(batch) * cfg_.flatten_size(), 0.0);
    }

    // Fills ws.av and ws.logits for ws.batch samples. Train mode uses batch
    // statistics and updates BN running stats; infer mode is const.
    void forward(Workspace& ws, bool train) {
        const int B = ws.batch;
        if (B < 1 || B > ws.capacity) throw std::invalid_argument("network: bad batch size");
        const auto dims = cfg_.block_dims();
        ws.input.B = B;
        nn::BatchBuf* cur = &ws.input;
        int h = cfg_.input_rows, w = cfg_.input_cols;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            Block& blk = blocks_[b];
            const int c = cfg_.conv_channels[b];
            nn::BatchBuf& conv_out = ws.tmp_a;
            conv_out.relabel(B, c, h, w);
            blk.conv.forward(*cur, conv_out);
            ws.xhat[b].B = B;
            nn::BatchBuf& y = ws.tmp_b;
            y.relabel(B, c, h, w);
            blk.bn.forward(conv_out, ws.xhat[b], y, train);
            nn::relu_forward_inplace(y, ws.relu_mask[b]);
            ws.pool_out[b].B = B;
            nn::maxpool_forward(y, ws.pool_out[b], ws.pool_arg[b]);
            cur = &ws.pool_out[b];
            h = dims[b].first;
            w = dims[b].second;
        }
        for (int b = 0; b < B; ++b) {
            const double* x = cur->sample(b);
            double* f1 = ws.fc1_out.data() + static_cast<std::size_t>(b) * cfg_.alpha;
            fc1_.forward(x, f1);
            double* avp = ws.av.data() + static_cast<std::size_t>(b) * cfg_.alpha;
            for (int i = 0; i < cfg_.alpha; ++i) avp[i] = f1[i] > 0.0 ? f1[i] : 0.0;
            fc2_.forward(avp, ws.logits.data() + static_cast<std::size_t>(b) * cfg_.alpha);
        }
    }

    // Consumes ws.d_logits; parameter gradients accumulate (call zero_grads
    // first). Gradients w.r.t. the network input are not produced.
    void backward(Workspace& ws) {
        const int B = ws.batch;
        const int a = cfg_.alpha;
        nn::BatchBuf* last = blocks_.empty() ? &ws.input : &ws.pool_out.back();
        for (int b = 0; b < B; ++b) {
            const double* avp = ws.av.data() + static_cast<std::size_t>(b) * a;
            const double* dlo = ws.d_logits.data() + static_cast<std::size_t>(b) * a;
            double* dav = ws.d_av.data() + static_cast<std::size_t>(b) * a;
            fc2_.backward(avp, dlo, dav);
            const double* f1 = ws.fc1_out.data() + static_cast<std::size_t>(b) * a;
            for (int i = 0; i < a; ++i)
                if (f1[i] <= 0.0) dav[i] = 0.0;
            fc1_.backward(last->sample(b), dav,
                          ws.d_flat.data() + static_cast<std::size_t>(b) * cfg_.flatten_size());
        }
        if (blocks_.empty()) return;

        const auto dims = cfg_.block_dims();
        nn::BatchBuf* dcur = &ws.tmp_a;  // d(pool_out) of the block being processed
        {
            const int c = cfg_.conv_channels.back();
            dcur->relabel(B, c, dims.back().first, dims.back().second);
            std::copy_n(ws.d_flat.begin(), dcur->logical_size(), dcur->v.begin());
        }
        for (std::size_t bi = blocks_.size(); bi-- > 0;) {
            Block& blk = blocks_[bi];
            const int c = cfg_.conv_channels[bi];
            const int h = bi == 0 ? cfg_.input_rows : dims[bi - 1].first;
            const int w = bi == 0 ? cfg_.input_cols : dims[bi - 1].second;
            nn::BatchBuf* dother = (dcur == &ws.tmp_a) ? &ws.tmp_b : &ws.tmp_a;
            dother->relabel(B, c, h, w);
            nn::maxpool_backward(*dcur, ws.pool_arg[bi], *dother);
            nn::relu_backward_inplace(*dother, ws.relu_mask[bi]);
            blk.bn.backward(ws.xhat[bi], *dother);  // dother is now d(conv out)
            if (bi == 0) {
                blk.conv.backward(ws.input, *dother, nullptr);
            } else {
                // d(conv in) overwrites dcur's buffer, which is free now.
                dcur->relabel(B, cfg_.conv_channels[bi - 1], dims[bi - 1].first,
                              dims[bi - 1].second);
                blk.conv.backward(ws.pool_out[bi - 1], *dother, dcur);
            }
        }
    }

    void zero_grads() {
        for (Block& b : blocks_) {
            std::fill(b.conv.gw.begin(), b.conv.gw.end(), 0.0);
            std::fill(b.bn.g_gamma.begin(), b.bn.g_gamma.end(), 0.0);
            std::fill(b.bn.g_beta.begin(), b.bn.g_beta.end(), 0.0);
        }
        std::fill(fc1_.gw.begin(), fc1_.gw.end(), 0.0);
        std::fill(fc1_.gb.begin(), fc1_.gb.end(), 0.0);
        std::fill(fc2_.gw.begin(), fc2_.gw.end(), 0.0);
        std::fill(fc2_.gb.begin(), fc2_.gb.end(), 0.0);
    }

    // Visits every trainable parameter array as (name, values, grads).
    template <typename F>
    void for_each_param(F&& f) {
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string tag = "block" + std::to_string(b);
            f(tag + ".conv.w", blocks_[b].conv.w, blocks_[b].conv.gw);
            f(tag + ".bn.gamma", blocks_[b].bn.gamma, blocks_[b].bn.g_gamma);
            f(tag + ".bn.beta", blocks_[b].bn.beta, blocks_[b].bn.g_beta);
        }
        f("fc1.w", fc1_.w, fc1_.gw);
        f("fc1.b", fc1_.b, fc1_.gb);
        f("fc2.w", fc2_.w, fc2_.gw);
        f("fc2.b", fc2_.b, fc2_.gb);
    }

    // Non-trainable state (BN running stats), serialized with the parameters.
    template <typename F>
    void for_each_state(F&& f) {
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            f(blocks_[b].bn.run_mean);
            f(blocks_[b].bn.run_var);
        }
    }

    struct Block {
        nn::ConvLayer conv;
        nn::BatchNorm bn;
    };

    std::vector<Block>& blocks() { return blocks_; }
    nn::DenseLayer& fc1() { return fc1_; }
    nn::DenseLayer& fc2() { return fc2_; }

private:
    NetworkConfig cfg_;
    std::vector<Block> blocks_;
    nn::DenseLayer fc1_, fc2_;
};

inline void load_input(Workspace& ws, int slot, const Spectrogram& sp) {
    if (static_cast<int>(sp.bins) != ws.input.H || static_cast<int>(sp.frames) != ws.input.W)
        throw std::invalid_argument("network: spectrogram shape mismatch");
    std::copy(sp.values.begin(), sp.values.end(), ws.input.sample(slot));
}

inline int argmax_lowest(const double* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Mean cross-entropy of softmax(logits) against labels; fills d_logits with
// the mean-loss gradient.
inline double softmax_cross_entropy(const std::vector<double>& logits,
                                    const std::vector<int>& labels, int alpha,
                                    std::vector<double>& d_logits) {
    const int B = static_cast<int>(labels.size());
    if (d_logits.size() < static_cast<std::size_t>(B) * alpha)
        d_logits.resize(static_cast<std::size_t>(B) * alpha);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const double* lo = logits.data() + static_cast<std::size_t>(b) * alpha;
        double* dl = d_logits.data() + static_cast<std::size_t>(b) * alpha;
        double mx = lo[0];
        for (int i = 1; i < alpha; ++i) mx = std::max(mx, lo[i]);
        double z = 0.0;
        for (int i = 0; i < alpha; ++i) z += std::exp(lo[i] - mx);
        const double logz = std::log(z) + mx;
        loss += logz - lo[labels[static_cast<std::size_t>(b)]];
        for (int i = 0; i < alpha; ++i)
            dl[i] = (std::exp(lo[i] - logz) -
                     (i == labels[static_cast<std::size_t>(b)] ? 1.0 : 0.0)) /
                    static_cast<double>(B);
    }
    return loss / static_cast<double>(B);
}

}  // namespace orfid
