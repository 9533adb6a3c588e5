#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "orfid/net.hpp"
#include "orfid/rng.hpp"
#include "orfid/train.hpp"

using namespace orfid;

namespace {

Spectrogram random_spectrogram(int rows, int cols, std::uint64_t seed, int label = 0) {
    Spectrogram sp;
    sp.bins = static_cast<std::size_t>(rows);
    sp.frames = static_cast<std::size_t>(cols);
    sp.values.resize(static_cast<std::size_t>(rows) * cols);
    sp.label = label;
    RngStream rng(seed);
    for (double& v : sp.values) v = rng.next_gaussian();
    return sp;
}

double batch_loss(Network& net, Workspace& ws, const std::vector<Spectrogram>& data,
                  const std::vector<int>& labels) {
    ws.batch = static_cast<int>(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        load_input(ws, static_cast<int>(i), data[i]);
    net.forward(ws, true);
    std::vector<double> scratch;
    return softmax_cross_entropy(ws.logits, labels, net.config().alpha, scratch);
}

std::vector<std::vector<double>> snapshot_params(Network& net) {
    std::vector<std::vector<double>> out;
    net.for_each_param([&](const std::string&, std::vector<double>& w, std::vector<double>&) {
        out.push_back(w);
    });
    return out;
}

}  // namespace

TEST_CASE("network: init is deterministic and shapes follow the config") {
    NetworkConfig cfg = NetworkConfig::desk(6);
    CHECK(cfg.flatten_size() == 320);  // 64x89 -> 32x44 -> 16x22 -> 8x11 -> 4x5, 16 channels
    const auto dims = cfg.block_dims();
    CHECK(dims.back() == std::pair<int, int>(4, 5));

    Network a(cfg, 42), b(cfg, 42), c(cfg, 43);
    const auto pa = snapshot_params(a);
    const auto pb = snapshot_params(b);
    const auto pc = snapshot_params(c);
    CHECK(pa == pb);
    CHECK(pa != pc);

    CHECK(a.fc1().in_dim == 320);
    CHECK(a.fc1().out_dim == 6);
    CHECK(a.fc2().in_dim == 6);
    CHECK(a.fc2().out_dim == 6);
}

TEST_CASE("network: pooling collapse is a configuration error") {
    NetworkConfig cfg = NetworkConfig::desk(3);
    cfg.input_rows = 4;
    cfg.input_cols = 5;
    CHECK_THROWS(Network(cfg, 1));
}

TEST_CASE("network: zeroed FC1 yields a zero activation vector") {
    NetworkConfig cfg;
    cfg.conv_channels = {2};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 8;
    cfg.input_cols = 8;
    cfg.alpha = 3;
    Network net(cfg, 7);
    std::fill(net.fc1().w.begin(), net.fc1().w.end(), 0.0);
    std::fill(net.fc1().b.begin(), net.fc1().b.end(), 0.0);
    Workspace ws;
    net.prepare(ws, 1);
    load_input(ws, 0, random_spectrogram(8, 8, 5));
    net.forward(ws, false);
    for (int i = 0; i < 3; ++i) CHECK(ws.av[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("network: inference is repeatable") {
    NetworkConfig cfg;
    cfg.conv_channels = {3, 2};
    cfg.kernel_sizes = {3, 3};
    cfg.input_rows = 16;
    cfg.input_cols = 12;
    cfg.alpha = 4;
    Network net(cfg, 5);
    Workspace ws;
    net.prepare(ws, 1);
    const Spectrogram sp = random_spectrogram(16, 12, 8);
    load_input(ws, 0, sp);
    net.forward(ws, false);
    const std::vector<double> first = ws.logits;
    load_input(ws, 0, sp);
    net.forward(ws, false);
    CHECK(ws.logits == first);
}

TEST_CASE("network: dense-only instance matches hand-computed products") {
    NetworkConfig cfg;
    cfg.conv_channels = {};
    cfg.kernel_sizes = {};
    cfg.input_rows = 1;
    cfg.input_cols = 2;
    cfg.alpha = 2;
    Network net(cfg, 1);
    net.fc1().w = {1.0, 2.0, 3.0, 4.0};  // [out][in]
    net.fc1().b = {0.5, -0.5};
    net.fc2().w = {1.0, 0.0, 1.0, 1.0};
    net.fc2().b = {0.0, 1.0};
    Workspace ws;
    net.prepare(ws, 1);
    Spectrogram sp;
    sp.bins = 1;
    sp.frames = 2;
    sp.values = {0.3, -0.2};
    load_input(ws, 0, sp);
    net.forward(ws, false);
    // fc1 = (0.3 - 0.4 + 0.5, 0.9 - 0.8 - 0.5) = (0.4, -0.4); av = (0.4, 0)
    CHECK(std::abs(ws.av[0] - 0.4) < 1e-12);
    CHECK(ws.av[1] == 0.0);
    // logits = (0.4, 0.4 + 1)
    CHECK(std::abs(ws.logits[0] - 0.4) < 1e-12);
    CHECK(std::abs(ws.logits[1] - 1.4) < 1e-12);
}

TEST_CASE("network: analytic gradients match central finite differences") {
    NetworkConfig cfg;
    cfg.conv_channels = {2, 3};
    cfg.kernel_sizes = {3, 3};
    cfg.input_rows = 12;
    cfg.input_cols = 10;
    cfg.alpha = 3;
    Network net(cfg, 2025);
    const int B = 4;
    std::vector<Spectrogram> data;
    std::vector<int> labels{0, 1, 2, 0};
    for (int i = 0; i < B; ++i) data.push_back(random_spectrogram(12, 10, 100 + i));

    Workspace ws;
    net.prepare(ws, B);

    // Analytic pass.
    ws.batch = B;
    for (int i = 0; i < B; ++i) load_input(ws, i, data[static_cast<std::size_t>(i)]);
    net.forward(ws, true);
    softmax_cross_entropy(ws.logits, labels, cfg.alpha, ws.d_logits);
    net.zero_grads();
    net.backward(ws);
    std::vector<std::vector<double>> grads;
    std::vector<std::string> names;
    net.for_each_param([&](const std::string& name, std::vector<double>&,
                           std::vector<double>& g) {
        names.push_back(name);
        grads.push_back(g);
    });

    const double h = 1e-5;
    double worst = 0.0;
    std::size_t slot = 0;
    net.for_each_param([&](const std::string&, std::vector<double>& w, std::vector<double>&) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double lp = batch_loss(net, ws, data, labels);
            w[i] = orig - h;
            const double lm = batch_loss(net, ws, data, labels);
            w[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = grads[slot][i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            worst = std::max(worst, rel);
        }
        ++slot;
    });
    INFO("worst relative gradient error " << worst);
    CHECK(worst < 1e-5);
}

TEST_CASE("network: BN inference is batch-size independent") {
    NetworkConfig cfg;
    cfg.conv_channels = {3};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 10;
    cfg.input_cols = 10;
    cfg.alpha = 2;
    Network net(cfg, 3);
    // A couple of training steps so running stats are nontrivial.
    std::vector<Spectrogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) {
        data.push_back(random_spectrogram(10, 10, 50 + i, i % 2));
        labels.push_back(i % 2);
    }
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 4;
    train(net, data, labels, tc);

    Workspace solo, group;
    net.prepare(solo, 1);
    net.prepare(group, 3);
    load_input(solo, 0, data[0]);
    net.forward(solo, false);
    group.batch = 3;
    load_input(group, 0, data[1]);
    load_input(group, 1, data[0]);
    load_input(group, 2, data[2]);
    net.forward(group, false);
    for (int i = 0; i < 2; ++i)
        CHECK(solo.logits[static_cast<std::size_t>(i)] ==
              group.logits[static_cast<std::size_t>(2 + i)]);
}

TEST_CASE("network: softmax of the logits is a probability vector") {
    NetworkConfig cfg;
    cfg.conv_channels = {2};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 8;
    cfg.input_cols = 10;
    cfg.alpha = 5;
    Network net(cfg, 11);
    // brief training populates the BN running stats used at inference
    std::vector<Spectrogram> warmup;
    std::vector<int> warmup_labels;
    for (int i = 0; i < 10; ++i) {
        warmup.push_back(random_spectrogram(8, 10, 900 + i, i % 5));
        warmup_labels.push_back(i % 5);
    }
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 5;
    train(net, warmup, warmup_labels, tc);
    Workspace ws;
    net.prepare(ws, 1);
    for (int trial = 0; trial < 20; ++trial) {
        load_input(ws, 0, random_spectrogram(8, 10, 200 + trial));
        net.forward(ws, false);
        double mx = ws.logits[0];
        for (int i = 1; i < 5; ++i) mx = std::max(mx, ws.logits[static_cast<std::size_t>(i)]);
        double z = 0.0;
        for (int i = 0; i < 5; ++i) z += std::exp(ws.logits[static_cast<std::size_t>(i)] - mx);
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double p = std::exp(ws.logits[static_cast<std::size_t>(i)] - mx) / z;
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        for (int i = 0; i < 5; ++i) CHECK(ws.av[static_cast<std::size_t>(i)] >= 0.0);
    }
}

TEST_CASE("training: zero learning rate leaves parameters unchanged") {
    NetworkConfig cfg;
    cfg.conv_channels = {2};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 10;
    cfg.input_cols = 8;
    cfg.alpha = 2;
    Network net(cfg, 21);
    const auto before = snapshot_params(net);
    std::vector<Spectrogram> data{random_spectrogram(10, 8, 1, 0), random_spectrogram(10, 8, 2, 1)};
    std::vector<int> labels{0, 1};
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.max_epochs = 1;
    train(net, data, labels, tc);
    CHECK(snapshot_params(net) == before);
}

TEST_CASE("training: same seed and data give identical weights") {
    NetworkConfig cfg;
    cfg.conv_channels = {3};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 12;
    cfg.input_cols = 10;
    cfg.alpha = 3;
    std::vector<Spectrogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) {
        data.push_back(random_spectrogram(12, 10, 300 + i, i % 3));
        labels.push_back(i % 3);
    }
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 4;
    tc.seed = 99;
    Network n1(cfg, 5), n2(cfg, 5);
    train(n1, data, labels, tc);
    train(n2, data, labels, tc);
    CHECK(snapshot_params(n1) == snapshot_params(n2));
}

TEST_CASE("training: rejects bad label sets") {
    NetworkConfig cfg;
    cfg.conv_channels = {2};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 8;
    cfg.input_cols = 8;
    cfg.alpha = 3;
    Network net(cfg, 1);
    std::vector<Spectrogram> data{random_spectrogram(8, 8, 1)};
    TrainConfig tc;
    CHECK_THROWS(train(net, data, {5}, tc));   // out of range
    CHECK_THROWS(train(net, data, {0}, tc));   // classes 1, 2 empty
}

TEST_CASE("training: a non-finite loss aborts with a diagnostic") {
    NetworkConfig cfg;
    cfg.conv_channels = {2};
    cfg.kernel_sizes = {3};
    cfg.input_rows = 8;
    cfg.input_cols = 8;
    cfg.alpha = 2;
    Network net(cfg, 17);
    std::vector<Spectrogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) {
        data.push_back(random_spectrogram(8, 8, 400 + i, i % 2));
        labels.push_back(i % 2);
    }
    data[3].values[10] = std::nan("");
    TrainConfig tc;
    tc.max_epochs = 2;
    CHECK_THROWS_WITH(train(net, data, labels, tc),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("training: overfits a small labeled set with the desk network") {
    NetworkConfig cfg = NetworkConfig::desk(4);
    std::vector<Spectrogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 32; ++i) {
        const int cls = i % 4;
        Spectrogram sp = random_spectrogram(64, 89, 700 + i, cls);
        // class-dependent energy stripe on top of the noise
        for (int r = cls * 12; r < cls * 12 + 12; ++r)
            for (int c = 20; c < 60; ++c)
                sp.values[static_cast<std::size_t>(r) * 89 + c] += 2.0;
        data.push_back(std::move(sp));
        labels.push_back(cls);
    }
    Network net(cfg, 1234);
    TrainConfig tc;
    tc.batch_size = 128;
    tc.max_epochs = 100;
    tc.early_stop_loss = 0.01;
    const TrainResult tr = train(net, data, labels, tc);
    REQUIRE(!tr.epoch_loss.empty());
    CHECK(tr.epoch_loss.back() < tr.epoch_loss.front());

    const auto avs = extract_avs(net, data);
    REQUIRE(avs.size() == 32);
    int correct = 0;
    for (const auto& rec : avs) {
        REQUIRE(rec.av.size() == 4);
        for (double v : rec.av) CHECK(v >= 0.0);
        if (rec.predicted == rec.label) ++correct;
    }
    CHECK(correct == 32);
}

TEST_CASE("checkpoint: round-trips parameters at f32 precision") {
    NetworkConfig cfg;
    cfg.conv_channels = {3, 2};
    cfg.kernel_sizes = {5, 3};
    cfg.input_rows = 16;
    cfg.input_cols = 20;
    cfg.alpha = 3;
    Network net(cfg, 77);
    // touch the running stats so they are nontrivial
    std::vector<Spectrogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) {
        data.push_back(random_spectrogram(16, 20, 600 + i, i % 3));
        labels.push_back(i % 3);
    }
    TrainConfig tc;
    tc.max_epochs = 1;
    train(net, data, labels, tc);

    const auto tmp = std::filesystem::temp_directory_path();
    const std::string path = (tmp / "orfid_ckpt.rfnn").string();
    save_checkpoint(net, {0, 2, 4}, path);
    LoadedCheckpoint back = load_checkpoint(path);
    CHECK(back.known_devices == std::vector<int>{0, 2, 4});
    CHECK(back.net.config().conv_channels == cfg.conv_channels);
    CHECK(back.net.config().kernel_sizes == cfg.kernel_sizes);
    CHECK(back.net.config().alpha == 3);

    std::vector<std::vector<double>> orig;
    net.for_each_param([&](const std::string&, std::vector<double>& w, std::vector<double>&) {
        orig.push_back(w);
    });
    std::size_t slot = 0;
    back.net.for_each_param([&](const std::string&, std::vector<double>& w,
                                std::vector<double>&) {
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(w[i] == static_cast<double>(static_cast<float>(orig[slot][i])));
        ++slot;
    });
    std::filesystem::remove(path);
}
