#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orfid/openset.hpp"
#include "orfid/pipeline.hpp"
#include "orfid/simrf.hpp"

namespace orfid {

// A run is a pure function of this config plus its input files. The JSON
// schema is strict: unknown keys are errors, named by path.
struct RunConfig {
    DatasetSpec dataset;
    StftConfig stft;
    NetworkConfig network;  // alpha is resolved from the known-device list
    TrainConfig train;
    OpenSetConfig openset;
    std::vector<int> known;  // empty = every device is known (closed set)
    std::optional<double> theta;
    bool literal_eq15 = false;
    SweepKind sweep_kind = SweepKind::Threshold;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object())
        throw std::runtime_error("config: expected an object at \"" + path + "\"");
    for (const auto& item : obj.items())
        if (!allowed.contains(item.key()))
            throw std::runtime_error("config: unknown key \"" +
                                     (path.empty() ? item.key() : path + "." + item.key()) +
                                     "\"");
}

template <typename T>
void read_field(const nlohmann::json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("config: bad value for \"" + path + "." + key + "\"");
    }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    detail::check_keys(j, "", {"dataset", "stft", "network", "train", "openset", "eval",
                               "sweep"});

    if (j.contains("dataset")) {
        const nlohmann::json& d = j.at("dataset");
        detail::check_keys(d, "dataset",
                           {"devices", "per_device", "content", "snr_db", "spread", "seed",
                            "length"});
        detail::read_field(d, "dataset", "devices", cfg.dataset.num_devices);
        detail::read_field(d, "dataset", "per_device", cfg.dataset.samples_per_device);
        if (d.contains("content")) {
            std::string s;
            detail::read_field(d, "dataset", "content", s);
            cfg.dataset.content = signal_content_from_string(s);
        }
        detail::read_field(d, "dataset", "snr_db", cfg.dataset.snr_db);
        detail::read_field(d, "dataset", "spread", cfg.dataset.fingerprint_spread);
        detail::read_field(d, "dataset", "seed", cfg.dataset.seed);
        detail::read_field(d, "dataset", "length", cfg.dataset.sample_len);
    }

    if (j.contains("stft")) {
        const nlohmann::json& d = j.at("stft");
        detail::check_keys(d, "stft", {"window_len", "hop", "log_eps"});
        detail::read_field(d, "stft", "window_len", cfg.stft.window_len);
        detail::read_field(d, "stft", "hop", cfg.stft.hop);
        detail::read_field(d, "stft", "log_eps", cfg.stft.log_eps);
    }

    if (j.contains("network")) {
        const nlohmann::json& d = j.at("network");
        detail::check_keys(d, "network",
                           {"preset", "conv_channels", "kernel_sizes", "bn_momentum", "bn_eps"});
        if (d.contains("preset")) {
            std::string preset;
            detail::read_field(d, "network", "preset", preset);
            if (preset == "desk")
                cfg.network = NetworkConfig::desk(cfg.network.alpha);
            else if (preset == "paper")
                cfg.network = NetworkConfig::paper(cfg.network.alpha);
            else
                throw std::runtime_error("config: bad value for \"network.preset\"");
        }
        detail::read_field(d, "network", "conv_channels", cfg.network.conv_channels);
        detail::read_field(d, "network", "kernel_sizes", cfg.network.kernel_sizes);
        detail::read_field(d, "network", "bn_momentum", cfg.network.bn_momentum);
        detail::read_field(d, "network", "bn_eps", cfg.network.bn_eps);
    }

    if (j.contains("train")) {
        const nlohmann::json& d = j.at("train");
        detail::check_keys(d, "train",
                           {"learning_rate", "batch_size", "max_epochs", "seed",
                            "early_stop_loss"});
        detail::read_field(d, "train", "learning_rate", cfg.train.learning_rate);
        detail::read_field(d, "train", "batch_size", cfg.train.batch_size);
        detail::read_field(d, "train", "max_epochs", cfg.train.max_epochs);
        detail::read_field(d, "train", "seed", cfg.train.seed);
        detail::read_field(d, "train", "early_stop_loss", cfg.train.early_stop_loss);
    }

    if (j.contains("openset")) {
        const nlohmann::json& d = j.at("openset");
        detail::check_keys(d, "openset", {"tail", "metric", "mode", "beta", "minkowski_p"});
        detail::read_field(d, "openset", "tail", cfg.openset.tail_size);
        if (d.contains("metric")) {
            std::string s;
            detail::read_field(d, "openset", "metric", s);
            cfg.openset.metric = metric_from_string(s);
        }
        if (d.contains("mode")) {
            std::string s;
            detail::read_field(d, "openset", "mode", s);
            cfg.openset.mode = mode_from_string(s);
        }
        detail::read_field(d, "openset", "beta", cfg.openset.beta);
        detail::read_field(d, "openset", "minkowski_p", cfg.openset.minkowski_p);
    }

    if (j.contains("eval")) {
        const nlohmann::json& d = j.at("eval");
        detail::check_keys(d, "eval", {"known", "theta", "literal_eq15"});
        detail::read_field(d, "eval", "known", cfg.known);
        if (d.contains("theta") && !d.at("theta").is_null()) {
            double t = 0.0;
            detail::read_field(d, "eval", "theta", t);
            cfg.theta = t;
        }
        detail::read_field(d, "eval", "literal_eq15", cfg.literal_eq15);
    }

    if (j.contains("sweep")) {
        const nlohmann::json& d = j.at("sweep");
        detail::check_keys(d, "sweep", {"kind"});
        if (d.contains("kind")) {
            std::string s;
            detail::read_field(d, "sweep", "kind", s);
            cfg.sweep_kind = sweep_kind_from_string(s);
        }
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// Fully resolved config, echoed into manifests and the output directory.
inline nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["dataset"] = {{"devices", cfg.dataset.num_devices},
                    {"per_device", cfg.dataset.samples_per_device},
                    {"content", to_string(cfg.dataset.content)},
                    {"snr_db", cfg.dataset.snr_db},
                    {"spread", cfg.dataset.fingerprint_spread},
                    {"seed", cfg.dataset.seed},
                    {"length", cfg.dataset.sample_len}};
    j["stft"] = {{"window_len", cfg.stft.window_len},
                 {"hop", cfg.stft.hop},
                 {"log_eps", cfg.stft.log_eps}};
    j["network"] = {{"conv_channels", cfg.network.conv_channels},
                    {"kernel_sizes", cfg.network.kernel_sizes},
                    {"bn_momentum", cfg.network.bn_momentum},
                    {"bn_eps", cfg.network.bn_eps}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"seed", cfg.train.seed},
                  {"early_stop_loss", cfg.train.early_stop_loss}};
    j["openset"] = {{"tail", cfg.openset.tail_size},
                    {"metric", to_string(cfg.openset.metric)},
                    {"mode", to_string(cfg.openset.mode)},
                    {"beta", cfg.openset.beta},
                    {"minkowski_p", cfg.openset.minkowski_p}};
    j["eval"] = {{"known", cfg.known}, {"literal_eq15", cfg.literal_eq15}};
    if (cfg.theta)
        j["eval"]["theta"] = *cfg.theta;
    else
        j["eval"]["theta"] = nullptr;
    j["sweep"] = {{"kind", to_string(cfg.sweep_kind)}};
    return j;
}

}  // namespace orfid
