#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orfid/metrics.hpp"
#include "orfid/openset.hpp"
#include "orfid/simrf.hpp"
#include "orfid/stft.hpp"
#include "orfid/train.hpp"

namespace orfid {

// Protocol: even per-device sample indices of the known devices train, odd
// ones test; every sample of an unseen device tests. Train labels are class
// indices (position in the known list); test labels use 0 = unseen,
// 1..alpha = known.
struct SplitSpectrograms {
    std::vector<Spectrogram> train;
    std::vector<int> train_labels;
    std::vector<Spectrogram> test;
    std::vector<int> test_truth;
};

inline void validate_known_devices(const std::vector<int>& known, int num_classes) {
    if (known.empty()) throw std::invalid_argument("known device list is empty");
    std::vector<int> sorted = known;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("known device list has duplicates");
    for (int d : known)
        if (d < 0 || d >= num_classes)
            throw std::invalid_argument("known device " + std::to_string(d) + " out of range");
}

inline std::vector<int> all_devices(const Dataset& ds) {
    std::vector<int> v(static_cast<std::size_t>(ds.num_classes));
    for (int i = 0; i < ds.num_classes; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

inline SplitSpectrograms split_spectrograms(const Dataset& ds, const std::vector<int>& known,
                                            const StftConfig& stft_cfg) {
    validate_known_devices(known, ds.num_classes);
    std::vector<int> device_to_class(static_cast<std::size_t>(ds.num_classes), -1);
    for (std::size_t c = 0; c < known.size(); ++c)
        device_to_class[static_cast<std::size_t>(known[c])] = static_cast<int>(c);

    SplitSpectrograms out;
    std::vector<int> per_device_count(static_cast<std::size_t>(ds.num_classes), 0);
    for (const ComplexSignal& sig : ds.samples) {
        if (sig.label < 0 || sig.label >= ds.num_classes)
            throw std::runtime_error("dataset: record label out of range");
        const int idx = per_device_count[static_cast<std::size_t>(sig.label)]++;
        const int cls = device_to_class[static_cast<std::size_t>(sig.label)];
        Spectrogram sp = make_spectrogram(sig, stft_cfg);
        if (cls >= 0 && idx % 2 == 0) {
            sp.label = cls;
            out.train_labels.push_back(cls);
            out.train.push_back(std::move(sp));
        } else {
            const int truth = cls >= 0 ? cls + 1 : kUnseenLabel;
            sp.label = truth;
            out.test_truth.push_back(truth);
            out.test.push_back(std::move(sp));
        }
    }
    return out;
}

// Training AVs (labels are class indices) and test AVs (labels are truth
// labels, 0 = unseen).
struct SplitAvs {
    std::vector<ActivationRecord> train;
    std::vector<ActivationRecord> test;
};

inline SplitAvs extract_split_avs(Network& net, const SplitSpectrograms& split) {
    SplitAvs avs;
    avs.train = extract_avs(net, split.train);
    avs.test = extract_avs(net, split.test);
    return avs;
}

inline int openness_n_te(const Dataset& ds) { return ds.num_classes; }

inline EvalReport evaluate_openmax(const std::vector<ActivationRecord>& test_avs,
                                   const OpenSetModel& model, int n_te) {
    std::vector<int> preds, truths;
    preds.reserve(test_avs.size());
    truths.reserve(test_avs.size());
    for (const ActivationRecord& rec : test_avs) {
        preds.push_back(predict(rec.av, model));
        truths.push_back(rec.label);
    }
    EvalReport r;
    r.counts = count_confusion(preds, truths);
    r.acc = accuracies(r.counts);
    r.a_acc_literal_eq15 = literal_eq15_accuracy(r.counts);
    r.openness_value = openness(model.alpha, n_te, n_te);
    r.metric = to_string(model.metric);
    r.mode = to_string(model.mode);
    r.tail = model.tail_size;
    r.beta = model.beta;
    return r;
}

inline EvalReport evaluate_hard_threshold(const std::vector<ActivationRecord>& test_avs,
                                          const OpenSetModel& model, double theta, int n_te) {
    std::vector<int> preds, truths;
    preds.reserve(test_avs.size());
    truths.reserve(test_avs.size());
    for (const ActivationRecord& rec : test_avs) {
        preds.push_back(hard_threshold_predict(rec.av, model, theta));
        truths.push_back(rec.label);
    }
    EvalReport r;
    r.counts = count_confusion(preds, truths);
    r.acc = accuracies(r.counts);
    r.a_acc_literal_eq15 = literal_eq15_accuracy(r.counts);
    r.openness_value = openness(model.alpha, n_te, n_te);
    r.metric = to_string(model.metric);
    r.mode = "hard-threshold";
    r.tail = model.tail_size;
    r.beta = model.beta;
    r.theta = theta;
    return r;
}

// AVs used for EVT fitting come from the training split, exactly the samples
// the network was trained on.
inline OpenSetModel fit_openset_from_checkpoint(Network& net, const Dataset& ds,
                                                const std::vector<int>& known,
                                                const StftConfig& stft_cfg,
                                                const OpenSetConfig& os_cfg) {
    const SplitSpectrograms split = split_spectrograms(ds, known, stft_cfg);
    std::vector<ActivationRecord> train_avs = extract_avs(net, split.train);
    return fit_openset_model(train_avs, static_cast<int>(known.size()), os_cfg);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepKind { Threshold, TailSize, Openness, Metric };

inline const char* to_string(SweepKind k) {
    switch (k) {
        case SweepKind::Threshold: return "threshold";
        case SweepKind::TailSize: return "tail";
        case SweepKind::Openness: return "openness";
        case SweepKind::Metric: return "metric";
    }
    return "?";
}

inline SweepKind sweep_kind_from_string(const std::string& s) {
    if (s == "threshold") return SweepKind::Threshold;
    if (s == "tail") return SweepKind::TailSize;
    if (s == "openness") return SweepKind::Openness;
    if (s == "metric") return SweepKind::Metric;
    throw std::invalid_argument("unknown sweep kind: " + s);
}

struct SweepRow {
    std::string kind;
    std::string param;
    EvalReport report;
};

inline const std::vector<double>& threshold_grid() {
    static const std::vector<double> grid{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
    return grid;
}

inline const std::vector<std::size_t>& tail_grid() {
    static const std::vector<std::size_t> grid{10, 20, 30, 40, 50, 60};
    return grid;
}

inline const std::vector<DistanceMetric>& metric_grid() {
    static const std::vector<DistanceMetric> grid{
        DistanceMetric::Euclidean,           DistanceMetric::Cosine,
        DistanceMetric::EuclideanPlusCosine, DistanceMetric::Canberra,
        DistanceMetric::Chebyshev,           DistanceMetric::Minkowski};
    return grid;
}

struct SweepInputs {
    const Dataset* dataset = nullptr;
    Network* net = nullptr;            // trained checkpoint (not used by Openness)
    std::vector<int> known;            // devices the checkpoint was trained on
    StftConfig stft_cfg;
    OpenSetConfig os_cfg;
    NetworkConfig net_cfg;             // template for Openness retraining
    TrainConfig train_cfg;
};

inline std::vector<SweepRow> run_sweep(SweepKind kind, const SweepInputs& in) {
    if (!in.dataset) throw std::invalid_argument("sweep: dataset required");
    std::vector<SweepRow> rows;
    const int n_te = openness_n_te(*in.dataset);

    if (kind == SweepKind::Openness) {
        // Known/unseen splits 5/1, 4/2, 3/3 with a retrained network per
        // split (alpha changes the AV dimension).
        for (int k : {5, 4, 3}) {
            if (k >= in.dataset->num_classes)
                throw std::invalid_argument("sweep: openness split needs more devices");
            std::vector<int> known(static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) known[static_cast<std::size_t>(i)] = i;
            const SplitSpectrograms split =
                split_spectrograms(*in.dataset, known, in.stft_cfg);
            NetworkConfig ncfg = in.net_cfg;
            ncfg.alpha = k;
            Network net(ncfg, in.train_cfg.seed);
            train(net, split.train, split.train_labels, in.train_cfg);
            const SplitAvs avs = extract_split_avs(net, split);
            const OpenSetModel model = fit_openset_model(avs.train, k, in.os_cfg);
            SweepRow row;
            row.kind = "openness";
            row.param = std::to_string(k);
            row.report = evaluate_openmax(avs.test, model, n_te);
            rows.push_back(std::move(row));
        }
        return rows;
    }

    if (!in.net) throw std::invalid_argument("sweep: trained network required");
    const SplitSpectrograms split = split_spectrograms(*in.dataset, in.known, in.stft_cfg);
    const SplitAvs avs = extract_split_avs(*in.net, split);
    const int alpha = static_cast<int>(in.known.size());

    switch (kind) {
        case SweepKind::Threshold: {
            const OpenSetModel model = fit_openset_model(avs.train, alpha, in.os_cfg);
            for (double theta : threshold_grid()) {
                SweepRow row;
                row.kind = "threshold";
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%g", theta);
                row.param = buf;
                row.report = evaluate_hard_threshold(avs.test, model, theta, n_te);
                rows.push_back(std::move(row));
            }
            break;
        }
        case SweepKind::TailSize: {
            for (std::size_t m : tail_grid()) {
                OpenSetConfig cfg = in.os_cfg;
                cfg.tail_size = m;
                const OpenSetModel model = fit_openset_model(avs.train, alpha, cfg);
                SweepRow row;
                row.kind = "tail";
                row.param = std::to_string(m);
                row.report = evaluate_openmax(avs.test, model, n_te);
                rows.push_back(std::move(row));
            }
            break;
        }
        case SweepKind::Metric: {
            for (DistanceMetric metric : metric_grid()) {
                OpenSetConfig cfg = in.os_cfg;
                cfg.metric = metric;
                cfg.beta = 0.0;  // re-balance per metric
                const OpenSetModel model = fit_openset_model(avs.train, alpha, cfg);
                SweepRow row;
                row.kind = "metric";
                row.param = to_string(metric);
                row.report = evaluate_openmax(avs.test, model, n_te);
                rows.push_back(std::move(row));
            }
            break;
        }
        case SweepKind::Openness:
            break;  // handled above
    }
    return rows;
}

// CSV with a fixed header; o_accuracy is empty when the split has no unseen
// samples. %.17g keeps doubles round-trippable.
inline const char* kSweepCsvHeader =
    "kind,param,kp,kn,up,un,c_accuracy,o_accuracy,a_accuracy,openness,metric,mode,tail,beta,"
    "theta";

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << kSweepCsvHeader << '\n';
    for (const SweepRow& row : rows) {
        const EvalReport& r = row.report;
        out << row.kind << ',' << row.param << ',' << r.counts.kp << ',' << r.counts.kn << ','
            << r.counts.up << ',' << r.counts.un << ','
            << (r.acc.c_acc ? fmt(*r.acc.c_acc) : std::string()) << ','
            << (r.acc.o_acc ? fmt(*r.acc.o_acc) : std::string()) << ',' << fmt(r.acc.a_acc)
            << ',' << fmt(r.openness_value) << ',' << r.metric << ',' << r.mode << ',' << r.tail
            << ',' << fmt(r.beta) << ',' << (r.theta ? fmt(*r.theta) : std::string()) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Run manifest: resolved config + content hashes of inputs and outputs,
// written next to each subcommand's primary output.
// ---------------------------------------------------------------------------

inline void write_manifest(const std::string& path, const std::string& command,
                           const nlohmann::json& resolved_config,
                           const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = resolved_config;
    nlohmann::json jin = nlohmann::json::object();
    for (const std::string& p : inputs) jin[p] = file_hash_hex(p);
    nlohmann::json jout = nlohmann::json::object();
    for (const std::string& p : outputs) jout[p] = file_hash_hex(p);
    j["inputs"] = std::move(jin);
    j["outputs"] = std::move(jout);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace orfid
