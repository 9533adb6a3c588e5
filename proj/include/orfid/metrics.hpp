#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace orfid {

// Label convention throughout evaluation: 0 marks "unseen" in both the truth
// and the prediction streams; known classes are 1..alpha.
constexpr int kUnseenLabel = 0;

struct ConfusionCounts {
    long kp = 0;  // known, correctly classified
    long kn = 0;  // known, misclassified (wrong class or rejected)
    long up = 0;  // unseen, rejected
    long un = 0;  // unseen, accepted as some known class

    long total() const { return kp + kn + up + un; }
};

inline ConfusionCounts count_confusion(const std::vector<int>& predictions,
                                       const std::vector<int>& truths) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("count_confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] == kUnseenLabel) {
            if (predictions[i] == kUnseenLabel)
                ++c.up;
            else
                ++c.un;
        } else {
            if (predictions[i] == truths[i])
                ++c.kp;
            else
                ++c.kn;
        }
    }
    return c;
}

struct Accuracies {
    std::optional<double> c_acc;  // KP / (KP+KN)
    std::optional<double> o_acc;  // UP / (UP+UN)
    double a_acc = 0.0;           // (KP+UP) / total
};

inline Accuracies accuracies(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("accuracies: empty report");
    Accuracies a;
    if (c.kp + c.kn > 0) a.c_acc = static_cast<double>(c.kp) / static_cast<double>(c.kp + c.kn);
    if (c.up + c.un > 0) a.o_acc = static_cast<double>(c.up) / static_cast<double>(c.up + c.un);
    a.a_acc = static_cast<double>(c.kp + c.up) / static_cast<double>(c.total());
    return a;
}

// The A-accuracy formula as printed in the source (numerator KP+KN); kept for
// fidelity audits behind the --literal-eq15 flag.
inline double literal_eq15_accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("accuracies: empty report");
    return static_cast<double>(c.kp + c.kn) / static_cast<double>(c.total());
}

// Openness = 1 - sqrt(2*N_TA / (N_TG + N_TE)); 0 for a closed set. Negative
// values are returned as-is (callers warn; the inputs are likely inconsistent).
inline double openness(int n_ta, int n_te, int n_tg) {
    if (n_ta < 1) throw std::invalid_argument("openness: n_ta must be >= 1");
    if (n_te + n_tg <= 0) throw std::invalid_argument("openness: n_te + n_tg must be > 0");
    return 1.0 - std::sqrt(2.0 * static_cast<double>(n_ta) /
                           static_cast<double>(n_tg + n_te));
}

struct EvalReport {
    ConfusionCounts counts;
    Accuracies acc;
    double a_acc_literal_eq15 = 0.0;
    double openness_value = 0.0;
    // config echo
    std::string metric;
    std::string mode;       // "paper", "standard", or "hard-threshold"
    std::size_t tail = 0;
    double beta = 0.0;
    std::optional<double> theta;  // set for hard-threshold runs
};

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["counts"] = {{"kp", r.counts.kp}, {"kn", r.counts.kn}, {"up", r.counts.up},
                   {"un", r.counts.un}};
    if (r.acc.c_acc) j["c_accuracy"] = *r.acc.c_acc;
    if (r.acc.o_acc) j["o_accuracy"] = *r.acc.o_acc;
    j["a_accuracy"] = r.acc.a_acc;
    j["a_accuracy_literal_eq15"] = r.a_acc_literal_eq15;
    j["openness"] = r.openness_value;
    j["config"] = {{"metric", r.metric}, {"mode", r.mode}, {"tail", r.tail}, {"beta", r.beta}};
    if (r.theta) j["config"]["theta"] = *r.theta;
    return j;
}

inline void write_report_json(const EvalReport& r, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_json(r).dump(2) << '\n';
}

}  // namespace orfid
