#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orfid/evt.hpp"
#include "orfid/net.hpp"

namespace orfid {

enum class DistanceMetric : std::uint8_t {
    EuclideanPlusCosine,
    Euclidean,
    Cosine,
    Canberra,
    Chebyshev,
    Minkowski,
};

enum class ScoringMode : std::uint8_t { PaperLiteral, StandardOpenMax };

inline const char* to_string(DistanceMetric m) {
    switch (m) {
        case DistanceMetric::EuclideanPlusCosine: return "eucos";
        case DistanceMetric::Euclidean: return "euclidean";
        case DistanceMetric::Cosine: return "cosine";
        case DistanceMetric::Canberra: return "canberra";
        case DistanceMetric::Chebyshev: return "chebyshev";
        case DistanceMetric::Minkowski: return "minkowski";
    }
    return "?";
}

inline DistanceMetric metric_from_string(const std::string& s) {
    if (s == "eucos") return DistanceMetric::EuclideanPlusCosine;
    if (s == "euclidean") return DistanceMetric::Euclidean;
    if (s == "cosine") return DistanceMetric::Cosine;
    if (s == "canberra") return DistanceMetric::Canberra;
    if (s == "chebyshev") return DistanceMetric::Chebyshev;
    if (s == "minkowski") return DistanceMetric::Minkowski;
    throw std::invalid_argument("unknown distance metric: " + s);
}

inline const char* to_string(ScoringMode m) {
    return m == ScoringMode::PaperLiteral ? "paper" : "standard";
}

inline ScoringMode mode_from_string(const std::string& s) {
    if (s == "paper") return ScoringMode::PaperLiteral;
    if (s == "standard") return ScoringMode::StandardOpenMax;
    throw std::invalid_argument("unknown scoring mode: " + s);
}

struct OpenSetConfig {
    std::size_t tail_size = 20;
    DistanceMetric metric = DistanceMetric::EuclideanPlusCosine;
    ScoringMode mode = ScoringMode::PaperLiteral;
    double beta = 0.0;  // <= 0 requests the auto-balanced weight
    double minkowski_p = 3.0;
};

struct ClassModel {
    int class_index = 0;
    std::vector<double> mav;
    WeibullModel weibull;
    int r = 0;  // correctly classified training samples behind this model
};

struct OpenSetModel {
    int alpha = 0;
    double beta = 1.0;
    DistanceMetric metric = DistanceMetric::EuclideanPlusCosine;
    double minkowski_p = 3.0;
    ScoringMode mode = ScoringMode::PaperLiteral;
    std::size_t tail_size = 20;
    std::vector<ClassModel> classes;
};

struct OpenSetAV {
    std::vector<double> values;  // length alpha+1, index 0 = unseen score
};

namespace detail {

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace detail

// Distance between an AV and a class MAV. The default combines a weighted
// Euclidean term with cosine dissimilarity: beta*||v-mu|| - cos(v,mu) + 1.
inline double distance(const std::vector<double>& v, const std::vector<double>& mu,
                       DistanceMetric metric, double beta, double minkowski_p = 3.0) {
    if (v.size() != mu.size()) throw std::invalid_argument("distance: length mismatch");
    const std::size_t n = v.size();
    switch (metric) {
        case DistanceMetric::EuclideanPlusCosine: {
            const double nv = detail::norm2(v), nm = detail::norm2(mu);
            if (nv == 0.0 || nm == 0.0)
                throw std::invalid_argument("distance: zero vector with cosine metric");
            double d2 = 0.0, dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = v[i] - mu[i];
                d2 += d * d;
                dot += v[i] * mu[i];
            }
            return beta * std::sqrt(d2) - dot / (nv * nm) + 1.0;
        }
        case DistanceMetric::Euclidean: {
            double d2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = v[i] - mu[i];
                d2 += d * d;
            }
            return std::sqrt(d2);
        }
        case DistanceMetric::Cosine: {
            const double nv = detail::norm2(v), nm = detail::norm2(mu);
            if (nv == 0.0 || nm == 0.0)
                throw std::invalid_argument("distance: zero vector with cosine metric");
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += v[i] * mu[i];
            return 1.0 - dot / (nv * nm);
        }
        case DistanceMetric::Canberra: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double den = std::abs(v[i]) + std::abs(mu[i]);
                if (den > 0.0) s += std::abs(v[i] - mu[i]) / den;
            }
            return s;
        }
        case DistanceMetric::Chebyshev: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(v[i] - mu[i]));
            return s;
        }
        case DistanceMetric::Minkowski: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::pow(std::abs(v[i] - mu[i]), minkowski_p);
            return std::pow(s, 1.0 / minkowski_p);
        }
    }
    throw std::logic_error("distance: unreachable");
}

inline double distance(const std::vector<double>& v, const ClassModel& cls,
                       const OpenSetModel& model) {
    return distance(v, cls.mav, model.metric, model.beta, model.minkowski_p);
}

// AVs of correctly classified samples, grouped by class. Errors if any class
// ends up with fewer than tail_size of them.
inline std::vector<std::vector<const ActivationRecord*>> collect_correct(
    const std::vector<ActivationRecord>& records, int alpha, std::size_t tail_size) {
    std::vector<std::vector<const ActivationRecord*>> per_class(alpha);
    for (const ActivationRecord& rec : records) {
        if (rec.label < 0 || rec.label >= alpha || rec.predicted < 0 || rec.predicted >= alpha)
            throw std::invalid_argument("collect_correct: label or prediction out of range");
        if (rec.predicted == rec.label)
            per_class[static_cast<std::size_t>(rec.label)].push_back(&rec);
    }
    for (int c = 0; c < alpha; ++c)
        if (per_class[static_cast<std::size_t>(c)].size() < tail_size)
            throw std::runtime_error("collect_correct: insufficient data for class " +
                                     std::to_string(c) + " (" +
                                     std::to_string(per_class[static_cast<std::size_t>(c)].size()) +
                                     " correct, tail needs " + std::to_string(tail_size) + ")");
    return per_class;
}

inline std::vector<double> mean_av(const std::vector<const ActivationRecord*>& avs) {
    if (avs.empty()) throw std::invalid_argument("mean_av: empty class");
    std::vector<double> mu(avs.front()->av.size(), 0.0);
    for (const ActivationRecord* rec : avs)
        for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += rec->av[i];
    for (double& x : mu) x /= static_cast<double>(avs.size());
    return mu;
}

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// beta such that the median weighted-Euclidean term matches the median cosine
// term (1 - cos + 1) over all correct training AVs.
inline double auto_balance_beta(
    const std::vector<std::vector<const ActivationRecord*>>& per_class,
    const std::vector<std::vector<double>>& mavs) {
    std::vector<double> eucl, cos_term;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const std::vector<double>& mu = mavs[c];
        for (const ActivationRecord* rec : per_class[c]) {
            eucl.push_back(distance(rec->av, mu, DistanceMetric::Euclidean, 0.0));
            cos_term.push_back(1.0 + distance(rec->av, mu, DistanceMetric::Cosine, 0.0));
        }
    }
    const double med_e = median(eucl);
    if (med_e < 1e-30) return 1.0;
    return median(cos_term) / med_e;
}

}  // namespace detail

// Per-class MAVs and Weibull tail models from training AVs.
inline OpenSetModel fit_openset_model(const std::vector<ActivationRecord>& records, int alpha,
                                      const OpenSetConfig& cfg) {
    const auto per_class = collect_correct(records, alpha, cfg.tail_size);
    std::vector<std::vector<double>> mavs(per_class.size());
    for (std::size_t c = 0; c < per_class.size(); ++c) mavs[c] = mean_av(per_class[c]);

    OpenSetModel model;
    model.alpha = alpha;
    model.metric = cfg.metric;
    model.minkowski_p = cfg.minkowski_p;
    model.mode = cfg.mode;
    model.tail_size = cfg.tail_size;
    if (cfg.metric == DistanceMetric::EuclideanPlusCosine)
        model.beta = cfg.beta > 0.0 ? cfg.beta : detail::auto_balance_beta(per_class, mavs);
    else
        model.beta = cfg.beta > 0.0 ? cfg.beta : 1.0;

    model.classes.resize(per_class.size());
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        ClassModel& cls = model.classes[c];
        cls.class_index = static_cast<int>(c);
        cls.mav = std::move(mavs[c]);
        cls.r = static_cast<int>(per_class[c].size());
        std::vector<double> dists;
        dists.reserve(per_class[c].size());
        for (const ActivationRecord* rec : per_class[c])
            dists.push_back(distance(rec->av, cls.mav, model.metric, model.beta,
                                     model.minkowski_p));
        cls.weibull = fit_high(std::move(dists), cfg.tail_size);
    }
    return model;
}

// 1-based ascending ranks: the largest activation gets alpha, ties give the
// lower class index the lower rank.
inline std::vector<int> rank_weights(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&v](int a, int b) {
        if (v[static_cast<std::size_t>(a)] != v[static_cast<std::size_t>(b)])
            return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)];
        return a < b;
    });
    std::vector<int> eta(v.size());
    for (int pos = 0; pos < n; ++pos) eta[static_cast<std::size_t>(idx[static_cast<std::size_t>(pos)])] = pos + 1;
    return eta;
}

// Rank-weighted Weibull CDF: Omega' = (eta + (alpha-eta)*Omega(d)) / alpha,
// which is 1 - ((alpha-eta)/alpha)(1 - Omega(d)) arranged so the bounds
// eta/alpha and 1 are exact. Negative d returns 0.
inline double revised_cdf(double d, int eta, const WeibullModel& w, int alpha) {
    if (eta < 1 || eta > alpha) throw std::invalid_argument("revised_cdf: eta out of range");
    if (d < 0.0) return 0.0;
    const double omega = w.cdf(d);
    return (static_cast<double>(eta) + static_cast<double>(alpha - eta) * omega) /
           static_cast<double>(alpha);
}

// Open-set AV with the synthesized unseen score at index 0. PaperLiteral
// multiplies each activation by its revised CDF and routes the complement to
// index 0. StandardOpenMax uses the reference OpenMax weighting
// w_i = (eta_i/alpha) * Omega_i(d_i): the top-ranked activation is revised the
// most, so far-from-every-MAV samples pile their mass into the unseen score.
inline OpenSetAV openset_av(const std::vector<double>& v, const OpenSetModel& model) {
    const int alpha = model.alpha;
    if (static_cast<int>(v.size()) != alpha)
        throw std::invalid_argument("openset_av: AV length mismatch");
    if (model.classes.size() != static_cast<std::size_t>(alpha))
        throw std::runtime_error("openset_av: model not fitted");

    OpenSetAV out;
    out.values.assign(static_cast<std::size_t>(alpha) + 1, 0.0);
    const bool all_zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    if (all_zero) return out;

    const std::vector<int> eta = rank_weights(v);
    double v0 = 0.0;
    for (int i = 0; i < alpha; ++i) {
        const ClassModel& cls = model.classes[static_cast<std::size_t>(i)];
        const double d = distance(v, cls, model);
        const double vi = v[static_cast<std::size_t>(i)];
        if (model.mode == ScoringMode::PaperLiteral) {
            const double rev = revised_cdf(d, eta[static_cast<std::size_t>(i)], cls.weibull, alpha);
            out.values[static_cast<std::size_t>(i) + 1] = vi * rev;
            v0 += vi * (1.0 - rev);
        } else {
            const double w = (static_cast<double>(eta[static_cast<std::size_t>(i)]) /
                              static_cast<double>(alpha)) *
                             cls.weibull.cdf(d);
            out.values[static_cast<std::size_t>(i) + 1] = vi * (1.0 - w);
            v0 += vi * w;
        }
    }
    out.values[0] = v0;
    return out;
}

// Softmax over the alpha+1 open-set scores, max-subtracted.
inline std::vector<double> openmax_probs(const OpenSetAV& vhat) {
    std::vector<double> p(vhat.values.size());
    double mx = vhat.values[0];
    for (double x : vhat.values) mx = std::max(mx, x);
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(vhat.values[i] - mx);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

// Argmax of the OpenMax probabilities; returns 0 for unseen, 1..alpha for the
// known classes. Ties go to the known class with the smaller index, and to a
// known class over unseen.
inline int predict(const std::vector<double>& av, const OpenSetModel& model) {
    const std::vector<double> p = openmax_probs(openset_av(av, model));
    int best = 1;
    for (int i = 2; i <= model.alpha; ++i)
        if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(best)]) best = i;
    if (p[0] > p[static_cast<std::size_t>(best)]) best = 0;
    return best;
}

// Baseline: reject as unseen when the distance to the argmax class's MAV
// exceeds theta. An all-zero AV has no usable direction and is rejected.
inline int hard_threshold_predict(const std::vector<double>& av, const OpenSetModel& model,
                                  double theta) {
    if (static_cast<int>(av.size()) != model.alpha)
        throw std::invalid_argument("hard_threshold_predict: AV length mismatch");
    if (std::all_of(av.begin(), av.end(), [](double x) { return x == 0.0; })) return 0;
    const int star = argmax_lowest(av.data(), model.alpha);
    const double d = distance(av, model.classes[static_cast<std::size_t>(star)], model);
    return d > theta ? 0 : star + 1;
}

// ---------------------------------------------------------------------------
// OSM model file: JSON {alpha, beta, metric, mode, tail_size, classes:
// [{index, mav, r, weibull:{k, lambda, tau}}]}; "minkowski_p" appears only
// for the minkowski metric.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const OpenSetModel& model) {
    nlohmann::json j;
    j["alpha"] = model.alpha;
    j["beta"] = model.beta;
    j["metric"] = to_string(model.metric);
    j["mode"] = to_string(model.mode);
    j["tail_size"] = model.tail_size;
    if (model.metric == DistanceMetric::Minkowski) j["minkowski_p"] = model.minkowski_p;
    nlohmann::json classes = nlohmann::json::array();
    for (const ClassModel& cls : model.classes) {
        nlohmann::json c;
        c["index"] = cls.class_index;
        c["mav"] = cls.mav;
        c["r"] = cls.r;
        c["weibull"] = {{"k", cls.weibull.k}, {"lambda", cls.weibull.lambda},
                        {"tau", cls.weibull.tau}};
        classes.push_back(std::move(c));
    }
    j["classes"] = std::move(classes);
    return j;
}

inline OpenSetModel openset_model_from_json(const nlohmann::json& j) {
    OpenSetModel model;
    model.alpha = j.at("alpha").get<int>();
    model.beta = j.at("beta").get<double>();
    model.metric = metric_from_string(j.at("metric").get<std::string>());
    model.mode = mode_from_string(j.at("mode").get<std::string>());
    model.tail_size = j.at("tail_size").get<std::size_t>();
    model.minkowski_p = j.value("minkowski_p", 3.0);
    for (const nlohmann::json& c : j.at("classes")) {
        ClassModel cls;
        cls.class_index = c.at("index").get<int>();
        cls.mav = c.at("mav").get<std::vector<double>>();
        cls.r = c.at("r").get<int>();
        cls.weibull.k = c.at("weibull").at("k").get<double>();
        cls.weibull.lambda = c.at("weibull").at("lambda").get<double>();
        cls.weibull.tau = c.at("weibull").at("tau").get<double>();
        cls.weibull.tail_size = model.tail_size;
        model.classes.push_back(std::move(cls));
    }
    if (model.classes.size() != static_cast<std::size_t>(model.alpha))
        throw std::runtime_error("osm: class count does not match alpha");
    return model;
}

inline void write_osm(const OpenSetModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_json(model).dump(2) << '\n';
}

inline OpenSetModel read_osm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return openset_model_from_json(j);
}

}  // namespace orfid
