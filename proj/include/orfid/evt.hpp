#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace orfid {

// Two-parameter Weibull over distances shifted by a location tau. CDF and PDF
// are clamped to 0 for d <= tau, which keeps the CDF monotone and avoids the
// non-integer-power hole of the raw formula below the location.
struct WeibullModel {
    double k = 1.0;       // shape
    double lambda = 1.0;  // scale
    double tau = 0.0;     // location
    std::size_t tail_size = 0;

    double cdf(double d) const {
        if (d <= tau) return 0.0;
        return 1.0 - std::exp(-std::pow((d - tau) / lambda, k));
    }

    double pdf(double d) const {
        if (d <= tau) return 0.0;
        const double z = (d - tau) / lambda;
        return (k / lambda) * std::pow(z, k - 1.0) * std::exp(-std::pow(z, k));
    }
};

inline std::pair<double, double> weibull_pdf_cdf(double d, const WeibullModel& w) {
    return {w.pdf(d), w.cdf(d)};
}

namespace detail {

// Profile-likelihood equation for the shape parameter on the shifted tail:
//   g(k) = sum(x^k ln x)/sum(x^k) - 1/k - mean(ln x)
// Scale-invariant, so it is evaluated on u = x / max(x) to dodge overflow.
inline double weibull_profile(const std::vector<double>& u, const std::vector<double>& log_u,
                              double mean_log_u, double k) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double uk = std::pow(u[i], k);
        num += uk * log_u[i];
        den += uk;
    }
    return num / den - 1.0 / k - mean_log_u;
}

}  // namespace detail

// FitHigh: Weibull MLE on the m largest distances. tau is pinned just below
// the smallest tail value (delta = 1e-6 * max(1, max(tail))) rather than
// fitted; the shape equation is solved by bisection on k in [1e-2, 1e2] and
// lambda follows in closed form.
inline WeibullModel fit_high(std::vector<double> distances, std::size_t m) {
    if (m < 3) throw std::invalid_argument("fit_high: tail size must be >= 3");
    if (distances.size() < m)
        throw std::invalid_argument("fit_high: need at least m distances");
    for (double d : distances)
        if (!std::isfinite(d) || d < 0.0)
            throw std::invalid_argument("fit_high: distances must be finite and >= 0");

    std::nth_element(distances.begin(), distances.end() - static_cast<std::ptrdiff_t>(m),
                     distances.end());
    std::vector<double> tail(distances.end() - static_cast<std::ptrdiff_t>(m), distances.end());
    const double tail_min = *std::min_element(tail.begin(), tail.end());
    const double tail_max = *std::max_element(tail.begin(), tail.end());
    if (tail_max == tail_min)
        throw std::invalid_argument("fit_high: degenerate tail (all values equal)");

    const double delta = 1e-6 * std::max(1.0, tail_max);
    const double tau = tail_min - delta;

    const double x_max = tail_max - tau;
    std::vector<double> u(m), log_u(m);
    double mean_log_u = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        u[i] = (tail[i] - tau) / x_max;
        log_u[i] = std::log(u[i]);
        mean_log_u += log_u[i];
    }
    mean_log_u /= static_cast<double>(m);

    double lo = 1e-2, hi = 1e2;
    double glo = detail::weibull_profile(u, log_u, mean_log_u, lo);
    double ghi = detail::weibull_profile(u, log_u, mean_log_u, hi);
    if (!(glo < 0.0 && ghi > 0.0))
        throw std::runtime_error("fit_high: bisection bracket failure (g(" +
                                 std::to_string(lo) + ")=" + std::to_string(glo) + ", g(" +
                                 std::to_string(hi) + ")=" + std::to_string(ghi) + ")");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = detail::weibull_profile(u, log_u, mean_log_u, mid);
        if (gm < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double k = 0.5 * (lo + hi);

    double mean_uk = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean_uk += std::pow(u[i], k);
    mean_uk /= static_cast<double>(m);
    const double lambda = std::pow(mean_uk, 1.0 / k) * x_max;

    WeibullModel w;
    w.k = k;
    w.lambda = lambda;
    w.tau = tau;
    w.tail_size = m;
    return w;
}

}  // namespace orfid
