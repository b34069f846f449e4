#include "provmark/detect/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace provmark::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 10000;

double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps)
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_p: series did not converge");
}

double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps)
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_q: continued fraction did not converge");
}

}  // namespace

double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("gamma_p: a must be positive");
    if (x < 0.0) throw std::invalid_argument("gamma_p: x must be non-negative");
    if (x == 0.0) return 0.0;
    return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_contfrac(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("gamma_q: a must be positive");
    if (x < 0.0) throw std::invalid_argument("gamma_q: x must be non-negative");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_contfrac(a, x);
}

double chi_squared_tail(double statistic, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("chi_squared_tail: df must be positive");
    if (!std::isfinite(statistic)) throw std::invalid_argument("chi_squared_tail: non-finite statistic");
    if (statistic <= 0.0) return 1.0;
    return gamma_q(df / 2.0, statistic / 2.0);
}

double log_hypergeom_pmf(int64_t k, int64_t row1, int64_t row2, int64_t col1) {
    auto lchoose = [](int64_t n, int64_t r) {
        return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(r + 1)) -
               std::lgamma(static_cast<double>(n - r + 1));
    };
    int64_t total = row1 + row2;
    return lchoose(row1, k) + lchoose(row2, col1 - k) - lchoose(total, col1);
}

double fisher_exact_2x2(int64_t a, int64_t b, int64_t c, int64_t d) {
    if (a < 0 || b < 0 || c < 0 || d < 0)
        throw std::invalid_argument("fisher_exact: cells must be non-negative");
    int64_t total = a + b + c + d;
    if (total == 0) throw std::invalid_argument("fisher_exact: all-zero table");
    int64_t row1 = a + b, row2 = c + d, col1 = a + c;

    // one free cell once the margins are fixed
    int64_t k_lo = std::max<int64_t>(0, col1 - row2);
    int64_t k_hi = std::min(row1, col1);

    double log_p_obs = log_hypergeom_pmf(a, row1, row2, col1);
    // ties between equal-probability tables are decided with a small relative
    // slack, wide enough for lgamma rounding but below any true pmf gap at
    // the table sizes the exact-enumeration oracle covers
    const double slack = 1e-12;
    double p = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k) {
        double lp = log_hypergeom_pmf(k, row1, row2, col1);
        if (lp <= log_p_obs + std::log1p(slack)) p += std::exp(lp);
    }
    return std::min(1.0, p);
}

double ks_distance_uniform(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("ks_distance_uniform: empty sample");
    std::sort(sample.begin(), sample.end());
    double n = static_cast<double>(sample.size());
    double dmax = 0.0;
    for (size_t i = 0; i < sample.size(); ++i) {
        double lo = static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n;
        dmax = std::max(dmax, std::max(std::fabs(sample[i] - lo), std::fabs(sample[i] - hi)));
    }
    return dmax;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
    if (x.size() < 2) return std::nullopt;
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    double m = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(m)) throw std::invalid_argument("softmax: non-finite logits");
    std::vector<double> p(logits.size());
    double z = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

std::string format_p_value(double p) {
    if (p < 1e-300) return "<1e-300";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", p);
    return buf;
}

}  // namespace provmark::stats
