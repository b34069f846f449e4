#include "provmark/detect/fid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace provmark::detect {

namespace {

// row-major d x d product
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           int64_t d) {
    std::vector<double> c(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t k = 0; k < d; ++k) {
            const double aik = a[static_cast<size_t>(i * d + k)];
            if (aik == 0.0) continue;
            for (int64_t j = 0; j < d; ++j)
                c[static_cast<size_t>(i * d + j)] += aik * b[static_cast<size_t>(k * d + j)];
        }
    return c;
}

double off_diagonal_norm(const std::vector<double>& a, int64_t d) {
    double s = 0;
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j)
            if (i != j) s += a[static_cast<size_t>(i * d + j)] * a[static_cast<size_t>(i * d + j)];
    return std::sqrt(s);
}

// mean row and unbiased covariance of an N x D feature matrix, in double
void gaussian_fit(const Tensor<float>& f, std::vector<double>& mu, std::vector<double>& cov) {
    const int64_t n = f.dim(0), d = f.dim(1);
    mu.assign(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += f.at2(i, j);
    for (auto& m : mu) m /= static_cast<double>(n);

    cov.assign(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
    std::vector<double> centered(static_cast<size_t>(d));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j)
            centered[static_cast<size_t>(j)] = f.at2(i, j) - mu[static_cast<size_t>(j)];
        for (int64_t j = 0; j < d; ++j) {
            const double cj = centered[static_cast<size_t>(j)];
            if (cj == 0.0) continue;
            for (int64_t k = j; k < d; ++k)
                cov[static_cast<size_t>(j * d + k)] += cj * centered[static_cast<size_t>(k)];
        }
    }
    const double scale = 1.0 / static_cast<double>(n - 1);
    for (int64_t j = 0; j < d; ++j)
        for (int64_t k = j; k < d; ++k) {
            const double v = cov[static_cast<size_t>(j * d + k)] * scale;
            cov[static_cast<size_t>(j * d + k)] = v;
            cov[static_cast<size_t>(k * d + j)] = v;
        }
}

// clips slightly negative eigenvalues of a notionally PSD matrix; anything
// past the tolerance is a real numerical failure and aborts
std::vector<double> clip_psd(std::vector<double> evals, const char* what) {
    double largest = 0;
    for (double v : evals) largest = std::max(largest, std::abs(v));
    const double tol = 1e-6 * std::max(1.0, largest);
    for (auto& v : evals) {
        if (v < -tol)
            throw std::runtime_error("fid: " + std::string(what) +
                                     " has negative eigenvalue residual " + std::to_string(-v) +
                                     " beyond tolerance " + std::to_string(tol));
        if (v < 0) v = 0;
    }
    return evals;
}

}  // namespace

void sym_eig(std::vector<double> a, int64_t d, std::vector<double>& evals,
             std::vector<double>& evecs) {
    evecs.assign(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < d; ++i) evecs[static_cast<size_t>(i * d + i)] = 1.0;

    double norm = 0;
    for (double v : a) norm += v * v;
    norm = std::sqrt(norm);
    const double target = std::max(1e-300, 1e-13 * norm);

    for (int sweep = 0; sweep < 100 && off_diagonal_norm(a, d) > target; ++sweep) {
        for (int64_t p = 0; p < d - 1; ++p)
            for (int64_t q = p + 1; q < d; ++q) {
                const double apq = a[static_cast<size_t>(p * d + q)];
                if (std::abs(apq) <= target / static_cast<double>(d)) continue;
                const double app = a[static_cast<size_t>(p * d + p)];
                const double aqq = a[static_cast<size_t>(q * d + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < d; ++k) {
                    const double akp = a[static_cast<size_t>(k * d + p)];
                    const double akq = a[static_cast<size_t>(k * d + q)];
                    a[static_cast<size_t>(k * d + p)] = c * akp - s * akq;
                    a[static_cast<size_t>(k * d + q)] = s * akp + c * akq;
                }
                for (int64_t k = 0; k < d; ++k) {
                    const double apk = a[static_cast<size_t>(p * d + k)];
                    const double aqk = a[static_cast<size_t>(q * d + k)];
                    a[static_cast<size_t>(p * d + k)] = c * apk - s * aqk;
                    a[static_cast<size_t>(q * d + k)] = s * apk + c * aqk;
                }
                for (int64_t k = 0; k < d; ++k) {
                    const double vkp = evecs[static_cast<size_t>(k * d + p)];
                    const double vkq = evecs[static_cast<size_t>(k * d + q)];
                    evecs[static_cast<size_t>(k * d + p)] = c * vkp - s * vkq;
                    evecs[static_cast<size_t>(k * d + q)] = s * vkp + c * vkq;
                }
            }
    }

    evals.resize(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) evals[static_cast<size_t>(i)] = a[static_cast<size_t>(i * d + i)];

    // sort ascending, permuting eigenvector columns alongside
    std::vector<int64_t> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int64_t x, int64_t y) { return evals[static_cast<size_t>(x)] < evals[static_cast<size_t>(y)]; });
    std::vector<double> ev(static_cast<size_t>(d));
    std::vector<double> vv(evecs.size());
    for (int64_t j = 0; j < d; ++j) {
        ev[static_cast<size_t>(j)] = evals[static_cast<size_t>(order[static_cast<size_t>(j)])];
        for (int64_t i = 0; i < d; ++i)
            vv[static_cast<size_t>(i * d + j)] =
                evecs[static_cast<size_t>(i * d + order[static_cast<size_t>(j)])];
    }
    evals = std::move(ev);
    evecs = std::move(vv);
}

double fid(const Tensor<float>& features_a, const Tensor<float>& features_b) {
    if (features_a.rank() != 2 || features_b.rank() != 2)
        throw std::invalid_argument("fid: features must be (N, D) matrices");
    if (features_a.dim(1) != features_b.dim(1))
        throw std::invalid_argument("fid: feature dimensions differ (" +
                                    std::to_string(features_a.dim(1)) + " vs " +
                                    std::to_string(features_b.dim(1)) + ")");
    if (features_a.dim(0) < 2 || features_b.dim(0) < 2)
        throw std::invalid_argument("fid: need at least 2 samples per side");

    const int64_t d = features_a.dim(1);
    std::vector<double> mu_a, mu_b, cov_a, cov_b;
    gaussian_fit(features_a, mu_a, cov_a);
    gaussian_fit(features_b, mu_b, cov_b);

    double mean_term = 0;
    for (int64_t j = 0; j < d; ++j) {
        const double diff = mu_a[static_cast<size_t>(j)] - mu_b[static_cast<size_t>(j)];
        mean_term += diff * diff;
    }
    double trace_a = 0, trace_b = 0;
    for (int64_t j = 0; j < d; ++j) {
        trace_a += cov_a[static_cast<size_t>(j * d + j)];
        trace_b += cov_b[static_cast<size_t>(j * d + j)];
    }

    // S = Ca^{1/2} from the eigensystem of Ca
    std::vector<double> evals, evecs;
    sym_eig(cov_a, d, evals, evecs);
    evals = clip_psd(std::move(evals), "covariance of side a");
    std::vector<double> s(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double acc = 0;
            for (int64_t k = 0; k < d; ++k)
                acc += evecs[static_cast<size_t>(i * d + k)] *
                       std::sqrt(evals[static_cast<size_t>(k)]) *
                       evecs[static_cast<size_t>(j * d + k)];
            s[static_cast<size_t>(i * d + j)] = acc;
        }

    // tr((Ca Cb)^{1/2}) = sum of sqrt eigenvalues of the symmetric S Cb S
    std::vector<double> m = matmul(matmul(s, cov_b, d), s, d);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (m[static_cast<size_t>(i * d + j)] + m[static_cast<size_t>(j * d + i)]);
            m[static_cast<size_t>(i * d + j)] = v;
            m[static_cast<size_t>(j * d + i)] = v;
        }
    std::vector<double> cross_evals, cross_evecs;
    sym_eig(std::move(m), d, cross_evals, cross_evecs);
    cross_evals = clip_psd(std::move(cross_evals), "matrix square root argument");
    double cross = 0;
    for (double v : cross_evals) cross += std::sqrt(v);

    return mean_term + trace_a + trace_b - 2.0 * cross;
}

}  // namespace provmark::detect
