#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "provmark/core/tensor.hpp"

namespace provmark::codec {

// Batch losses over logits of shape (N, C). Values are accumulated in double;
// gradients are with respect to the logits and already divided by N so the
// loss is a batch mean.

template <typename T>
struct LossResult {
    double value = 0;
    Tensor<T> grad;  // dL/dlogits, same shape as input
};

namespace detail {

template <typename T>
void check_logits(const Tensor<T>& logits, const char* who) {
    if (logits.rank() != 2)
        throw std::invalid_argument(std::string(who) + ": logits must be (N, C), got " +
                                    shape_str(logits.shape()));
    if (logits.dim(1) < 2)
        throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
    if (!logits.all_finite())
        throw std::invalid_argument(std::string(who) + ": non-finite logits");
}

// log-sum-exp of one row plus its softmax, both in double
inline void row_softmax(const double* z, int64_t c, std::vector<double>& p, double& lse) {
    double m = z[0];
    for (int64_t k = 1; k < c; ++k) m = std::max(m, z[k]);
    double s = 0;
    for (int64_t k = 0; k < c; ++k) {
        p[static_cast<size_t>(k)] = std::exp(z[k] - m);
        s += p[static_cast<size_t>(k)];
    }
    for (int64_t k = 0; k < c; ++k) p[static_cast<size_t>(k)] /= s;
    lse = m + std::log(s);
}

}  // namespace detail

// Cross-entropy of the softmax against the embedded watermark index:
// mean over the batch of  log-sum-exp(z) - z[target].
template <typename T>
LossResult<T> decoder_loss(const Tensor<T>& logits, const std::vector<int64_t>& targets) {
    detail::check_logits(logits, "decoder_loss");
    int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != n)
        throw std::invalid_argument("decoder_loss: target count mismatch");
    LossResult<T> out;
    out.grad = Tensor<T>(logits.shape());
    std::vector<double> z(static_cast<size_t>(c)), p(static_cast<size_t>(c));
    for (int64_t i = 0; i < n; ++i) {
        int64_t t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= c)
            throw std::invalid_argument("decoder_loss: target index out of range");
        for (int64_t k = 0; k < c; ++k) z[static_cast<size_t>(k)] = logits.at2(i, k);
        double lse = 0;
        detail::row_softmax(z.data(), c, p, lse);
        out.value += lse - z[static_cast<size_t>(t)];
        for (int64_t k = 0; k < c; ++k)
            out.grad.at2(i, k) = static_cast<T>(p[static_cast<size_t>(k)] / n);
        out.grad.at2(i, t) -= static_cast<T>(1.0 / n);
    }
    out.value /= static_cast<double>(n);
    return out;
}

// Cross-entropy of the softmax against the uniform distribution, averaged
// over the batch: mean_i of (1/C) * sum_k -log softmax(z_i)[k]. Pushes the
// decoder towards a flat response on clean images; minimum value is ln C.
template <typename T>
LossResult<T> regularisation_loss(const Tensor<T>& logits) {
    detail::check_logits(logits, "regularisation_loss");
    int64_t n = logits.dim(0), c = logits.dim(1);
    LossResult<T> out;
    out.grad = Tensor<T>(logits.shape());
    std::vector<double> z(static_cast<size_t>(c)), p(static_cast<size_t>(c));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < c; ++k) z[static_cast<size_t>(k)] = logits.at2(i, k);
        double lse = 0;
        detail::row_softmax(z.data(), c, p, lse);
        double zbar = 0;
        for (int64_t k = 0; k < c; ++k) zbar += z[static_cast<size_t>(k)];
        zbar /= static_cast<double>(c);
        out.value += lse - zbar;
        for (int64_t k = 0; k < c; ++k)
            out.grad.at2(i, k) =
                static_cast<T>((p[static_cast<size_t>(k)] - 1.0 / c) / n);
    }
    out.value /= static_cast<double>(n);
    return out;
}

// Scalar single-vector conveniences used by reports and tests.
inline double decoder_loss_value(const std::vector<double>& logits, int64_t target) {
    Tensor<double> z({1, static_cast<int64_t>(logits.size())});
    for (size_t k = 0; k < logits.size(); ++k) z[static_cast<int64_t>(k)] = logits[k];
    return decoder_loss(z, {target}).value;
}

inline double regularisation_loss_value(const std::vector<double>& logits) {
    Tensor<double> z({1, static_cast<int64_t>(logits.size())});
    for (size_t k = 0; k < logits.size(); ++k) z[static_cast<int64_t>(k)] = logits[k];
    return regularisation_loss(z).value;
}

// Joint objective: watermark cross-entropy on marked images plus the
// flat-response regulariser on clean images.
inline double total_loss_value(double decoder_component, double regularisation_component) {
    return decoder_component + regularisation_component;
}

}  // namespace provmark::codec
