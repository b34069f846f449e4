#pragma once

#include <stdexcept>

#include "provmark/nn/module.hpp"

namespace provmark::nn {

// Batch normalization over (N,H,W) per channel with affine parameters and
// running statistics (biased variance, momentum 0.1).
template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::string name, int64_t channels, double eps = 1e-5)
        : ch_(channels), eps_(eps),
          gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
          running_mean(name + ".running_mean", {channels}, T(0)),
          running_var(name + ".running_var", {channels}, T(1)) {
        gamma.value.fill(T(1));
    }

    void params(ParamRefs<T>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
    void buffers(BufferRefs<T>& out) {
        out.push_back(&running_mean);
        out.push_back(&running_var);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.rank() != 4 || x.dim(1) != ch_)
            throw std::invalid_argument("batchnorm: bad input shape " + shape_str(x.shape()));
        training_ = training;
        int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
        int64_t m = n * h * w, hw = h * w;
        Tensor<T> y(x.shape());
        mean_.assign(static_cast<size_t>(ch_), T(0));
        inv_.assign(static_cast<size_t>(ch_), T(0));
        xhat_ = Tensor<T>(x.shape());
        for (int64_t c = 0; c < ch_; ++c) {
            double mu, var;
            if (training) {
                double s = 0, s2 = 0;
                for (int64_t i = 0; i < n; ++i) {
                    const T* p = x.data() + (i * ch_ + c) * hw;
                    for (int64_t j = 0; j < hw; ++j) {
                        s += p[j];
                        s2 += static_cast<double>(p[j]) * p[j];
                    }
                }
                mu = s / static_cast<double>(m);
                var = s2 / static_cast<double>(m) - mu * mu;
                if (var < 0) var = 0;
                running_mean.value[c] =
                    static_cast<T>(0.9 * running_mean.value[c] + 0.1 * mu);
                running_var.value[c] =
                    static_cast<T>(0.9 * running_var.value[c] + 0.1 * var);
            } else {
                mu = running_mean.value[c];
                var = running_var.value[c];
            }
            double inv = 1.0 / std::sqrt(var + eps_);
            mean_[c] = static_cast<T>(mu);
            inv_[c] = static_cast<T>(inv);
            T g = gamma.value[c], b = beta.value[c];
            for (int64_t i = 0; i < n; ++i) {
                const T* p = x.data() + (i * ch_ + c) * hw;
                T* xh = xhat_.data() + (i * ch_ + c) * hw;
                T* yo = y.data() + (i * ch_ + c) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    xh[j] = static_cast<T>((p[j] - mu) * inv);
                    yo[j] = g * xh[j] + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        int64_t n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
        int64_t m = n * h * w, hw = h * w;
        Tensor<T> gx(gy.shape());
        for (int64_t c = 0; c < ch_; ++c) {
            double sum_gy = 0, sum_gy_xhat = 0;
            for (int64_t i = 0; i < n; ++i) {
                const T* g = gy.data() + (i * ch_ + c) * hw;
                const T* xh = xhat_.data() + (i * ch_ + c) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    sum_gy += g[j];
                    sum_gy_xhat += static_cast<double>(g[j]) * xh[j];
                }
            }
            gamma.grad[c] += static_cast<T>(sum_gy_xhat);
            beta.grad[c] += static_cast<T>(sum_gy);
            double gv = gamma.value[c], inv = inv_[c];
            if (training_) {
                double md = static_cast<double>(m);
                for (int64_t i = 0; i < n; ++i) {
                    const T* g = gy.data() + (i * ch_ + c) * hw;
                    const T* xh = xhat_.data() + (i * ch_ + c) * hw;
                    T* go = gx.data() + (i * ch_ + c) * hw;
                    for (int64_t j = 0; j < hw; ++j)
                        go[j] = static_cast<T>(gv * inv / md *
                                               (md * g[j] - sum_gy - xh[j] * sum_gy_xhat));
                }
            } else {
                for (int64_t i = 0; i < n; ++i) {
                    const T* g = gy.data() + (i * ch_ + c) * hw;
                    T* go = gx.data() + (i * ch_ + c) * hw;
                    for (int64_t j = 0; j < hw; ++j) go[j] = static_cast<T>(gv * inv * g[j]);
                }
            }
        }
        return gx;
    }

    Param<T> gamma, beta;
    Buffer<T> running_mean, running_var;

private:
    int64_t ch_ = 0;
    double eps_ = 1e-5;
    bool training_ = true;
    std::vector<T> mean_, inv_;
    Tensor<T> xhat_;
};

// Per-sample feature-wise modulation: y = x * (1 + s) + b with (s,b) packed
// as (N, 2C). Used to inject the watermark embedding after normalization.
template <typename T>
class FiLM {
public:
    // returns y given feature map x (N,C,H,W) and modulation sb (N,2C)
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& sb) {
        if (sb.dim(0) != x.dim(0) || sb.dim(1) != 2 * x.dim(1))
            throw std::invalid_argument("film: modulation shape mismatch");
        x_ = x;
        sb_ = sb;
        int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                T s = sb.at2(i, ch), b = sb.at2(i, c + ch);
                const T* p = x.data() + (i * c + ch) * hw;
                T* o = y.data() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) o[j] = p[j] * (T(1) + s) + b;
            }
        return y;
    }

    // returns (gx, gsb)
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gy) {
        int64_t n = x_.dim(0), c = x_.dim(1), hw = x_.dim(2) * x_.dim(3);
        Tensor<T> gx(x_.shape());
        Tensor<T> gsb(sb_.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                T s = sb_.at2(i, ch);
                const T* g = gy.data() + (i * c + ch) * hw;
                const T* p = x_.data() + (i * c + ch) * hw;
                T* go = gx.data() + (i * c + ch) * hw;
                double gs = 0, gb = 0;
                for (int64_t j = 0; j < hw; ++j) {
                    go[j] = g[j] * (T(1) + s);
                    gs += static_cast<double>(g[j]) * p[j];
                    gb += g[j];
                }
                gsb.at2(i, ch) = static_cast<T>(gs);
                gsb.at2(i, c + ch) = static_cast<T>(gb);
            }
        return {std::move(gx), std::move(gsb)};
    }

private:
    Tensor<T> x_, sb_;
};

// Group normalization with per-channel affine; statistics are per sample and
// group, so behaviour is identical in training and evaluation.
template <typename T>
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(std::string name, int64_t groups, int64_t channels, double eps = 1e-5)
        : groups_(groups), ch_(channels), eps_(eps),
          gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}) {
        if (channels % groups != 0)
            throw std::invalid_argument("groupnorm: channels not divisible by groups");
        gamma.value.fill(T(1));
    }

    void params(ParamRefs<T>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        int64_t cpg = c / groups_, m = cpg * hw;
        xhat_ = Tensor<T>(x.shape());
        inv_.assign(static_cast<size_t>(n * groups_), T(0));
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t g = 0; g < groups_; ++g) {
                const T* p = x.data() + (i * c + g * cpg) * hw;
                double s = 0, s2 = 0;
                for (int64_t j = 0; j < m; ++j) {
                    s += p[j];
                    s2 += static_cast<double>(p[j]) * p[j];
                }
                double mu = s / m, var = s2 / m - mu * mu;
                if (var < 0) var = 0;
                double inv = 1.0 / std::sqrt(var + eps_);
                inv_[i * groups_ + g] = static_cast<T>(inv);
                T* xh = xhat_.data() + (i * c + g * cpg) * hw;
                T* yo = y.data() + (i * c + g * cpg) * hw;
                for (int64_t j = 0; j < m; ++j) {
                    xh[j] = static_cast<T>((p[j] - mu) * inv);
                    int64_t ch = g * cpg + j / hw;
                    yo[j] = gamma.value[ch] * xh[j] + beta.value[ch];
                }
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        int64_t n = gy.dim(0), c = gy.dim(1), hw = gy.dim(2) * gy.dim(3);
        int64_t cpg = c / groups_, m = cpg * hw;
        Tensor<T> gx(gy.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t g = 0; g < groups_; ++g) {
                const T* gp = gy.data() + (i * c + g * cpg) * hw;
                const T* xh = xhat_.data() + (i * c + g * cpg) * hw;
                double sum_h = 0, sum_hx = 0;  // sums of gamma*gy and gamma*gy*xhat
                for (int64_t j = 0; j < m; ++j) {
                    int64_t ch = g * cpg + j / hw;
                    double hgy = static_cast<double>(gamma.value[ch]) * gp[j];
                    sum_h += hgy;
                    sum_hx += hgy * xh[j];
                    gamma.grad[ch] += static_cast<T>(static_cast<double>(gp[j]) * xh[j]);
                    beta.grad[ch] += gp[j];
                }
                double inv = inv_[i * groups_ + g], md = static_cast<double>(m);
                T* go = gx.data() + (i * c + g * cpg) * hw;
                for (int64_t j = 0; j < m; ++j) {
                    int64_t ch = g * cpg + j / hw;
                    double hgy = static_cast<double>(gamma.value[ch]) * gp[j];
                    go[j] = static_cast<T>(inv / md * (md * hgy - sum_h - xh[j] * sum_hx));
                }
            }
        return gx;
    }

    Param<T> gamma, beta;

private:
    int64_t groups_ = 1, ch_ = 0;
    double eps_ = 1e-5;
    std::vector<T> inv_;
    Tensor<T> xhat_;
};

}  // namespace provmark::nn
