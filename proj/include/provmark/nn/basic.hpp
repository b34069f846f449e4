#pragma once

#include <limits>
#include <stdexcept>

#include "provmark/core/blas.hpp"
#include "provmark/nn/module.hpp"

namespace provmark::nn {

// Fully connected layer: y = x W^T + b with x of shape (N, in).
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int64_t in, int64_t out, Rng& rng, bool zero_init = false)
        : in_(in), out_(out),
          weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {
        if (!zero_init) kaiming_normal(weight.value, in, rng);
    }

    void params(ParamRefs<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 2 || x.dim(1) != in_)
            throw std::invalid_argument("linear: bad input shape " + shape_str(x.shape()));
        x_ = x;
        int64_t n = x.dim(0);
        Tensor<T> y({n, out_});
        gemm(false, true, n, out_, in_, T(1), x.data(), in_, weight.value.data(), in_,
             T(0), y.data(), out_);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < out_; ++o) y.at2(i, o) += bias.value[o];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        int64_t n = gy.dim(0);
        gemm(true, false, out_, in_, n, T(1), gy.data(), out_, x_.data(), in_, T(1),
             weight.grad.data(), in_);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < out_; ++o) bias.grad[o] += gy.at2(i, o);
        Tensor<T> gx({n, in_});
        gemm(false, false, n, in_, out_, T(1), gy.data(), out_, weight.value.data(), in_,
             T(0), gx.data(), in_);
        return gx;
    }

    Param<T> weight, bias;

private:
    int64_t in_ = 0, out_ = 0;
    Tensor<T> x_;
};

// Lookup table mapping integer indices to dense vectors.
template <typename T>
class Embedding {
public:
    Embedding() = default;
    Embedding(std::string name, int64_t count, int64_t dim, Rng& rng)
        : count_(count), dim_(dim), weight(name + ".weight", {count, dim}) {
        normal_init(weight.value, T(1), rng);
    }

    void params(ParamRefs<T>& out) { out.push_back(&weight); }

    Tensor<T> forward(const std::vector<int64_t>& idx) {
        idx_ = idx;
        int64_t n = static_cast<int64_t>(idx.size());
        Tensor<T> y({n, dim_});
        for (int64_t i = 0; i < n; ++i) {
            if (idx[i] < 0 || idx[i] >= count_)
                throw std::out_of_range("embedding: index out of range");
            std::copy_n(weight.value.data() + idx[i] * dim_, dim_, y.data() + i * dim_);
        }
        return y;
    }

    void backward(const Tensor<T>& gy) {
        for (size_t i = 0; i < idx_.size(); ++i) {
            T* g = weight.grad.data() + idx_[i] * dim_;
            const T* src = gy.data() + static_cast<int64_t>(i) * dim_;
            for (int64_t d = 0; d < dim_; ++d) g[d] += src[d];
        }
    }

    Param<T> weight;

private:
    int64_t count_ = 0, dim_ = 0;
    std::vector<int64_t> idx_;
};

template <typename T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = x_[i] > T(0) ? gy[i] : T(0);
        return gx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
class LeakyReLU {
public:
    explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = x_[i] > T(0) ? gy[i] : slope_ * gy[i];
        return gx;
    }

private:
    T slope_;
    Tensor<T> x_;
};

template <typename T>
class SiLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) {
            T s = T(1) / (T(1) + std::exp(-x[i]));
            y[i] = x[i] * s;
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) {
            T s = T(1) / (T(1) + std::exp(-x_[i]));
            gx[i] = gy[i] * (s + x_[i] * s * (T(1) - s));
        }
        return gx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
class Tanh {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = Tensor<T>(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y_[i] = std::tanh(x[i]);
        return y_;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * (T(1) - y_[i] * y_[i]);
        return gx;
    }

private:
    Tensor<T> y_;
};

// Non-overlapping average pooling (kernel == stride).
template <typename T>
class AvgPool2d {
public:
    explicit AvgPool2d(int64_t k = 2) : k_(k) {}
    Tensor<T> forward(const Tensor<T>& x) {
        in_shape_ = x.shape();
        int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        int64_t oh = h / k_, ow = w / k_;
        Tensor<T> y({n, c, oh, ow});
        T scale = T(1) / static_cast<T>(k_ * k_);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < oh; ++p)
                    for (int64_t q = 0; q < ow; ++q) {
                        T s = 0;
                        for (int64_t a = 0; a < k_; ++a)
                            for (int64_t b = 0; b < k_; ++b)
                                s += x.at4(i, ch, p * k_ + a, q * k_ + b);
                        y.at4(i, ch, p, q) = s * scale;
                    }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        int64_t n = gy.dim(0), c = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
        T scale = T(1) / static_cast<T>(k_ * k_);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < oh; ++p)
                    for (int64_t q = 0; q < ow; ++q) {
                        T g = gy.at4(i, ch, p, q) * scale;
                        for (int64_t a = 0; a < k_; ++a)
                            for (int64_t b = 0; b < k_; ++b)
                                gx.at4(i, ch, p * k_ + a, q * k_ + b) = g;
                    }
        return gx;
    }

private:
    int64_t k_;
    Shape in_shape_;
};

// 3x3 stride-2 max pooling with padding 1 (classifier stem).
template <typename T>
class MaxPool2d {
public:
    MaxPool2d(int64_t k = 3, int64_t stride = 2, int64_t pad = 1)
        : k_(k), stride_(stride), pad_(pad) {}
    Tensor<T> forward(const Tensor<T>& x) {
        in_shape_ = x.shape();
        int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        int64_t oh = (h + 2 * pad_ - k_) / stride_ + 1;
        int64_t ow = (w + 2 * pad_ - k_) / stride_ + 1;
        Tensor<T> y({n, c, oh, ow});
        argmax_.assign(static_cast<size_t>(y.numel()), 0);
        int64_t oi = 0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < oh; ++p)
                    for (int64_t q = 0; q < ow; ++q, ++oi) {
                        T best = -std::numeric_limits<T>::infinity();
                        int64_t best_idx = 0;
                        for (int64_t a = 0; a < k_; ++a)
                            for (int64_t b = 0; b < k_; ++b) {
                                int64_t r = p * stride_ - pad_ + a;
                                int64_t s = q * stride_ - pad_ + b;
                                if (r < 0 || r >= h || s < 0 || s >= w) continue;
                                T v = x.at4(i, ch, r, s);
                                if (v > best) {
                                    best = v;
                                    best_idx = ((i * c + ch) * h + r) * w + s;
                                }
                            }
                        y[oi] = best;
                        argmax_[static_cast<size_t>(oi)] = best_idx;
                    }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        for (int64_t i = 0; i < gy.numel(); ++i) gx[argmax_[static_cast<size_t>(i)]] += gy[i];
        return gx;
    }

private:
    int64_t k_, stride_, pad_;
    Shape in_shape_;
    std::vector<int64_t> argmax_;
};

// Spatial mean per channel: (N,C,H,W) -> (N,C).
template <typename T>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        in_shape_ = x.shape();
        int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor<T> y({n, c});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                const T* p = x.data() + (i * c + ch) * hw;
                double s = 0;
                for (int64_t j = 0; j < hw; ++j) s += p[j];
                y.at2(i, ch) = static_cast<T>(s / hw);
            }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        int64_t n = gx.dim(0), c = gx.dim(1), hw = gx.dim(2) * gx.dim(3);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                T g = gy.at2(i, ch) / static_cast<T>(hw);
                T* p = gx.data() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) p[j] = g;
            }
        return gx;
    }

private:
    Shape in_shape_;
};

template <typename T>
class NearestUpsample2x {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        in_shape_ = x.shape();
        int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({n, c, 2 * h, 2 * w});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t r = 0; r < 2 * h; ++r)
                    for (int64_t s = 0; s < 2 * w; ++s)
                        y.at4(i, ch, r, s) = x.at4(i, ch, r / 2, s / 2);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        int64_t n = gx.dim(0), c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t r = 0; r < 2 * h; ++r)
                    for (int64_t s = 0; s < 2 * w; ++s)
                        gx.at4(i, ch, r / 2, s / 2) += gy.at4(i, ch, r, s);
        return gx;
    }

private:
    Shape in_shape_;
};

template <typename T>
inline Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: shape mismatch");
    int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    int64_t hw = a.dim(2) * a.dim(3);
    Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a.data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
        std::copy_n(b.data() + i * cb * hw, cb * hw, y.data() + (i * (ca + cb) + ca) * hw);
    }
    return y;
}

template <typename T>
inline std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, int64_t ca) {
    int64_t n = y.dim(0), c = y.dim(1), cb = c - ca;
    int64_t hw = y.dim(2) * y.dim(3);
    Tensor<T> a({n, ca, y.dim(2), y.dim(3)});
    Tensor<T> b({n, cb, y.dim(2), y.dim(3)});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(y.data() + i * c * hw, ca * hw, a.data() + i * ca * hw);
        std::copy_n(y.data() + (i * c + ca) * hw, cb * hw, b.data() + i * cb * hw);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace provmark::nn
