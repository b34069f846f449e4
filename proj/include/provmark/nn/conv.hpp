#pragma once

#include <stdexcept>

#include "provmark/core/blas.hpp"
#include "provmark/nn/module.hpp"

namespace provmark::nn {

// 2D convolution (square kernel), im2col + GEMM, NCHW.
template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
           int64_t pad, Rng& rng)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(pad),
          weight(name + ".weight", {out_ch, in_ch, kernel, kernel}),
          bias(name + ".bias", {out_ch}) {
        kaiming_normal(weight.value, in_ch * kernel * kernel, rng);
    }

    void params(ParamRefs<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    int64_t out_size(int64_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 4 || x.dim(1) != in_ch_)
            throw std::invalid_argument("conv2d: bad input shape " + shape_str(x.shape()));
        x_ = x;
        int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
        int64_t oh = out_size(h), ow = out_size(w), l = oh * ow, ck2 = in_ch_ * k_ * k_;
        Tensor<T> y({n, out_ch_, oh, ow});
        std::vector<T> cols(static_cast<size_t>(ck2 * l));
        for (int64_t i = 0; i < n; ++i) {
            im2col(x.data() + i * in_ch_ * h * w, h, w, oh, ow, cols.data());
            gemm(false, false, out_ch_, l, ck2, T(1), weight.value.data(), ck2, cols.data(), l,
                 T(0), y.data() + i * out_ch_ * l, l);
            T* yi = y.data() + i * out_ch_ * l;
            for (int64_t c = 0; c < out_ch_; ++c)
                for (int64_t j = 0; j < l; ++j) yi[c * l + j] += bias.value[c];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        int64_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
        int64_t oh = out_size(h), ow = out_size(w), l = oh * ow, ck2 = in_ch_ * k_ * k_;
        Tensor<T> gx(x_.shape());
        std::vector<T> cols(static_cast<size_t>(ck2 * l));
        std::vector<T> gcols(static_cast<size_t>(ck2 * l));
        for (int64_t i = 0; i < n; ++i) {
            const T* gyi = gy.data() + i * out_ch_ * l;
            im2col(x_.data() + i * in_ch_ * h * w, h, w, oh, ow, cols.data());
            gemm(false, true, out_ch_, ck2, l, T(1), gyi, l, cols.data(), l, T(1),
                 weight.grad.data(), ck2);
            for (int64_t c = 0; c < out_ch_; ++c) {
                T acc = T(0);
                for (int64_t j = 0; j < l; ++j) acc += gyi[c * l + j];
                bias.grad[c] += acc;
            }
            gemm(true, false, ck2, l, out_ch_, T(1), weight.value.data(), ck2, gyi, l, T(0),
                 gcols.data(), l);
            col2im(gcols.data(), h, w, oh, ow, gx.data() + i * in_ch_ * h * w);
        }
        return gx;
    }

    Param<T> weight, bias;

private:
    void im2col(const T* x, int64_t h, int64_t w, int64_t oh, int64_t ow, T* cols) const {
        int64_t l = oh * ow;
        for (int64_t c = 0; c < in_ch_; ++c)
            for (int64_t ki = 0; ki < k_; ++ki)
                for (int64_t kj = 0; kj < k_; ++kj) {
                    T* dst = cols + ((c * k_ + ki) * k_ + kj) * l;
                    for (int64_t y = 0; y < oh; ++y) {
                        int64_t sy = y * stride_ - pad_ + ki;
                        if (sy < 0 || sy >= h) {
                            for (int64_t xo = 0; xo < ow; ++xo) dst[y * ow + xo] = T(0);
                            continue;
                        }
                        const T* row = x + (c * h + sy) * w;
                        for (int64_t xo = 0; xo < ow; ++xo) {
                            int64_t sx = xo * stride_ - pad_ + kj;
                            dst[y * ow + xo] = (sx >= 0 && sx < w) ? row[sx] : T(0);
                        }
                    }
                }
    }

    void col2im(const T* cols, int64_t h, int64_t w, int64_t oh, int64_t ow, T* gx) const {
        int64_t l = oh * ow;
        for (int64_t c = 0; c < in_ch_; ++c)
            for (int64_t ki = 0; ki < k_; ++ki)
                for (int64_t kj = 0; kj < k_; ++kj) {
                    const T* src = cols + ((c * k_ + ki) * k_ + kj) * l;
                    for (int64_t y = 0; y < oh; ++y) {
                        int64_t sy = y * stride_ - pad_ + ki;
                        if (sy < 0 || sy >= h) continue;
                        T* row = gx + (c * h + sy) * w;
                        for (int64_t xo = 0; xo < ow; ++xo) {
                            int64_t sx = xo * stride_ - pad_ + kj;
                            if (sx >= 0 && sx < w) row[sx] += src[y * ow + xo];
                        }
                    }
                }
    }

    int64_t in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    Tensor<T> x_;
};

// Depthwise convolution with a fixed normalized Gaussian kernel, zero padded
// to preserve shape. Non-trainable; kernel weights are non-negative and sum
// to one, so the [-1,1] bound of the input is preserved.
template <typename T>
class GaussianBlur {
public:
    GaussianBlur() = default;
    GaussianBlur(int64_t kernel, double sigma) { set_kernel(kernel, sigma); }

    void set_kernel(int64_t kernel, double sigma) {
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("gaussian blur: kernel size must be odd and >= 1");
        k_ = kernel;
        kern_.assign(static_cast<size_t>(k_ * k_), T(0));
        double s2 = 2.0 * sigma * sigma;
        double sum = 0.0;
        int64_t r = k_ / 2;
        for (int64_t i = 0; i < k_; ++i)
            for (int64_t j = 0; j < k_; ++j) {
                double dy = static_cast<double>(i - r), dx = static_cast<double>(j - r);
                double v = k_ == 1 ? 1.0 : std::exp(-(dx * dx + dy * dy) / s2);
                kern_[i * k_ + j] = static_cast<T>(v);
                sum += v;
            }
        for (auto& v : kern_) v = static_cast<T>(static_cast<double>(v) / sum);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        shape_ = x.shape();
        return apply(x);
    }

    // The kernel is symmetric, so the adjoint equals the forward stencil.
    Tensor<T> backward(const Tensor<T>& gy) { return apply(gy); }

    int64_t kernel_size() const { return k_; }

private:
    Tensor<T> apply(const Tensor<T>& x) const {
        int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y(x.shape());
        int64_t r = k_ / 2;
        for (int64_t img = 0; img < n * c; ++img) {
            const T* src = x.data() + img * h * w;
            T* dst = y.data() + img * h * w;
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    T acc = T(0);
                    for (int64_t ki = 0; ki < k_; ++ki) {
                        int64_t sy = i + ki - r;
                        if (sy < 0 || sy >= h) continue;
                        for (int64_t kj = 0; kj < k_; ++kj) {
                            int64_t sx = j + kj - r;
                            if (sx < 0 || sx >= w) continue;
                            acc += kern_[ki * k_ + kj] * src[sy * w + sx];
                        }
                    }
                    dst[i * w + j] = acc;
                }
        }
        return y;
    }

    int64_t k_ = 1;
    std::vector<T> kern_;
    Shape shape_;
};

}  // namespace provmark::nn
