#pragma once

#include <cmath>
#include <vector>

#include "provmark/core/rng.hpp"
#include "provmark/core/tensor.hpp"

namespace provmark::codec {

// One random draw of the augmentation pipeline: horizontal flip, rotation in
// [-45, 45] degrees, resize-crop up to 1.75x zoom, and Gaussian blur. Each
// stage is applied independently with probability one half; geometric stages
// compose into a single bilinear warp with out-of-frame pixels filled at -1.
struct AugmentParams {
    bool flip = false;
    bool rotate = false;
    double angle_deg = 0.0;
    bool crop = false;
    double zoom = 1.0;
    double cx = 0.0, cy = 0.0;  // crop-window center, normalized coords
    bool blur = false;
    double sigma = 0.5;

    bool geometric() const { return flip || rotate || crop; }
    bool identity() const { return !geometric() && !blur; }
};

inline AugmentParams sample_augment_params(Rng& rng) {
    AugmentParams p;
    // every quantity is drawn regardless of the coin flips so the stream
    // layout is stable
    p.flip = rng.bernoulli(0.5);
    p.rotate = rng.bernoulli(0.5);
    p.angle_deg = rng.uniform(-45.0, 45.0);
    p.crop = rng.bernoulli(0.5);
    p.zoom = rng.uniform(1.0, 1.75);
    double slack = 1.0 - 1.0 / p.zoom;
    p.cx = rng.uniform(-slack, slack);
    p.cy = rng.uniform(-slack, slack);
    p.blur = rng.bernoulli(0.5);
    p.sigma = rng.uniform(0.1, 1.0);
    return p;
}

// Differentiable augmentation: the backward pass routes gradients to the
// input pixels (the warp parameters themselves are not trained).
template <typename T>
class Augmenter {
public:
    static constexpr int64_t kBlurKernel = 5;

    Tensor<T> forward(const Tensor<T>& x, std::vector<AugmentParams> params) {
        if (x.rank() != 4) throw std::invalid_argument("augment: expected NCHW input");
        if (static_cast<int64_t>(params.size()) != x.dim(0))
            throw std::invalid_argument("augment: one parameter draw per image required");
        in_shape_ = x.shape();
        params_ = std::move(params);
        Tensor<T> y(x.shape());
        int64_t stride = x.dim(1) * x.dim(2) * x.dim(3);
        for (int64_t i = 0; i < x.dim(0); ++i)
            apply_one(x.data() + i * stride, y.data() + i * stride, params_[static_cast<size_t>(i)]);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        int64_t stride = in_shape_[1] * in_shape_[2] * in_shape_[3];
        std::vector<T> tmp(static_cast<size_t>(stride));
        for (int64_t i = 0; i < in_shape_[0]; ++i)
            adjoint_one(gy.data() + i * stride, gx.data() + i * stride,
                        params_[static_cast<size_t>(i)], tmp.data());
        return gx;
    }

private:
    // source coordinates of output pixel (u, v) under the composed warp
    struct Affine {
        double m00, m01, m10, m11, t0, t1;
    };

    static Affine composed_warp(const AugmentParams& p) {
        // output -> source mapping in normalized [-1,1] coordinates:
        // crop window first, then inverse rotation, then flip
        double rad = -p.angle_deg * 3.14159265358979323846 / 180.0;
        double cr = p.rotate ? std::cos(rad) : 1.0;
        double sr = p.rotate ? std::sin(rad) : 0.0;
        double inv_zoom = p.crop ? 1.0 / p.zoom : 1.0;
        double cx = p.crop ? p.cx : 0.0;
        double cy = p.crop ? p.cy : 0.0;
        double fx = p.flip ? -1.0 : 1.0;
        Affine a;
        a.m00 = fx * cr * inv_zoom;
        a.m01 = fx * -sr * inv_zoom;
        a.m10 = sr * inv_zoom;
        a.m11 = cr * inv_zoom;
        a.t0 = fx * (cr * cx - sr * cy);
        a.t1 = sr * cx + cr * cy;
        return a;
    }

    void blur_kernel(double sigma, T* k) const {
        double s2 = 2.0 * sigma * sigma, sum = 0.0;
        int64_t r = kBlurKernel / 2;
        for (int64_t i = 0; i < kBlurKernel; ++i)
            for (int64_t j = 0; j < kBlurKernel; ++j) {
                double dy = static_cast<double>(i - r), dx = static_cast<double>(j - r);
                double v = std::exp(-(dx * dx + dy * dy) / s2);
                k[i * kBlurKernel + j] = static_cast<T>(v);
                sum += v;
            }
        for (int64_t i = 0; i < kBlurKernel * kBlurKernel; ++i)
            k[i] = static_cast<T>(static_cast<double>(k[i]) / sum);
    }

    void convolve(const T* src, T* dst, const T* k) const {
        int64_t c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        int64_t r = kBlurKernel / 2;
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* s = src + ch * h * w;
            T* d = dst + ch * h * w;
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    T acc = T(0);
                    for (int64_t ki = 0; ki < kBlurKernel; ++ki) {
                        int64_t sy = i + ki - r;
                        if (sy < 0 || sy >= h) continue;
                        for (int64_t kj = 0; kj < kBlurKernel; ++kj) {
                            int64_t sx = j + kj - r;
                            if (sx < 0 || sx >= w) continue;
                            acc += k[ki * kBlurKernel + kj] * s[sy * w + sx];
                        }
                    }
                    d[i * w + j] = acc;
                }
        }
    }

    void apply_one(const T* x, T* y, const AugmentParams& p) const {
        int64_t c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        int64_t plane = h * w;
        std::vector<T> warped;
        const T* geom_out = x;
        if (p.geometric()) {
            warped.resize(static_cast<size_t>(c * plane));
            Affine a = composed_warp(p);
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    double u = w > 1 ? 2.0 * j / (w - 1) - 1.0 : 0.0;
                    double v = h > 1 ? 2.0 * i / (h - 1) - 1.0 : 0.0;
                    double su = a.m00 * u + a.m01 * v + a.t0;
                    double sv = a.m10 * u + a.m11 * v + a.t1;
                    double px = (su + 1.0) * 0.5 * (w - 1);
                    double py = (sv + 1.0) * 0.5 * (h - 1);
                    int64_t x0 = static_cast<int64_t>(std::floor(px));
                    int64_t y0 = static_cast<int64_t>(std::floor(py));
                    double fx = px - x0, fy = py - y0;
                    double wt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                    int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
                    int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
                    for (int64_t ch = 0; ch < c; ++ch) {
                        double acc = 0;
                        for (int t = 0; t < 4; ++t) {
                            bool inside = xs[t] >= 0 && xs[t] < w && ys[t] >= 0 && ys[t] < h;
                            double val = inside
                                             ? static_cast<double>(x[ch * plane + ys[t] * w + xs[t]])
                                             : -1.0;  // fill exposed pixels with black
                            acc += wt[t] * val;
                        }
                        warped[static_cast<size_t>(ch * plane + i * w + j)] = static_cast<T>(acc);
                    }
                }
            geom_out = warped.data();
        }
        if (p.blur) {
            T k[kBlurKernel * kBlurKernel];
            blur_kernel(p.sigma, k);
            convolve(geom_out, y, k);
        } else {
            std::copy_n(geom_out, c * plane, y);
        }
    }

    void adjoint_one(const T* gy, T* gx, const AugmentParams& p, T* tmp) const {
        int64_t c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        int64_t plane = h * w;
        const T* g = gy;
        if (p.blur) {
            // symmetric kernel: the adjoint of the zero-padded convolution is
            // the same convolution
            T k[kBlurKernel * kBlurKernel];
            blur_kernel(p.sigma, k);
            convolve(gy, tmp, k);
            g = tmp;
        }
        if (!p.geometric()) {
            for (int64_t i = 0; i < c * plane; ++i) gx[i] += g[i];
            return;
        }
        Affine a = composed_warp(p);
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double u = w > 1 ? 2.0 * j / (w - 1) - 1.0 : 0.0;
                double v = h > 1 ? 2.0 * i / (h - 1) - 1.0 : 0.0;
                double su = a.m00 * u + a.m01 * v + a.t0;
                double sv = a.m10 * u + a.m11 * v + a.t1;
                double px = (su + 1.0) * 0.5 * (w - 1);
                double py = (sv + 1.0) * 0.5 * (h - 1);
                int64_t x0 = static_cast<int64_t>(std::floor(px));
                int64_t y0 = static_cast<int64_t>(std::floor(py));
                double fx = px - x0, fy = py - y0;
                double wt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
                int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
                for (int64_t ch = 0; ch < c; ++ch) {
                    double gout = g[ch * plane + i * w + j];
                    for (int t = 0; t < 4; ++t) {
                        bool inside = xs[t] >= 0 && xs[t] < w && ys[t] >= 0 && ys[t] < h;
                        if (inside)
                            gx[ch * plane + ys[t] * w + xs[t]] +=
                                static_cast<T>(wt[t] * gout);
                    }
                }
            }
    }

    Shape in_shape_;
    std::vector<AugmentParams> params_;
};

// Seeded batch augmentation: one independent parameter draw per image.
template <typename T>
Tensor<T> augment(const Tensor<T>& x, uint64_t seed) {
    Rng rng(seed);
    std::vector<AugmentParams> ps;
    ps.reserve(static_cast<size_t>(x.dim(0)));
    for (int64_t i = 0; i < x.dim(0); ++i) ps.push_back(sample_augment_params(rng));
    Augmenter<T> aug;
    return aug.forward(x, std::move(ps));
}

}  // namespace provmark::codec
