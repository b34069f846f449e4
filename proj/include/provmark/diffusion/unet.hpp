#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "provmark/nn/adam.hpp"
#include "provmark/nn/basic.hpp"
#include "provmark/nn/conv.hpp"
#include "provmark/nn/norm.hpp"

namespace provmark::diffusion {

inline int64_t gn_groups(int64_t channels) {
    for (int64_t g = 8; g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

// Sinusoidal position features for integer timesteps, shape (N, dim).
template <typename T>
Tensor<T> timestep_embedding(const std::vector<int64_t>& t, int64_t dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("timestep embedding dim must be even and >= 2");
    const int64_t n = static_cast<int64_t>(t.size());
    const int64_t half = dim / 2;
    Tensor<T> out({n, dim});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < half; ++k) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                                   static_cast<double>(half > 1 ? half - 1 : 1));
            double a = static_cast<double>(t[static_cast<size_t>(i)]) * freq;
            out.at2(i, k) = static_cast<T>(std::sin(a));
            out.at2(i, half + k) = static_cast<T>(std::cos(a));
        }
    return out;
}

// Pre-activation residual block with an additive per-channel time-embedding
// shift between the two convolutions.
template <typename T>
class TimeResBlock {
public:
    TimeResBlock() = default;
    TimeResBlock(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t emb_dim,
                 Rng& rng)
        : in_ch_(in_ch), out_ch_(out_ch),
          gn1_(name + ".gn1", gn_groups(in_ch), in_ch),
          conv1_(name + ".conv1", in_ch, out_ch, 3, 1, 1, rng),
          emb_lin_(name + ".emb", emb_dim, out_ch, rng),
          gn2_(name + ".gn2", gn_groups(out_ch), out_ch),
          conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
          project_(in_ch != out_ch) {
        if (project_) skip_ = nn::Conv2d<T>(name + ".skip", in_ch, out_ch, 1, 1, 0, rng);
    }

    void params(nn::ParamRefs<T>& out) {
        gn1_.params(out);
        conv1_.params(out);
        emb_lin_.params(out);
        gn2_.params(out);
        conv2_.params(out);
        if (project_) skip_.params(out);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& emb) {
        Tensor<T> h = conv1_.forward(act1_.forward(gn1_.forward(x)));
        Tensor<T> shift = emb_lin_.forward(emb);  // (N, out_ch)
        const int64_t hw = h.dim(2) * h.dim(3);
        for (int64_t n = 0; n < h.dim(0); ++n)
            for (int64_t c = 0; c < out_ch_; ++c) {
                T s = shift.at2(n, c);
                T* p = h.data() + (n * out_ch_ + c) * hw;
                for (int64_t i = 0; i < hw; ++i) p[i] += s;
            }
        Tensor<T> y = conv2_.forward(act2_.forward(gn2_.forward(h)));
        if (project_) {
            Tensor<T> s = skip_.forward(x);
            y += s;
        } else {
            y += x;
        }
        return y;
    }

    // Returns the input gradient; emb gradient is accumulated into `gemb`.
    Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& gemb) {
        Tensor<T> gh = gn2_.backward(act2_.backward(conv2_.backward(gy)));
        // additive shift: per-(n, c) sum over spatial positions
        const int64_t hw = gh.dim(2) * gh.dim(3);
        Tensor<T> gshift({gh.dim(0), out_ch_});
        for (int64_t n = 0; n < gh.dim(0); ++n)
            for (int64_t c = 0; c < out_ch_; ++c) {
                const T* p = gh.data() + (n * out_ch_ + c) * hw;
                T acc = T(0);
                for (int64_t i = 0; i < hw; ++i) acc += p[i];
                gshift.at2(n, c) = acc;
            }
        gemb += emb_lin_.backward(gshift);
        Tensor<T> gx = gn1_.backward(act1_.backward(conv1_.backward(gh)));
        if (project_) {
            Tensor<T> gs = skip_.backward(gy);
            gx += gs;
        } else {
            gx += gy;
        }
        return gx;
    }

private:
    int64_t in_ch_ = 0, out_ch_ = 0;
    nn::GroupNorm<T> gn1_, gn2_;
    nn::Conv2d<T> conv1_, conv2_, skip_;
    nn::Linear<T> emb_lin_;
    nn::SiLU<T> act1_, act2_;
    bool project_ = false;
};

// Desk-scale diffusion U-Net: one time-conditioned residual block per level,
// strided-conv downsampling, nearest-neighbour upsampling with skip
// concatenation, and a two-block middle.
template <typename T>
class UNetDenoiser {
public:
    UNetDenoiser() = default;
    UNetDenoiser(int64_t image_channels, int64_t image_size, int64_t channel_scale,
                 std::vector<int64_t> widths, Rng& rng)
        : img_ch_(image_channels), img_size_(image_size), scale_(channel_scale),
          widths_(std::move(widths)) {
        if (widths_.empty()) throw std::invalid_argument("unet: need at least one width");
        const int64_t levels = static_cast<int64_t>(widths_.size());
        if (image_size % (1LL << (levels - 1)) != 0)
            throw std::invalid_argument("unet: image size " + std::to_string(image_size) +
                                        " not divisible by 2^" + std::to_string(levels - 1));
        emb_dim_ = 4 * channel_scale;
        emb1_ = nn::Linear<T>("u.emb1", emb_dim_, emb_dim_, rng);
        emb2_ = nn::Linear<T>("u.emb2", emb_dim_, emb_dim_, rng);

        std::vector<int64_t> ch(widths_.size());
        for (size_t i = 0; i < widths_.size(); ++i) ch[i] = channel_scale * widths_[i];
        stem_ = nn::Conv2d<T>("u.stem", image_channels, ch[0], 3, 1, 1, rng);
        int64_t prev = ch[0];
        for (int64_t i = 0; i < levels; ++i) {
            down_.emplace_back("u.down" + std::to_string(i), prev, ch[static_cast<size_t>(i)],
                               emb_dim_, rng);
            prev = ch[static_cast<size_t>(i)];
            if (i < levels - 1)
                down_conv_.emplace_back("u.pool" + std::to_string(i), prev, prev, 3, 2, 1, rng);
        }
        mid1_ = TimeResBlock<T>("u.mid1", prev, prev, emb_dim_, rng);
        mid2_ = TimeResBlock<T>("u.mid2", prev, prev, emb_dim_, rng);
        for (int64_t i = levels - 1; i >= 0; --i) {
            const int64_t c = ch[static_cast<size_t>(i)];
            up_.emplace_back("u.up" + std::to_string(i), 2 * c, c, emb_dim_, rng);
            if (i > 0)
                up_conv_.emplace_back("u.upc" + std::to_string(i), c,
                                      ch[static_cast<size_t>(i - 1)], 3, 1, 1, rng);
        }
        upsample_.resize(static_cast<size_t>(levels - 1));
        out_gn_ = nn::GroupNorm<T>("u.out_gn", gn_groups(ch[0]), ch[0]);
        out_conv_ = nn::Conv2d<T>("u.out", ch[0], image_channels, 3, 1, 1, rng);
    }

    int64_t image_channels() const { return img_ch_; }
    int64_t image_size() const { return img_size_; }
    int64_t channel_scale() const { return scale_; }
    const std::vector<int64_t>& widths() const { return widths_; }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        emb1_.params(out);
        emb2_.params(out);
        stem_.params(out);
        for (auto& b : down_) b.params(out);
        for (auto& c : down_conv_) c.params(out);
        mid1_.params(out);
        mid2_.params(out);
        for (auto& b : up_) b.params(out);
        for (auto& c : up_conv_) c.params(out);
        out_gn_.params(out);
        out_conv_.params(out);
        return out;
    }

    // x (N,C,H,W), t one integer step per image.
    Tensor<T> forward(const Tensor<T>& x, const std::vector<int64_t>& t) {
        if (x.rank() != 4 || x.dim(1) != img_ch_ || x.dim(2) != img_size_ ||
            x.dim(3) != img_size_)
            throw std::invalid_argument("unet: input shape " + shape_str(x.shape()) +
                                        " does not match (N," + std::to_string(img_ch_) + "," +
                                        std::to_string(img_size_) + "," +
                                        std::to_string(img_size_) + ")");
        if (static_cast<int64_t>(t.size()) != x.dim(0))
            throw std::invalid_argument("unet: need one timestep per image");
        emb_ = emb2_.forward(emb_act_.forward(emb1_.forward(timestep_embedding<T>(t, emb_dim_))));

        const int64_t levels = static_cast<int64_t>(widths_.size());
        Tensor<T> h = stem_.forward(x);
        skips_.clear();
        for (int64_t i = 0; i < levels; ++i) {
            h = down_[static_cast<size_t>(i)].forward(h, emb_);
            skips_.push_back(h);
            if (i < levels - 1) h = down_conv_[static_cast<size_t>(i)].forward(h);
        }
        h = mid1_.forward(h, emb_);
        h = mid2_.forward(h, emb_);
        for (int64_t i = levels - 1; i >= 0; --i) {
            const size_t ui = static_cast<size_t>(levels - 1 - i);
            h = nn::concat_channels(h, skips_[static_cast<size_t>(i)]);
            h = up_[ui].forward(h, emb_);
            if (i > 0) h = up_conv_[ui].forward(upsample_[ui].forward(h));
        }
        return out_conv_.forward(out_act_.forward(out_gn_.forward(h)));
    }

    // Parameter gradients accumulate; input gradient is returned.
    Tensor<T> backward(const Tensor<T>& gy) {
        const int64_t levels = static_cast<int64_t>(widths_.size());
        Tensor<T> gemb({gy.dim(0), emb_dim_});
        Tensor<T> gh = out_gn_.backward(out_act_.backward(out_conv_.backward(gy)));

        std::vector<Tensor<T>> gskips(static_cast<size_t>(levels));
        for (int64_t i = 0; i <= levels - 1; ++i) {
            const size_t ui = static_cast<size_t>(levels - 1 - i);
            if (i > 0) gh = upsample_[ui].backward(up_conv_[ui].backward(gh));
            gh = up_[ui].backward(gh, gemb);
            const int64_t c_keep = gh.dim(1) / 2;
            auto [ga, gb] = nn::split_channels(gh, c_keep);
            gh = std::move(ga);
            gskips[static_cast<size_t>(i)] = std::move(gb);
        }
        gh = mid2_.backward(gh, gemb);
        gh = mid1_.backward(gh, gemb);
        for (int64_t i = levels - 1; i >= 0; --i) {
            if (i < levels - 1) gh = down_conv_[static_cast<size_t>(i)].backward(gh);
            gh += gskips[static_cast<size_t>(i)];
            gh = down_[static_cast<size_t>(i)].backward(gh, gemb);
        }
        Tensor<T> gx = stem_.backward(gh);
        Tensor<T> ge = emb1_.backward(emb_act_.backward(emb2_.backward(gemb)));
        (void)ge;  // timesteps are not trained
        return gx;
    }

private:
    int64_t img_ch_ = 0, img_size_ = 0, scale_ = 0, emb_dim_ = 0;
    std::vector<int64_t> widths_;
    nn::Linear<T> emb1_, emb2_;
    nn::SiLU<T> emb_act_, out_act_;
    nn::Conv2d<T> stem_, out_conv_;
    std::vector<TimeResBlock<T>> down_;
    std::vector<nn::Conv2d<T>> down_conv_;
    TimeResBlock<T> mid1_, mid2_;
    std::vector<TimeResBlock<T>> up_;
    std::vector<nn::Conv2d<T>> up_conv_;
    std::vector<nn::NearestUpsample2x<T>> upsample_;
    nn::GroupNorm<T> out_gn_;
    Tensor<T> emb_;
    std::vector<Tensor<T>> skips_;
};

}  // namespace provmark::diffusion
