#pragma once

#include <memory>
#include <vector>

#include "provmark/nn/basic.hpp"
#include "provmark/nn/conv.hpp"
#include "provmark/nn/norm.hpp"

namespace provmark::codec {

using namespace provmark::nn;

// Residual 2x-upsampling block whose normalization layers are modulated by a
// per-index embedding: each normalization is followed by a feature-wise
// scale/bias produced by a zero-initialized linear map of the embedding, so
// the block starts as a plain residual block and learns index conditioning.
template <typename T>
class ModulatedUpBlock {
public:
    ModulatedUpBlock() = default;
    ModulatedUpBlock(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t emb_dim,
                     Rng& rng)
        : bn1_(name + ".bn1", in_ch), bn2_(name + ".bn2", out_ch),
          mod1_(name + ".mod1", emb_dim, 2 * in_ch, rng, true),
          mod2_(name + ".mod2", emb_dim, 2 * out_ch, rng, true),
          conv1_(name + ".conv1", in_ch, out_ch, 3, 1, 1, rng),
          conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
          conv_skip_(name + ".conv_skip", in_ch, out_ch, 1, 1, 0, rng) {}

    void params(ParamRefs<T>& out) {
        bn1_.params(out);
        bn2_.params(out);
        mod1_.params(out);
        mod2_.params(out);
        conv1_.params(out);
        conv2_.params(out);
        conv_skip_.params(out);
    }
    void buffers(BufferRefs<T>& out) {
        bn1_.buffers(out);
        bn2_.buffers(out);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& emb, bool training) {
        auto h = bn1_.forward(x, training);
        h = film1_.forward(h, mod1_.forward(emb));
        h = relu1_.forward(h);
        h = up_main_.forward(h);
        h = conv1_.forward(h);
        h = bn2_.forward(h, training);
        h = film2_.forward(h, mod2_.forward(emb));
        h = relu2_.forward(h);
        h = conv2_.forward(h);
        auto s = conv_skip_.forward(up_skip_.forward(x));
        h += s;
        return h;
    }

    // returns (gx, gembedding)
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gy) {
        auto gskip = up_skip_.backward(conv_skip_.backward(gy));
        auto g = conv2_.backward(gy);
        g = relu2_.backward(g);
        auto [g2, gm2] = film2_.backward(g);
        auto gemb = mod2_.backward(gm2);
        g = bn2_.backward(g2);
        g = conv1_.backward(g);
        g = up_main_.backward(g);
        g = relu1_.backward(g);
        auto [g1, gm1] = film1_.backward(g);
        gemb += mod1_.backward(gm1);
        g = bn1_.backward(g1);
        g += gskip;
        return {std::move(g), std::move(gemb)};
    }

private:
    BatchNorm2d<T> bn1_, bn2_;
    Linear<T> mod1_, mod2_;
    FiLM<T> film1_, film2_;
    ReLU<T> relu1_, relu2_;
    NearestUpsample2x<T> up_main_, up_skip_;
    Conv2d<T> conv1_, conv2_, conv_skip_;
};

// Watermark generator: index embedding -> MLP -> 4x4 seed features ->
// modulated residual upsampling -> conv -> tanh -> Gaussian blur. The blur
// removes high-frequency content so the watermark stays imperceptible.
template <typename T>
class Generator {
public:
    Generator() = default;
    Generator(int64_t num_watermarks, int64_t image_channels, int64_t image_size,
              int64_t channel_scale, std::vector<int64_t> block_widths, int64_t emb_dim,
              int64_t mlp_hidden, int64_t blur_kernel, double blur_sigma, Rng& rng)
        : emb_dim_(emb_dim), widths_(std::move(block_widths)) {
        if (widths_.size() < 2)
            throw std::invalid_argument("generator: needs at least two block widths");
        int64_t blocks = static_cast<int64_t>(widths_.size()) - 1;
        if ((4LL << blocks) != image_size)
            throw std::invalid_argument(
                "generator: block count does not reach the image resolution (4 * 2^blocks = " +
                std::to_string(4LL << blocks) + ", want " + std::to_string(image_size) + ")");
        seed_ch_ = widths_[0] * channel_scale;
        emb_ = Embedding<T>("g.embed", num_watermarks, emb_dim, rng);
        mlp1_ = Linear<T>("g.mlp1", emb_dim, mlp_hidden, rng);
        mlp2_ = Linear<T>("g.mlp2", mlp_hidden, seed_ch_ * 16, rng);
        for (size_t i = 0; i + 1 < widths_.size(); ++i)
            blocks_.push_back(std::make_unique<ModulatedUpBlock<T>>(
                "g.block" + std::to_string(i), widths_[i] * channel_scale,
                widths_[i + 1] * channel_scale, emb_dim, rng));
        bn_out_ = BatchNorm2d<T>("g.bn_out", widths_.back() * channel_scale);
        conv_out_ = Conv2d<T>("g.conv_out", widths_.back() * channel_scale, image_channels, 3, 1,
                              1, rng);
        blur_.set_kernel(blur_kernel, blur_sigma);
    }

    ParamRefs<T> params() {
        ParamRefs<T> out;
        emb_.params(out);
        mlp1_.params(out);
        mlp2_.params(out);
        for (auto& b : blocks_) b->params(out);
        bn_out_.params(out);
        conv_out_.params(out);
        return out;
    }
    BufferRefs<T> buffers() {
        BufferRefs<T> out;
        for (auto& b : blocks_) b->buffers(out);
        bn_out_.buffers(out);
        return out;
    }

    // indices -> watermark images (N, channels, size, size) in [-1, 1]
    Tensor<T> forward(const std::vector<int64_t>& indices, bool training) {
        int64_t n = static_cast<int64_t>(indices.size());
        emb_out_ = emb_.forward(indices);
        auto h = mlp_relu_.forward(mlp1_.forward(emb_out_));
        h = mlp2_.forward(h);
        auto x = h.reshaped({n, seed_ch_, 4, 4});
        for (auto& b : blocks_) x = b->forward(x, emb_out_, training);
        x = bn_out_.forward(x, training);
        x = out_relu_.forward(x);
        x = conv_out_.forward(x);
        x = tanh_.forward(x);
        return blur_.forward(x);
    }

    void backward(const Tensor<T>& gy) {
        auto g = blur_.backward(gy);
        g = tanh_.backward(g);
        g = conv_out_.backward(g);
        g = out_relu_.backward(g);
        g = bn_out_.backward(g);
        Tensor<T> gemb(emb_out_.shape());
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            auto [gx, ge] = (*it)->backward(g);
            g = std::move(gx);
            gemb += ge;
        }
        auto gh = g.reshaped({g.dim(0), seed_ch_ * 16});
        gh = mlp2_.backward(gh);
        gh = mlp_relu_.backward(gh);
        gh = mlp1_.backward(gh);
        gemb += gh;
        emb_.backward(gemb);
    }

private:
    int64_t emb_dim_ = 0, seed_ch_ = 0;
    std::vector<int64_t> widths_;
    Embedding<T> emb_;
    Linear<T> mlp1_, mlp2_;
    ReLU<T> mlp_relu_, out_relu_;
    std::vector<std::unique_ptr<ModulatedUpBlock<T>>> blocks_;
    BatchNorm2d<T> bn_out_;
    Conv2d<T> conv_out_;
    Tanh<T> tanh_;
    GaussianBlur<T> blur_;
    Tensor<T> emb_out_;
};

}  // namespace provmark::codec
