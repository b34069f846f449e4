#pragma once

#include <memory>
#include <vector>

#include "provmark/nn/basic.hpp"
#include "provmark/nn/conv.hpp"
#include "provmark/nn/norm.hpp"

namespace provmark::codec {

// Residual basic block (two 3x3 convolutions) with a projection shortcut
// when the shape changes.
template <typename T>
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t stride, Rng& rng)
        : project_(stride != 1 || in_ch != out_ch),
          conv1_(name + ".conv1", in_ch, out_ch, 3, stride, 1, rng),
          conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
          bn1_(name + ".bn1", out_ch), bn2_(name + ".bn2", out_ch) {
        if (project_) {
            conv_skip_ = nn::Conv2d<T>(name + ".conv_skip", in_ch, out_ch, 1, stride, 0, rng);
            bn_skip_ = nn::BatchNorm2d<T>(name + ".bn_skip", out_ch);
        }
    }

    void params(nn::ParamRefs<T>& out) {
        conv1_.params(out);
        conv2_.params(out);
        bn1_.params(out);
        bn2_.params(out);
        if (project_) {
            conv_skip_.params(out);
            bn_skip_.params(out);
        }
    }
    void buffers(nn::BufferRefs<T>& out) {
        bn1_.buffers(out);
        bn2_.buffers(out);
        if (project_) bn_skip_.buffers(out);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        auto h = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
        h = bn2_.forward(conv2_.forward(h), training);
        auto s = project_ ? bn_skip_.forward(conv_skip_.forward(x), training) : x;
        h += s;
        return relu2_.forward(h);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        auto g = relu2_.backward(gy);
        auto gskip = project_ ? conv_skip_.backward(bn_skip_.backward(g)) : g;
        auto gm = bn2_.backward(g);
        gm = conv2_.backward(gm);
        gm = relu1_.backward(gm);
        gm = bn1_.backward(gm);
        gm = conv1_.backward(gm);
        gm += gskip;
        return gm;
    }

private:
    bool project_ = false;
    nn::Conv2d<T> conv1_, conv2_, conv_skip_;
    nn::BatchNorm2d<T> bn1_, bn2_, bn_skip_;
    nn::ReLU<T> relu1_, relu2_;
};

// Residual classifier used both as the watermark decoder and as the data
// class / attribute predictor.
//
// "compact": 18-layer layout for small inputs - 3x3 stride-1 stem, no
// pooling before the residual stages.
// "standard": 34-layer layout - 7x7 stride-2 stem with a max pool, for
// larger inputs.
// Both end with global average pooling (the features used for FID) and a
// fully connected head.
template <typename T>
class ResNetClassifier {
public:
    ResNetClassifier() = default;
    ResNetClassifier(const std::string& name, const std::string& arch, int64_t in_channels,
                     int64_t num_outputs, int64_t channel_scale, Rng& rng)
        : arch_(arch) {
        std::vector<int64_t> stage_blocks;
        if (arch == "compact") {
            stage_blocks = {2, 2, 2, 2};
            stem_conv_ = nn::Conv2d<T>(name + ".stem", in_channels, channel_scale, 3, 1, 1, rng);
        } else if (arch == "standard") {
            stage_blocks = {3, 4, 6, 3};
            stem_conv_ = nn::Conv2d<T>(name + ".stem", in_channels, channel_scale, 7, 2, 3, rng);
            stem_pool_ = true;
        } else {
            throw std::invalid_argument("decoder arch must be 'compact' or 'standard', got '" +
                                        arch + "'");
        }
        stem_bn_ = nn::BatchNorm2d<T>(name + ".stem_bn", channel_scale);
        int64_t in_ch = channel_scale;
        for (size_t s = 0; s < stage_blocks.size(); ++s) {
            int64_t out_ch = channel_scale << s;
            int64_t stride = s == 0 ? 1 : 2;
            for (int64_t b = 0; b < stage_blocks[s]; ++b) {
                blocks_.push_back(std::make_unique<ResidualBlock<T>>(
                    name + ".s" + std::to_string(s) + "b" + std::to_string(b), in_ch, out_ch,
                    b == 0 ? stride : 1, rng));
                in_ch = out_ch;
            }
        }
        feature_dim_ = in_ch;
        fc_ = nn::Linear<T>(name + ".fc", feature_dim_, num_outputs, rng);
    }

    int64_t feature_dim() const { return feature_dim_; }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        stem_conv_.params(out);
        stem_bn_.params(out);
        for (auto& b : blocks_) b->params(out);
        fc_.params(out);
        return out;
    }
    nn::BufferRefs<T> buffers() {
        nn::BufferRefs<T> out;
        stem_bn_.buffers(out);
        for (auto& b : blocks_) b->buffers(out);
        return out;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        auto h = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x), training));
        if (stem_pool_) h = pool_.forward(h);
        for (auto& b : blocks_) h = b->forward(h, training);
        features_ = gap_.forward(h);
        return fc_.forward(features_);
    }

    // post-pool features of the most recent forward, used as the FID embedding
    const Tensor<T>& features() const { return features_; }

    Tensor<T> backward(const Tensor<T>& glogits) {
        auto g = fc_.backward(glogits);
        auto gh = gap_.backward(g);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) gh = (*it)->backward(gh);
        if (stem_pool_) gh = pool_.backward(gh);
        gh = stem_relu_.backward(gh);
        gh = stem_bn_.backward(gh);
        return stem_conv_.backward(gh);
    }

private:
    std::string arch_;
    bool stem_pool_ = false;
    int64_t feature_dim_ = 0;
    nn::Conv2d<T> stem_conv_;
    nn::BatchNorm2d<T> stem_bn_;
    nn::ReLU<T> stem_relu_;
    nn::MaxPool2d<T> pool_{3, 2, 1};
    std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
    nn::GlobalAvgPool<T> gap_;
    nn::Linear<T> fc_;
    Tensor<T> features_;
};

}  // namespace provmark::codec
