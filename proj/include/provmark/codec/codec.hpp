#pragma once

#include <json.hpp>

#include "provmark/codec/decoder.hpp"
#include "provmark/codec/generator.hpp"
#include "provmark/core/checkpoint.hpp"

namespace provmark::codec {

struct CodecConfig {
    int64_t num_watermarks = 16;
    double lambda_target = 0.025;
    double lambda_init = 0.5;
    int64_t anneal_epochs = 30;
    int64_t blur_kernel = 5;
    double blur_sigma = 2.0;
    bool augmentations_enabled = true;
    std::string decoder_arch = "compact";  // compact | standard
    int64_t generator_channel_scale = 64;
    std::vector<int64_t> generator_block_widths = {8, 4, 2, 1};
    int64_t decoder_channel_scale = 64;
    int64_t image_channels = 3;
    int64_t image_size = 32;
    // embedding/MLP sizing is not pinned down by the reference material;
    // these defaults are recorded in every checkpoint
    int64_t embedding_dim = 64;
    int64_t mlp_hidden = 128;
    // training
    int64_t epochs = 60;
    int64_t batch_size = 32;
    double learning_rate = 1e-4;

    void validate() const {
        if (num_watermarks < 2) throw std::invalid_argument("codec config: need C >= 2");
        if (!(lambda_target > 0.0 && lambda_target <= lambda_init && lambda_init <= 1.0))
            throw std::invalid_argument(
                "codec config: need 0 < lambda_target <= lambda_init <= 1");
        if (blur_kernel < 1 || blur_kernel % 2 == 0)
            throw std::invalid_argument("codec config: blur_kernel must be odd and >= 1");
        if (anneal_epochs < 0) throw std::invalid_argument("codec config: anneal_epochs < 0");
        if (decoder_arch != "compact" && decoder_arch != "standard")
            throw std::invalid_argument("codec config: decoder_arch must be compact|standard");
        if (generator_block_widths.size() < 2)
            throw std::invalid_argument("codec config: need at least two generator widths");
        int64_t blocks = static_cast<int64_t>(generator_block_widths.size()) - 1;
        if ((4LL << blocks) != image_size)
            throw std::invalid_argument(
                "codec config: generator widths do not reach image_size (4*2^" +
                std::to_string(blocks) + " != " + std::to_string(image_size) + ")");
        if (image_channels < 1 || image_size < 4 || generator_channel_scale < 1 ||
            decoder_channel_scale < 1 || embedding_dim < 1 || mlp_hidden < 1 || epochs < 1 ||
            batch_size < 1 || learning_rate <= 0)
            throw std::invalid_argument("codec config: non-positive size or rate field");
    }

    nlohmann::json to_json() const {
        return {{"num_watermarks", num_watermarks},
                {"lambda_target", lambda_target},
                {"lambda_init", lambda_init},
                {"anneal_epochs", anneal_epochs},
                {"blur_kernel", blur_kernel},
                {"blur_sigma", blur_sigma},
                {"augmentations_enabled", augmentations_enabled},
                {"decoder_arch", decoder_arch},
                {"generator_channel_scale", generator_channel_scale},
                {"generator_block_widths", generator_block_widths},
                {"decoder_channel_scale", decoder_channel_scale},
                {"image_channels", image_channels},
                {"image_size", image_size},
                {"embedding_dim", embedding_dim},
                {"mlp_hidden", mlp_hidden},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate}};
    }

    static CodecConfig from_json(const nlohmann::json& j) {
        CodecConfig c;
        c.num_watermarks = j.value("num_watermarks", c.num_watermarks);
        c.lambda_target = j.value("lambda_target", c.lambda_target);
        c.lambda_init = j.value("lambda_init", c.lambda_init);
        c.anneal_epochs = j.value("anneal_epochs", c.anneal_epochs);
        c.blur_kernel = j.value("blur_kernel", c.blur_kernel);
        c.blur_sigma = j.value("blur_sigma", c.blur_sigma);
        c.augmentations_enabled = j.value("augmentations_enabled", c.augmentations_enabled);
        c.decoder_arch = j.value("decoder_arch", c.decoder_arch);
        c.generator_channel_scale = j.value("generator_channel_scale", c.generator_channel_scale);
        c.generator_block_widths =
            j.value("generator_block_widths", c.generator_block_widths);
        c.decoder_channel_scale = j.value("decoder_channel_scale", c.decoder_channel_scale);
        c.image_channels = j.value("image_channels", c.image_channels);
        c.image_size = j.value("image_size", c.image_size);
        c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
        c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.validate();
        return c;
    }
};

// Convex blend of a watermark into an image: lambda * w + (1 - lambda) * x.
template <typename T>
Tensor<T> blend(const Tensor<T>& x, const Tensor<T>& w, double lambda) {
    if (!x.same_shape(w))
        throw std::invalid_argument("blend: shape mismatch, image " + shape_str(x.shape()) +
                                    " vs watermark " + shape_str(w.shape()));
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("blend: lambda must be in [0, 1]");
    Tensor<T> y(x.shape());
    T l = static_cast<T>(lambda), il = static_cast<T>(1.0 - lambda);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = l * w[i] + il * x[i];
    return y;
}

// Watermark intensity schedule: starts at lambda_init and decays linearly to
// lambda_target over anneal_epochs, then stays there.
inline double anneal_lambda(int64_t epoch, const CodecConfig& cfg) {
    if (epoch <= 0) return cfg.lambda_init;
    if (epoch >= cfg.anneal_epochs) return cfg.lambda_target;
    double f = static_cast<double>(epoch) / static_cast<double>(cfg.anneal_epochs);
    return cfg.lambda_init + (cfg.lambda_target - cfg.lambda_init) * f;
}

// Paired watermark generator and decoder plus training state.
template <typename T>
class WatermarkCodec {
public:
    WatermarkCodec() = default;
    WatermarkCodec(CodecConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(init_seed);
        gen_ = Generator<T>(cfg_.num_watermarks, cfg_.image_channels, cfg_.image_size,
                            cfg_.generator_channel_scale, cfg_.generator_block_widths,
                            cfg_.embedding_dim, cfg_.mlp_hidden, cfg_.blur_kernel,
                            cfg_.blur_sigma, rng);
        dec_ = ResNetClassifier<T>("d", cfg_.decoder_arch, cfg_.image_channels,
                                   cfg_.num_watermarks, cfg_.decoder_channel_scale, rng);
    }

    const CodecConfig& config() const { return cfg_; }
    Generator<T>& generator() { return gen_; }
    ResNetClassifier<T>& decoder() { return dec_; }
    bool trained() const { return trained_; }
    void set_trained(bool v) { trained_ = v; }

    // Deterministic watermark image for one index (evaluation mode).
    Tensor<T> generate_watermark(int64_t index) {
        if (!trained_)
            throw std::runtime_error(
                "generate_watermark: uninitialized parameters (codec not trained)");
        check_index(index);
        auto batch = gen_.forward({index}, false);
        return batch.reshaped({cfg_.image_channels, cfg_.image_size, cfg_.image_size});
    }

    // Training-path batch generation; no trained-flag guard.
    Tensor<T> generate_watermarks(const std::vector<int64_t>& indices, bool training) {
        for (int64_t i : indices) check_index(i);
        return gen_.forward(indices, training);
    }

    // Evaluation-mode logits. Accepts one image (C,H,W) or a batch (N,C,H,W).
    Tensor<T> decode(const Tensor<T>& x) {
        Tensor<T> batch = x;
        if (x.rank() == 3) batch = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
        if (batch.rank() != 4 || batch.dim(1) != cfg_.image_channels ||
            batch.dim(2) != cfg_.image_size || batch.dim(3) != cfg_.image_size)
            throw std::invalid_argument("decode: input shape " + shape_str(x.shape()) +
                                        " does not match training resolution (" +
                                        std::to_string(cfg_.image_channels) + "," +
                                        std::to_string(cfg_.image_size) + "," +
                                        std::to_string(cfg_.image_size) + ")");
        return dec_.forward(batch, false);
    }

    nn::ParamRefs<T> all_params() {
        auto p = gen_.params();
        auto d = dec_.params();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }
    nn::BufferRefs<T> all_buffers() {
        auto b = gen_.buffers();
        auto d = dec_.buffers();
        b.insert(b.end(), d.begin(), d.end());
        return b;
    }

    void save(const std::string& path, nlohmann::json extra_meta = {}) {
        Checkpoint ck;
        ck.meta["kind"] = "codec";
        ck.meta["config"] = cfg_.to_json();
        ck.meta["trained"] = trained_;
        for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
        for (auto* p : all_params()) ck.tensors[p->name] = p->value.template cast<float>();
        for (auto* b : all_buffers()) ck.tensors[b->name] = b->value.template cast<float>();
        ck.save(path);
    }

    static WatermarkCodec load(const std::string& path) {
        Checkpoint ck = Checkpoint::load(path);
        return from_checkpoint(ck);
    }

    static WatermarkCodec from_checkpoint(const Checkpoint& ck) {
        if (ck.meta.value("kind", "") != "codec")
            throw std::runtime_error("checkpoint is not a codec (kind=" +
                                     ck.meta.value("kind", "?") + ")");
        WatermarkCodec c(CodecConfig::from_json(ck.meta.at("config")), 0);
        for (auto* p : c.all_params()) p->value = ck.tensor(p->name).template cast<T>();
        for (auto* b : c.all_buffers()) b->value = ck.tensor(b->name).template cast<T>();
        c.trained_ = ck.meta.value("trained", false);
        return c;
    }

private:
    void check_index(int64_t index) const {
        if (index < 0 || index >= cfg_.num_watermarks)
            throw std::out_of_range("watermark index " + std::to_string(index) +
                                    " out of range [0, " + std::to_string(cfg_.num_watermarks) +
                                    ")");
    }

    CodecConfig cfg_;
    Generator<T> gen_;
    ResNetClassifier<T> dec_;
    bool trained_ = false;
};

}  // namespace provmark::codec
