#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/data/dataset.hpp"
#include "provmark/diffusion/schedule.hpp"
#include "provmark/diffusion/unet.hpp"

namespace provmark::diffusion {

struct DiffusionConfig {
    int64_t num_steps = 50;  // T
    int64_t channel_scale = 32;
    std::vector<int64_t> block_widths = {1, 2, 2};
    int64_t epochs = 30;
    int64_t batch_size = 64;   // effective batch per optimizer step
    int64_t grad_accum = 1;    // micro-batches accumulated into one step
    double learning_rate = 2e-5;
    int64_t image_channels = 3;
    int64_t image_size = 32;

    void validate() const {
        if (num_steps < 1 || channel_scale < 1 || epochs < 1 || batch_size < 1 ||
            grad_accum < 1 || learning_rate <= 0 || image_channels < 1 || image_size < 2)
            throw std::invalid_argument("diffusion config: non-positive field");
        if (block_widths.empty())
            throw std::invalid_argument("diffusion config: need block widths");
        if (batch_size % grad_accum != 0)
            throw std::invalid_argument("diffusion config: batch_size must be divisible by "
                                        "grad_accum");
    }

    nlohmann::json to_json() const {
        return {{"num_steps", num_steps},
                {"channel_scale", channel_scale},
                {"block_widths", block_widths},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"grad_accum", grad_accum},
                {"learning_rate", learning_rate},
                {"image_channels", image_channels},
                {"image_size", image_size}};
    }

    static DiffusionConfig from_json(const nlohmann::json& j) {
        DiffusionConfig c;
        c.num_steps = j.value("num_steps", c.num_steps);
        c.channel_scale = j.value("channel_scale", c.channel_scale);
        c.block_widths = j.value("block_widths", c.block_widths);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.grad_accum = j.value("grad_accum", c.grad_accum);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.image_channels = j.value("image_channels", c.image_channels);
        c.image_size = j.value("image_size", c.image_size);
        c.validate();
        return c;
    }
};

struct DiffusionEpoch {
    int64_t epoch = 0;
    double loss = 0;  // mean restoration L1 over the epoch's steps
};

struct DiffusionTrainOptions {
    std::string checkpoint_path;
    std::string metrics_path;  // NDJSON {epoch, loss}
    std::string resume_from;
    std::function<void(const DiffusionEpoch&)> on_epoch;
};

struct DiffusionTrainResult {
    std::vector<DiffusionEpoch> curve;
};

// Restoration training: minimize mean |model(degrade(x0, t, eps), t) - x0|
// over random images, steps and noise. Non-finite loss aborts with a trace.
UNetDenoiser<float> train_denoiser(const data::ImageDataset& dataset, const DiffusionConfig& cfg,
                                   uint64_t seed, const DiffusionTrainOptions& opts,
                                   DiffusionTrainResult* result = nullptr);

void save_denoiser(UNetDenoiser<float>& model, const DiffusionConfig& cfg,
                   const std::string& path, const nlohmann::json& extra_meta = {});
std::pair<UNetDenoiser<float>, DiffusionConfig> load_denoiser(const std::string& path);

}  // namespace provmark::diffusion
