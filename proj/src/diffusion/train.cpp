#include "provmark/diffusion/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "provmark/core/checkpoint.hpp"
#include "provmark/nn/adam.hpp"

namespace provmark::diffusion {

using data::ImageDataset;

namespace {

Tensor<float> gather_images(const ImageDataset& ds, const int64_t* idx, int64_t count) {
    const int64_t chw = ds.channels() * ds.image_size() * ds.image_size();
    Tensor<float> out({count, ds.channels(), ds.image_size(), ds.image_size()});
    for (int64_t k = 0; k < count; ++k)
        std::copy_n(ds.images.data() + idx[k] * chw, chw, out.data() + k * chw);
    return out;
}

}  // namespace

void save_denoiser(UNetDenoiser<float>& model, const DiffusionConfig& cfg,
                   const std::string& path, const nlohmann::json& extra_meta) {
    Checkpoint ck;
    ck.meta["kind"] = "denoiser";
    ck.meta["config"] = cfg.to_json();
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    for (auto* p : model.params()) ck.tensors[p->name] = p->value;
    ck.save(path);
}

std::pair<UNetDenoiser<float>, DiffusionConfig> load_denoiser(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "denoiser")
        throw std::runtime_error("checkpoint is not a denoiser (kind=" +
                                 ck.meta.value("kind", "?") + ")");
    DiffusionConfig cfg = DiffusionConfig::from_json(ck.meta.at("config"));
    Rng rng(0);
    UNetDenoiser<float> model(cfg.image_channels, cfg.image_size, cfg.channel_scale,
                              cfg.block_widths, rng);
    for (auto* p : model.params()) p->value = ck.tensor(p->name);
    return {std::move(model), cfg};
}

UNetDenoiser<float> train_denoiser(const ImageDataset& dataset, const DiffusionConfig& cfg,
                                   uint64_t seed, const DiffusionTrainOptions& opts,
                                   DiffusionTrainResult* result) {
    cfg.validate();
    dataset.validate();
    if (dataset.channels() != cfg.image_channels || dataset.image_size() != cfg.image_size)
        throw std::invalid_argument("train_denoiser: dataset resolution " +
                                    shape_str(dataset.images.shape()) +
                                    " does not match config");
    const int64_t n = dataset.size();
    const int64_t micro = cfg.batch_size / cfg.grad_accum;
    if (n < cfg.batch_size)
        throw std::invalid_argument("train_denoiser: dataset smaller than one batch");

    DegradationSchedule schedule = make_schedule(cfg.num_steps);
    Rng root(seed);
    UNetDenoiser<float> model(cfg.image_channels, cfg.image_size, cfg.channel_scale,
                              cfg.block_widths, root);
    auto params = model.params();
    nn::Adam<float> adam(params, cfg.learning_rate);

    int64_t start_epoch = 0;
    if (!opts.resume_from.empty() && std::ifstream(opts.resume_from).good()) {
        Checkpoint ck = Checkpoint::load(opts.resume_from);
        auto [m, c] = load_denoiser(opts.resume_from);
        // epochs is a run-length knob, not part of the model identity
        auto strip = [](nlohmann::json j) {
            j.erase("epochs");
            return j;
        };
        if (strip(c.to_json()) != strip(cfg.to_json()))
            throw std::runtime_error("train_denoiser: resume config mismatch");
        model = std::move(m);
        params = model.params();
        adam = nn::Adam<float>(params, cfg.learning_rate);
        adam.import_state(ck.tensors, ck.meta.value("adam_step", int64_t{0}));
        start_epoch = ck.meta.value("epoch", int64_t{0});
        if (ck.meta.contains("rng")) root.restore(ck.meta["rng"].get<std::string>());
    }

    std::ofstream metrics_out;
    if (!opts.metrics_path.empty()) {
        metrics_out.open(opts.metrics_path, start_epoch > 0 ? std::ios::app : std::ios::out);
        if (!metrics_out)
            throw std::runtime_error("train_denoiser: cannot write " + opts.metrics_path);
    }

    std::deque<double> trace;
    for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng erng = root.fork(static_cast<uint64_t>(epoch) + 1);
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        erng.shuffle(order);

        double epoch_loss = 0;
        int64_t steps = 0;
        for (int64_t at = 0; at + cfg.batch_size <= n; at += cfg.batch_size) {
            nn::zero_grads(params);
            double step_loss = 0;
            for (int64_t a = 0; a < cfg.grad_accum; ++a) {
                Tensor<float> x0 = gather_images(dataset, order.data() + at + a * micro, micro);
                std::vector<int64_t> t(static_cast<size_t>(micro));
                for (auto& ti : t) ti = 1 + erng.below(cfg.num_steps);
                Tensor<float> noise(x0.shape());
                for (int64_t i = 0; i < noise.numel(); ++i)
                    noise[i] = static_cast<float>(erng.normal());

                Tensor<float> xt(x0.shape());
                const int64_t chw = x0.numel() / micro;
                for (int64_t i = 0; i < micro; ++i) {
                    const float sa = static_cast<float>(schedule.sqrt_ab(t[static_cast<size_t>(i)]));
                    const float sb =
                        static_cast<float>(schedule.sqrt_1mab(t[static_cast<size_t>(i)]));
                    for (int64_t j = 0; j < chw; ++j)
                        xt[i * chw + j] = sa * x0[i * chw + j] + sb * noise[i * chw + j];
                }

                Tensor<float> pred = model.forward(xt, t);
                if (!pred.all_finite())
                    throw std::runtime_error(
                        "train_denoiser: diverged at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(steps) + " (non-finite prediction)");

                // L1 restoration loss; gradient scaled so accumulated
                // micro-batches average rather than sum
                double l1 = 0;
                Tensor<float> g(pred.shape());
                const float gs = 1.0f / (static_cast<float>(pred.numel()) *
                                         static_cast<float>(cfg.grad_accum));
                for (int64_t i = 0; i < pred.numel(); ++i) {
                    const float d = pred[i] - x0[i];
                    l1 += std::abs(static_cast<double>(d));
                    g[i] = d > 0 ? gs : (d < 0 ? -gs : 0.0f);
                }
                l1 /= static_cast<double>(pred.numel());
                if (!std::isfinite(l1))
                    throw std::runtime_error("train_denoiser: diverged at epoch " +
                                             std::to_string(epoch) + ", step " +
                                             std::to_string(steps) + " (non-finite loss)");
                model.backward(g);
                step_loss += l1 / static_cast<double>(cfg.grad_accum);
            }
            adam.step();
            epoch_loss += step_loss;
            trace.push_back(step_loss);
            if (trace.size() > 16) trace.pop_front();
            ++steps;
        }

        DiffusionEpoch e;
        e.epoch = epoch;
        e.loss = steps ? epoch_loss / static_cast<double>(steps) : 0.0;
        if (result) result->curve.push_back(e);
        if (metrics_out)
            metrics_out << nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}}.dump() << "\n"
                        << std::flush;
        if (opts.on_epoch) opts.on_epoch(e);

        if (!opts.checkpoint_path.empty()) {
            nlohmann::json extra;
            extra["epoch"] = epoch + 1;
            extra["rng"] = root.state();
            int64_t step = 0;
            std::map<std::string, Tensor<float>> adam_state;
            adam.export_state(adam_state, step);
            extra["adam_step"] = step;
            Checkpoint ck;
            ck.meta["kind"] = "denoiser";
            ck.meta["config"] = cfg.to_json();
            for (auto& [k, v] : extra.items()) ck.meta[k] = v;
            for (auto* p : params) ck.tensors[p->name] = p->value;
            for (auto& [name, t] : adam_state) ck.tensors[name] = t;
            ck.save(opts.checkpoint_path);
        }
    }
    return model;
}

}  // namespace provmark::diffusion
