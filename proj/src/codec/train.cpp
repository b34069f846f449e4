#include "provmark/codec/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "provmark/codec/augment.hpp"
#include "provmark/codec/losses.hpp"
#include "provmark/nn/adam.hpp"

namespace provmark::codec {

using data::ImageDataset;

nlohmann::json EpochMetrics::to_json() const {
    return {{"epoch", epoch},       {"lambda", lambda},   {"loss_d", loss_d},
            {"loss_r", loss_r},     {"acc_clean", acc_clean}, {"acc_aug", acc_aug},
            {"wm_mse", wm_mse}};
}

int64_t argmax_row(const Tensor<float>& logits, int64_t row) {
    const int64_t c = logits.dim(1);
    int64_t best = 0;
    float best_v = logits.at2(row, 0);
    for (int64_t k = 1; k < c; ++k)
        if (logits.at2(row, k) > best_v) {
            best_v = logits.at2(row, k);
            best = k;
        }
    return best;
}

namespace {

Tensor<float> gather_images(const ImageDataset& ds, const std::vector<int64_t>& idx) {
    const int64_t chw = ds.channels() * ds.image_size() * ds.image_size();
    Tensor<float> out({static_cast<int64_t>(idx.size()), ds.channels(), ds.image_size(),
                       ds.image_size()});
    for (size_t k = 0; k < idx.size(); ++k)
        std::copy_n(ds.images.data() + idx[k] * chw, chw,
                    out.data() + static_cast<int64_t>(k) * chw);
    return out;
}

std::string loss_trace_str(const std::deque<std::pair<double, double>>& trace) {
    std::ostringstream os;
    os.precision(6);
    for (const auto& [d, r] : trace) os << " (" << d << ", " << r << ")";
    return os.str();
}

}  // namespace

CodecEval evaluate_codec(WatermarkCodec<float>& codec, const ImageDataset& ds, double lambda,
                         uint64_t seed, int64_t limit) {
    const CodecConfig& cfg = codec.config();
    int64_t n = ds.size();
    if (limit > 0) n = std::min(n, limit);
    if (n == 0) throw std::invalid_argument("evaluate_codec: empty dataset");

    Rng rng(seed);
    Augmenter<float> aug;
    CodecEval ev;
    const int64_t bs = 64;
    int64_t correct_clean = 0, correct_aug = 0;
    double mse_acc = 0;

    for (int64_t at = 0; at < n; at += bs) {
        const int64_t b = std::min(bs, n - at);
        std::vector<int64_t> img_idx(static_cast<size_t>(b));
        std::iota(img_idx.begin(), img_idx.end(), at);
        std::vector<int64_t> wm_idx(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) wm_idx[static_cast<size_t>(i)] = (at + i) % cfg.num_watermarks;

        Tensor<float> x = gather_images(ds, img_idx);
        Tensor<float> w = codec.generate_watermarks(wm_idx, false);
        Tensor<float> marked = blend(x, w, lambda);
        mse_acc += mse(marked, x) * static_cast<double>(b);

        Tensor<float> logits = codec.decoder().forward(marked, false);
        for (int64_t i = 0; i < b; ++i)
            if (argmax_row(logits, i) == wm_idx[static_cast<size_t>(i)]) ++correct_clean;

        std::vector<AugmentParams> params(static_cast<size_t>(b));
        for (auto& p : params) p = sample_augment_params(rng);
        Tensor<float> marked_aug = aug.forward(marked, std::move(params));
        Tensor<float> logits_aug = codec.decoder().forward(marked_aug, false);
        for (int64_t i = 0; i < b; ++i)
            if (argmax_row(logits_aug, i) == wm_idx[static_cast<size_t>(i)]) ++correct_aug;
    }
    ev.acc_clean = static_cast<double>(correct_clean) / static_cast<double>(n);
    ev.acc_aug = static_cast<double>(correct_aug) / static_cast<double>(n);
    ev.wm_mse = mse_acc / static_cast<double>(n);
    return ev;
}

WatermarkCodec<float> train_codec(const ImageDataset& dataset, const CodecConfig& cfg,
                                  uint64_t seed, const CodecTrainOptions& opts,
                                  CodecTrainResult* result) {
    cfg.validate();
    dataset.validate();
    if (dataset.size() < 2) throw std::invalid_argument("train_codec: dataset too small");
    if (dataset.channels() != cfg.image_channels || dataset.image_size() != cfg.image_size)
        throw std::invalid_argument("train_codec: dataset resolution " +
                                    shape_str(dataset.images.shape()) +
                                    " does not match codec config");

    const int64_t n = dataset.size();
    int64_t holdout = opts.holdout;
    if (holdout <= 0)
        holdout = std::min(std::max(n / 10, 2 * cfg.num_watermarks), n / 2);
    auto [train_ds, held_ds] = dataset.split_holdout(holdout, seed ^ 0x9e3779b97f4a7c15ull);
    const int64_t n_train = train_ds.size();

    Rng root(seed);
    WatermarkCodec<float> codec(cfg, root.next_u64());
    nn::Adam<float> adam(codec.all_params(), cfg.learning_rate);

    int64_t start_epoch = 0;
    if (!opts.resume_from.empty() && std::ifstream(opts.resume_from).good()) {
        Checkpoint ck = Checkpoint::load(opts.resume_from);
        auto strip = [](nlohmann::json j) {
            j.erase("epochs");
            return j;
        };
        if (strip(CodecConfig::from_json(ck.meta.at("config")).to_json()) != strip(cfg.to_json()))
            throw std::runtime_error("train_codec: resume config mismatch");
        codec = WatermarkCodec<float>::from_checkpoint(ck);
        adam = nn::Adam<float>(codec.all_params(), cfg.learning_rate);
        adam.import_state(ck.tensors, ck.meta.value("adam_step", int64_t{0}));
        start_epoch = ck.meta.value("epoch", int64_t{0});
        if (ck.meta.contains("rng")) root.restore(ck.meta["rng"].get<std::string>());
    }

    std::ofstream metrics_out;
    if (!opts.metrics_path.empty()) {
        metrics_out.open(opts.metrics_path, start_epoch > 0 ? std::ios::app : std::ios::out);
        if (!metrics_out)
            throw std::runtime_error("train_codec: cannot write " + opts.metrics_path);
    }

    Augmenter<float> aug;
    auto params = codec.all_params();
    std::deque<std::pair<double, double>> trace;

    for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lambda = anneal_lambda(epoch, cfg);
        Rng erng = root.fork(static_cast<uint64_t>(epoch) + 1);

        std::vector<int64_t> order(static_cast<size_t>(n_train));
        std::iota(order.begin(), order.end(), 0);
        erng.shuffle(order);

        double sum_d = 0, sum_r = 0;
        int64_t batches = 0;
        for (int64_t at = 0; at + cfg.batch_size <= n_train; at += cfg.batch_size) {
            const int64_t b = cfg.batch_size;
            std::vector<int64_t> img_idx(order.begin() + at, order.begin() + at + b);
            std::vector<int64_t> wm_idx(static_cast<size_t>(b));
            for (auto& w : wm_idx) w = erng.below(cfg.num_watermarks);

            nn::zero_grads(params);

            Tensor<float> x = gather_images(train_ds, img_idx);
            Tensor<float> w = codec.generate_watermarks(wm_idx, true);
            Tensor<float> marked = blend(x, w, lambda);

            Tensor<float> dec_in = marked;
            std::vector<AugmentParams> aug_params;
            if (cfg.augmentations_enabled) {
                aug_params.resize(static_cast<size_t>(b));
                for (auto& p : aug_params) p = sample_augment_params(erng);
                dec_in = aug.forward(marked, aug_params);
            }

            auto diverged = [&](const char* what) {
                throw std::runtime_error("train_codec: diverged at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches) + " (" + what +
                                         "); recent (loss_d, loss_r):" + loss_trace_str(trace));
            };

            Tensor<float> logits_m = codec.decoder().forward(dec_in, true);
            if (!logits_m.all_finite()) diverged("non-finite marked logits");
            auto ld = decoder_loss(logits_m, wm_idx);
            Tensor<float> g_in = codec.decoder().backward(ld.grad);
            Tensor<float> g_marked = cfg.augmentations_enabled ? aug.backward(g_in) : g_in;
            g_marked *= static_cast<float>(lambda);
            codec.generator().backward(g_marked);

            Tensor<float> logits_c = codec.decoder().forward(x, true);
            if (!logits_c.all_finite()) diverged("non-finite clean logits");
            auto lr = regularisation_loss(logits_c);
            codec.decoder().backward(lr.grad);

            trace.emplace_back(ld.value, lr.value);
            if (trace.size() > 16) trace.pop_front();
            if (!std::isfinite(ld.value) || !std::isfinite(lr.value))
                diverged("non-finite loss");

            adam.step();
            sum_d += ld.value;
            sum_r += lr.value;
            ++batches;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lambda = lambda;
        m.loss_d = batches ? sum_d / static_cast<double>(batches) : 0.0;
        m.loss_r = batches ? sum_r / static_cast<double>(batches) : 0.0;
        CodecEval ev = evaluate_codec(codec, held_ds, cfg.lambda_target,
                                      seed ^ 0xa5a5a5a5ull ^ static_cast<uint64_t>(epoch),
                                      opts.eval_limit);
        m.acc_clean = ev.acc_clean;
        m.acc_aug = ev.acc_aug;
        m.wm_mse = ev.wm_mse;
        if (result) result->metrics.push_back(m);
        if (metrics_out) metrics_out << m.to_json().dump() << "\n" << std::flush;
        if (opts.on_epoch) opts.on_epoch(m);

        if (!opts.checkpoint_path.empty()) {
            nlohmann::json extra;
            extra["epoch"] = epoch + 1;
            extra["rng"] = root.state();
            int64_t step = 0;
            std::map<std::string, Tensor<float>> adam_state;
            adam.export_state(adam_state, step);
            extra["adam_step"] = step;
            codec.set_trained(epoch + 1 >= cfg.epochs);
            Checkpoint ck;
            ck.meta["kind"] = "codec";
            ck.meta["config"] = cfg.to_json();
            ck.meta["trained"] = codec.trained();
            for (auto& [k, v] : extra.items()) ck.meta[k] = v;
            for (auto* p : codec.all_params()) ck.tensors[p->name] = p->value;
            for (auto* bf : codec.all_buffers()) ck.tensors[bf->name] = bf->value;
            for (auto& [name, t] : adam_state) ck.tensors[name] = t;
            ck.save(opts.checkpoint_path);
        }
    }

    codec.set_trained(true);
    return codec;
}

}  // namespace provmark::codec
