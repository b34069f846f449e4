#include "provmark/detect/classifier.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "provmark/codec/losses.hpp"
#include "provmark/core/checkpoint.hpp"
#include "provmark/nn/adam.hpp"

namespace provmark::detect {

using data::ImageDataset;

void ClassifierConfig::validate() const {
    if (arch != "compact" && arch != "standard")
        throw std::invalid_argument("classifier config: arch must be compact|standard");
    if (channel_scale < 1 || epochs < 1 || batch_size < 1 || learning_rate <= 0 || holdout < 0)
        throw std::invalid_argument("classifier config: non-positive field");
}

nlohmann::json ClassifierConfig::to_json() const {
    return {{"arch", arch},
            {"channel_scale", channel_scale},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"holdout", holdout},
            {"label_attribute", label_attribute}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.arch = j.value("arch", c.arch);
    c.channel_scale = j.value("channel_scale", c.channel_scale);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.holdout = j.value("holdout", c.holdout);
    c.label_attribute = j.value("label_attribute", c.label_attribute);
    c.validate();
    return c;
}

std::vector<int64_t> classification_targets(const ImageDataset& dataset,
                                            const std::string& label_attribute,
                                            std::vector<std::string>& value_names) {
    const int64_t n = dataset.size();
    std::vector<int64_t> targets(static_cast<size_t>(n));
    value_names.clear();
    if (label_attribute.empty()) {
        const int64_t k = dataset.num_classes();
        for (int64_t i = 0; i < k; ++i) value_names.push_back(std::to_string(i));
        for (int64_t i = 0; i < n; ++i) targets[static_cast<size_t>(i)] = dataset.labels[static_cast<size_t>(i)];
        return targets;
    }
    auto it = dataset.attributes.find(label_attribute);
    if (it == dataset.attributes.end())
        throw std::invalid_argument("classifier: dataset has no attribute '" + label_attribute +
                                    "'");
    const auto& values = it->second;
    std::set<std::string> distinct(values.begin(), values.end());
    value_names.assign(distinct.begin(), distinct.end());
    std::map<std::string, int64_t> index;
    for (size_t i = 0; i < value_names.size(); ++i)
        index[value_names[i]] = static_cast<int64_t>(i);
    for (int64_t i = 0; i < n; ++i)
        targets[static_cast<size_t>(i)] = index.at(values[static_cast<size_t>(i)]);
    return targets;
}

namespace {

Tensor<float> gather(const Tensor<float>& images, const std::vector<int64_t>& idx, int64_t at,
                     int64_t count) {
    const int64_t chw = images.numel() / images.dim(0);
    Tensor<float> out({count, images.dim(1), images.dim(2), images.dim(3)});
    for (int64_t i = 0; i < count; ++i)
        std::copy_n(images.data() + idx[static_cast<size_t>(at + i)] * chw, chw,
                    out.data() + i * chw);
    return out;
}

int64_t argmax_row(const Tensor<float>& logits, int64_t row) {
    int64_t best = 0;
    for (int64_t j = 1; j < logits.dim(1); ++j)
        if (logits.at2(row, j) > logits.at2(row, best)) best = j;
    return best;
}

}  // namespace

codec::ResNetClassifier<float> train_attribute_classifier(const ImageDataset& dataset,
                                                          const ClassifierConfig& cfg,
                                                          uint64_t seed,
                                                          ClassifierTrainResult* result) {
    cfg.validate();
    dataset.validate();

    std::vector<std::string> value_names;
    std::vector<int64_t> targets = classification_targets(dataset, cfg.label_attribute, value_names);
    const int64_t num_outputs = static_cast<int64_t>(value_names.size());
    std::set<int64_t> distinct(targets.begin(), targets.end());
    if (distinct.size() < 2)
        throw std::invalid_argument(
            "classifier: training data carries a single target value; need at least two");

    const int64_t n = dataset.size();
    int64_t holdout = cfg.holdout;
    if (holdout == 0) holdout = std::min(std::max(n / 10, 2 * num_outputs), n / 2);
    if (holdout < 1 || holdout >= n)
        throw std::invalid_argument("classifier: holdout " + std::to_string(holdout) +
                                    " leaves no usable split for " + std::to_string(n) +
                                    " images");

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(seed ^ 0xc2b2ae3d27d4eb4full);
    split_rng.shuffle(order);
    std::vector<int64_t> held(order.begin(), order.begin() + holdout);
    std::vector<int64_t> train(order.begin() + holdout, order.end());
    if (static_cast<int64_t>(train.size()) < cfg.batch_size)
        throw std::invalid_argument("classifier: training split smaller than one batch");

    Rng root(seed);
    codec::ResNetClassifier<float> model("c", cfg.arch, dataset.channels(), num_outputs,
                                         cfg.channel_scale, root);
    auto params = model.params();
    nn::Adam<float> adam(params, cfg.learning_rate);

    std::vector<double> losses;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = root.fork(static_cast<uint64_t>(epoch) + 1);
        erng.shuffle(train);
        double epoch_loss = 0;
        int64_t steps = 0;
        for (int64_t at = 0; at + cfg.batch_size <= static_cast<int64_t>(train.size());
             at += cfg.batch_size) {
            nn::zero_grads(params);
            Tensor<float> x = gather(dataset.images, train, at, cfg.batch_size);
            std::vector<int64_t> y(static_cast<size_t>(cfg.batch_size));
            for (int64_t i = 0; i < cfg.batch_size; ++i)
                y[static_cast<size_t>(i)] = targets[static_cast<size_t>(train[static_cast<size_t>(at + i)])];
            auto logits = model.forward(x, true);
            if (!logits.all_finite())
                throw std::runtime_error("classifier: diverged at epoch " +
                                         std::to_string(epoch) + " (non-finite logits)");
            auto loss = codec::decoder_loss(logits, y);
            model.backward(loss.grad);
            adam.step();
            epoch_loss += loss.value;
            ++steps;
        }
        losses.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
    }

    int64_t correct = 0;
    for (int64_t at = 0; at < static_cast<int64_t>(held.size()); at += 64) {
        const int64_t count = std::min<int64_t>(64, static_cast<int64_t>(held.size()) - at);
        Tensor<float> x = gather(dataset.images, held, at, count);
        auto logits = model.forward(x, false);
        for (int64_t i = 0; i < count; ++i)
            if (argmax_row(logits, i) ==
                targets[static_cast<size_t>(held[static_cast<size_t>(at + i)])])
                ++correct;
    }

    if (result) {
        result->holdout_accuracy = static_cast<double>(correct) / static_cast<double>(held.size());
        result->losses = std::move(losses);
        result->value_names = value_names;
        result->num_outputs = num_outputs;
    }
    return model;
}

void save_classifier(codec::ResNetClassifier<float>& model, const ClassifierConfig& cfg,
                     const ClassifierTrainResult& train_result, int64_t image_channels,
                     const std::string& path) {
    Checkpoint ck;
    ck.meta["kind"] = "classifier";
    ck.meta["config"] = cfg.to_json();
    ck.meta["num_outputs"] = train_result.num_outputs;
    ck.meta["value_names"] = train_result.value_names;
    ck.meta["holdout_accuracy"] = train_result.holdout_accuracy;
    ck.meta["image_channels"] = image_channels;
    for (auto* p : model.params()) ck.tensors[p->name] = p->value;
    nn::BufferRefs<float> buffers = model.buffers();
    for (auto* b : buffers) ck.tensors[b->name] = b->value;
    ck.save(path);
}

LoadedClassifier load_classifier(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "classifier")
        throw std::runtime_error("checkpoint is not a classifier (kind=" +
                                 ck.meta.value("kind", "?") + ")");
    LoadedClassifier out;
    out.cfg = ClassifierConfig::from_json(ck.meta.at("config"));
    out.num_outputs = ck.meta.at("num_outputs").get<int64_t>();
    out.value_names = ck.meta.value("value_names", std::vector<std::string>{});
    out.holdout_accuracy = ck.meta.value("holdout_accuracy", -1.0);
    const int64_t channels = ck.meta.value("image_channels", int64_t{3});
    Rng rng(0);
    out.model = codec::ResNetClassifier<float>("c", out.cfg.arch, channels, out.num_outputs,
                                               out.cfg.channel_scale, rng);
    for (auto* p : out.model.params()) p->value = ck.tensor(p->name);
    for (auto* b : out.model.buffers()) b->value = ck.tensor(b->name);
    return out;
}

}  // namespace provmark::detect
