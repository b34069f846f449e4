#include "provmark/detect/histogram.hpp"

#include <algorithm>
#include <stdexcept>

#include "provmark/detect/stats.hpp"

namespace provmark::detect {

PredictionMode prediction_mode_from_string(const std::string& s) {
    if (s == "sample") return PredictionMode::sample;
    if (s == "argmax") return PredictionMode::argmax;
    throw std::invalid_argument("prediction mode must be 'sample' or 'argmax', got '" + s + "'");
}

std::string to_string(PredictionMode mode) {
    return mode == PredictionMode::sample ? "sample" : "argmax";
}

int64_t predict_index(const std::vector<double>& logits, PredictionMode mode, Rng& rng) {
    if (logits.empty()) throw std::invalid_argument("predict_index: empty logits");
    for (double v : logits)
        if (!std::isfinite(v)) throw std::invalid_argument("predict_index: non-finite logit");
    if (mode == PredictionMode::argmax) {
        int64_t best = 0;
        for (size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
        return best;
    }
    std::vector<double> p = stats::softmax(logits);
    const double u = rng.uniform();
    double acc = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(p.size()) - 1;
}

int64_t DetectionHistogram::n_images() const {
    int64_t total = 0;
    for (const auto& row : counts)
        for (int64_t v : row) total += v;
    return total;
}

void DetectionHistogram::validate() const {
    if (counts.empty() || counts.front().empty())
        throw std::invalid_argument("histogram: empty count matrix");
    const size_t cols = counts.front().size();
    for (const auto& row : counts) {
        if (row.size() != cols) throw std::invalid_argument("histogram: ragged count matrix");
        for (int64_t v : row)
            if (v < 0) throw std::invalid_argument("histogram: negative count");
    }
}

nlohmann::json DetectionHistogram::to_json() const {
    return {{"counts", counts}, {"n_images", n_images()}};
}

DetectionHistogram DetectionHistogram::from_json(const nlohmann::json& j) {
    DetectionHistogram h;
    h.counts = j.at("counts").get<std::vector<std::vector<int64_t>>>();
    h.validate();
    if (j.contains("n_images") && j.at("n_images").get<int64_t>() != h.n_images())
        throw std::invalid_argument("histogram: n_images does not match the counts");
    return h;
}

DetectionHistogram build_histogram(const Tensor<float>& images,
                                   codec::WatermarkCodec<float>& codec,
                                   codec::ResNetClassifier<float>& classifier,
                                   PredictionMode mode, uint64_t seed, int64_t batch_size) {
    if (images.rank() != 4 || images.dim(0) == 0)
        throw std::invalid_argument("build_histogram: need a non-empty (N,C,H,W) image stack");
    const auto& cfg = codec.config();
    if (images.dim(1) != cfg.image_channels || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_size)
        throw std::invalid_argument("build_histogram: image stack " + shape_str(images.shape()) +
                                    " does not match the codec resolution (" +
                                    std::to_string(cfg.image_channels) + "," +
                                    std::to_string(cfg.image_size) + "," +
                                    std::to_string(cfg.image_size) + ")");

    const int64_t n = images.dim(0);
    const int64_t chw = images.numel() / n;
    Rng root(seed);
    DetectionHistogram h;

    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t count = std::min(batch_size, n - at);
        Tensor<float> batch({count, images.dim(1), images.dim(2), images.dim(3)});
        std::copy_n(images.data() + at * chw, count * chw, batch.data());

        Tensor<float> wm_logits = codec.decode(batch);
        Tensor<float> cls_logits = classifier.forward(batch, false);
        if (!wm_logits.all_finite() || !cls_logits.all_finite())
            throw std::runtime_error("build_histogram: non-finite logits");

        const int64_t num_wm = wm_logits.dim(1);
        const int64_t num_cls = cls_logits.dim(1);
        if (h.counts.empty())
            h.counts.assign(static_cast<size_t>(num_wm),
                            std::vector<int64_t>(static_cast<size_t>(num_cls), 0));

        for (int64_t i = 0; i < count; ++i) {
            Rng irng = root.fork(static_cast<uint64_t>(at + i));
            std::vector<double> wrow(static_cast<size_t>(num_wm));
            for (int64_t j = 0; j < num_wm; ++j) wrow[static_cast<size_t>(j)] = wm_logits.at2(i, j);
            std::vector<double> crow(static_cast<size_t>(num_cls));
            for (int64_t j = 0; j < num_cls; ++j) crow[static_cast<size_t>(j)] = cls_logits.at2(i, j);
            const int64_t w = predict_index(wrow, mode, irng);
            const int64_t k = predict_index(crow, mode, irng);
            ++h.counts[static_cast<size_t>(w)][static_cast<size_t>(k)];
        }
    }
    return h;
}

Tensor<float> extract_features(codec::ResNetClassifier<float>& classifier,
                               const Tensor<float>& images, int64_t batch_size) {
    if (images.rank() != 4)
        throw std::invalid_argument("extract_features: need an (N,C,H,W) image stack");
    const int64_t n = images.dim(0);
    Tensor<float> out({n, classifier.feature_dim()});
    if (n == 0) return out;
    const int64_t chw = images.numel() / n;
    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t count = std::min(batch_size, n - at);
        Tensor<float> batch({count, images.dim(1), images.dim(2), images.dim(3)});
        std::copy_n(images.data() + at * chw, count * chw, batch.data());
        classifier.forward(batch, false);
        const Tensor<float>& f = classifier.features();
        std::copy_n(f.data(), f.numel(), out.data() + at * classifier.feature_dim());
    }
    return out;
}

}  // namespace provmark::detect
