#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/codec/codec.hpp"
#include "provmark/codec/decoder.hpp"
#include "provmark/core/rng.hpp"
#include "provmark/core/tensor.hpp"

namespace provmark::detect {

enum class PredictionMode { sample, argmax };

PredictionMode prediction_mode_from_string(const std::string& s);
std::string to_string(PredictionMode mode);

// One predicted index for a row of logits: `sample` draws from the softmax
// distribution, `argmax` takes the maximum with ties broken toward the
// lowest index.
int64_t predict_index(const std::vector<double>& logits, PredictionMode mode, Rng& rng);

// Watermark x class count matrix; every decoded image lands in exactly one
// cell.
struct DetectionHistogram {
    std::vector<std::vector<int64_t>> counts;

    int64_t num_watermarks() const { return static_cast<int64_t>(counts.size()); }
    int64_t num_classes() const {
        return counts.empty() ? 0 : static_cast<int64_t>(counts.front().size());
    }
    int64_t n_images() const;
    void validate() const;

    nlohmann::json to_json() const;
    static DetectionHistogram from_json(const nlohmann::json& j);
};

// Decodes every image's watermark and classifies its content, adding one
// count at (watermark, class). The i-th image's sampling randomness comes
// from fork(i) of the seed, so the histogram does not depend on batching.
DetectionHistogram build_histogram(const Tensor<float>& images,
                                   codec::WatermarkCodec<float>& codec,
                                   codec::ResNetClassifier<float>& classifier,
                                   PredictionMode mode, uint64_t seed,
                                   int64_t batch_size = 64);

// Classifier GAP features for a stack of images, batched; rows align with
// the input order. These are the FID embeddings.
Tensor<float> extract_features(codec::ResNetClassifier<float>& classifier,
                               const Tensor<float>& images, int64_t batch_size = 64);

}  // namespace provmark::detect
