#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/codec/decoder.hpp"
#include "provmark/data/dataset.hpp"

namespace provmark::detect {

// Supervised image classifier used to read the data feature (class or
// attribute) out of generated images, and whose GAP features feed FID.
struct ClassifierConfig {
    std::string arch = "compact";   // compact | standard
    int64_t channel_scale = 16;
    int64_t epochs = 8;
    int64_t batch_size = 32;
    double learning_rate = 1e-3;
    int64_t holdout = 0;            // 0 picks max(n/10, 2 * outputs), capped at n/2
    std::string label_attribute;    // train on this attribute instead of class labels

    void validate() const;
    nlohmann::json to_json() const;
    static ClassifierConfig from_json(const nlohmann::json& j);
};

struct ClassifierTrainResult {
    double holdout_accuracy = 0;
    std::vector<double> losses;            // per-epoch mean cross-entropy
    std::vector<std::string> value_names;  // attribute values (or class ids) per output index
    int64_t num_outputs = 0;
};

codec::ResNetClassifier<float> train_attribute_classifier(const data::ImageDataset& dataset,
                                                          const ClassifierConfig& cfg,
                                                          uint64_t seed,
                                                          ClassifierTrainResult* result = nullptr);

void save_classifier(codec::ResNetClassifier<float>& model, const ClassifierConfig& cfg,
                     const ClassifierTrainResult& train_result, int64_t image_channels,
                     const std::string& path);

struct LoadedClassifier {
    codec::ResNetClassifier<float> model;
    ClassifierConfig cfg;
    int64_t num_outputs = 0;
    double holdout_accuracy = -1;
    std::vector<std::string> value_names;
};

LoadedClassifier load_classifier(const std::string& path);

// Maps each image to a target index. With an empty attribute name targets
// are the class labels; otherwise targets index the sorted distinct values
// of that attribute. Also fills `value_names`.
std::vector<int64_t> classification_targets(const data::ImageDataset& dataset,
                                            const std::string& label_attribute,
                                            std::vector<std::string>& value_names);

}  // namespace provmark::detect
