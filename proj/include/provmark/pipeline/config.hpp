#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/codec/codec.hpp"
#include "provmark/detect/classifier.hpp"
#include "provmark/diffusion/train.hpp"
#include "provmark/provenance/marking.hpp"

namespace provmark::pipeline {

// Where the training corpus comes from: the built-in synthetic generator or
// a directory of npy shards with label/attribute tables.
struct DatasetSpec {
    std::string source = "synthetic";  // "synthetic" or a directory path
    int64_t n = 2400;                  // synthetic only
    int64_t classes = 4;               // synthetic only
    int64_t image_size = 32;           // synthetic only

    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j);
};

struct GenerateSpec {
    int64_t n = 1000;
    int64_t batch_size = 64;

    nlohmann::json to_json() const;
    static GenerateSpec from_json(const nlohmann::json& j);
};

struct AnalysisSpec {
    std::string prediction_mode = "sample";  // sample | argmax
    bool fid = true;
    int64_t fid_min_samples = 8;

    nlohmann::json to_json() const;
    static AnalysisSpec from_json(const nlohmann::json& j);
};

// One experiment end to end: corpus, codec, marking plan, diffusion model,
// generation size and analysis settings, all under a single seed.
struct ExperimentConfig {
    std::string name = "experiment";
    uint64_t seed = 1;
    std::string output_dir = "runs/experiment";
    DatasetSpec dataset;
    codec::CodecConfig codec;
    provenance::MarkingPlan plan;
    double marking_lambda = -1;  // < 0 uses the codec's target strength
    detect::ClassifierConfig classifier;
    diffusion::DiffusionConfig diffusion;
    GenerateSpec generate;
    AnalysisSpec analysis;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(nlohmann::json j);  // honors "preset"

    // Named starting points mirroring the marking layouts studied here:
    // which subgroups carry which watermark.
    //   single-class   one of 4 classes marked
    //   all-classes    every class carries its own watermark
    //   5-of-100       5 of 10 classes marked (scaled-down analog)
    //   partial-class  one fifth of one of 10 classes (2% of the data)
    //   attribute      images with variant "b" marked, attribute classifier
    static ExperimentConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();

    // Reads YAML or JSON, applies a preset when named, overlays the rest.
    static ExperimentConfig load(const std::string& path);
};

}  // namespace provmark::pipeline
