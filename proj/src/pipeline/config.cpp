#include "provmark/pipeline/config.hpp"

#include <stdexcept>

#include "provmark/core/yamljson.hpp"

namespace provmark::pipeline {

nlohmann::json DatasetSpec::to_json() const {
    return {{"source", source}, {"n", n}, {"classes", classes}, {"image_size", image_size}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
    DatasetSpec s;
    s.source = j.value("source", s.source);
    s.n = j.value("n", s.n);
    s.classes = j.value("classes", s.classes);
    s.image_size = j.value("image_size", s.image_size);
    return s;
}

nlohmann::json GenerateSpec::to_json() const {
    return {{"n", n}, {"batch_size", batch_size}};
}

GenerateSpec GenerateSpec::from_json(const nlohmann::json& j) {
    GenerateSpec s;
    s.n = j.value("n", s.n);
    s.batch_size = j.value("batch_size", s.batch_size);
    return s;
}

nlohmann::json AnalysisSpec::to_json() const {
    return {{"prediction_mode", prediction_mode},
            {"fid", fid},
            {"fid_min_samples", fid_min_samples}};
}

AnalysisSpec AnalysisSpec::from_json(const nlohmann::json& j) {
    AnalysisSpec s;
    s.prediction_mode = j.value("prediction_mode", s.prediction_mode);
    s.fid = j.value("fid", s.fid);
    s.fid_min_samples = j.value("fid_min_samples", s.fid_min_samples);
    return s;
}

void ExperimentConfig::validate() const {
    if (name.empty()) throw std::invalid_argument("experiment: name must not be empty");
    if (output_dir.empty()) throw std::invalid_argument("experiment: output_dir must not be empty");
    if (dataset.source.empty())
        throw std::invalid_argument("experiment: dataset source must not be empty");
    if (dataset.source == "synthetic") {
        if (dataset.n < 1 || dataset.classes < 2 || dataset.image_size < 4)
            throw std::invalid_argument("experiment: bad synthetic dataset spec");
    }
    codec.validate();
    plan.validate(codec.num_watermarks);
    if (marking_lambda >= 0 && !(marking_lambda <= 1.0))
        throw std::invalid_argument("experiment: marking_lambda must be in [0, 1]");
    classifier.validate();
    diffusion.validate();
    if (diffusion.image_size != codec.image_size ||
        diffusion.image_channels != codec.image_channels)
        throw std::invalid_argument("experiment: diffusion and codec image shapes differ");
    if (generate.n < 1 || generate.batch_size < 1)
        throw std::invalid_argument("experiment: generate spec must be positive");
    if (analysis.prediction_mode != "sample" && analysis.prediction_mode != "argmax")
        throw std::invalid_argument("experiment: prediction_mode must be sample|argmax");
    if (analysis.fid_min_samples < 2)
        throw std::invalid_argument("experiment: fid_min_samples must be >= 2");
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"name", name},
            {"seed", seed},
            {"output_dir", output_dir},
            {"dataset", dataset.to_json()},
            {"codec", codec.to_json()},
            {"plan", plan.to_json()},
            {"marking_lambda", marking_lambda},
            {"classifier", classifier.to_json()},
            {"diffusion", diffusion.to_json()},
            {"generate", generate.to_json()},
            {"analysis", analysis.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(nlohmann::json j) {
    if (j.contains("preset")) {
        std::string p = j.at("preset").get<std::string>();
        j.erase("preset");
        nlohmann::json base = preset(p).to_json();
        base.merge_patch(j);
        j = std::move(base);
    }
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j.at("dataset"));
    if (j.contains("codec")) c.codec = codec::CodecConfig::from_json(j.at("codec"));
    if (j.contains("plan")) c.plan = provenance::MarkingPlan::from_json(j.at("plan"));
    c.marking_lambda = j.value("marking_lambda", c.marking_lambda);
    if (j.contains("classifier"))
        c.classifier = detect::ClassifierConfig::from_json(j.at("classifier"));
    if (j.contains("diffusion"))
        c.diffusion = diffusion::DiffusionConfig::from_json(j.at("diffusion"));
    if (j.contains("generate")) c.generate = GenerateSpec::from_json(j.at("generate"));
    if (j.contains("analysis")) c.analysis = AnalysisSpec::from_json(j.at("analysis"));
    return c;
}

namespace {

// Shared desk-scale footing: 32x32 corpus, 16 watermarks, small nets.
ExperimentConfig desk_base() {
    ExperimentConfig c;
    c.seed = 1;
    c.dataset = DatasetSpec{"synthetic", 2400, 4, 32};
    c.codec.num_watermarks = 16;
    c.codec.image_size = 32;
    c.codec.image_channels = 3;
    c.codec.generator_block_widths = {8, 4, 2, 1};
    c.codec.generator_channel_scale = 16;
    c.codec.decoder_channel_scale = 16;
    c.codec.embedding_dim = 32;
    c.codec.mlp_hidden = 64;
    c.codec.epochs = 30;
    c.codec.anneal_epochs = 15;
    c.codec.batch_size = 32;
    c.codec.learning_rate = 1e-3;
    c.codec.lambda_target = 0.05;
    c.classifier.channel_scale = 16;
    c.classifier.epochs = 8;
    c.diffusion.num_steps = 50;
    c.diffusion.channel_scale = 16;
    c.diffusion.block_widths = {1, 2, 2};
    c.diffusion.epochs = 30;
    c.diffusion.batch_size = 32;
    c.diffusion.learning_rate = 1e-3;
    c.diffusion.image_size = 32;
    c.diffusion.image_channels = 3;
    c.generate = GenerateSpec{1000, 64};
    return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
    ExperimentConfig c = desk_base();
    c.name = name;
    c.output_dir = "runs/" + name;
    if (name == "single-class") {
        c.plan.rules = {{provenance::Selector::class_equals(0), 0, -1.0}};
    } else if (name == "all-classes") {
        for (int64_t k = 0; k < 4; ++k)
            c.plan.rules.push_back({provenance::Selector::class_equals(k), k, -1.0});
    } else if (name == "5-of-100") {
        // half the classes marked, each with its own watermark
        c.dataset.classes = 10;
        for (int64_t k = 0; k < 5; ++k)
            c.plan.rules.push_back({provenance::Selector::class_equals(k), k, -1.0});
    } else if (name == "partial-class") {
        // a fifth of one class out of ten: 2% of the corpus
        c.dataset.classes = 10;
        c.plan.rules = {{provenance::Selector::split_and_class(0, 5, 0), 0, -1.0}};
    } else if (name == "attribute") {
        c.plan.rules = {{provenance::Selector::attribute_equals("variant", "b"), 0, -1.0}};
        c.classifier.label_attribute = "variant";
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return c;
}

std::vector<std::string> ExperimentConfig::preset_names() {
    return {"single-class", "all-classes", "5-of-100", "partial-class", "attribute"};
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_json(load_structured_file(path));
}

}  // namespace provmark::pipeline
