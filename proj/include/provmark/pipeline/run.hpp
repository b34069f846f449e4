#pragma once

#include <functional>
#include <string>
#include <vector>

#include "provmark/detect/analysis.hpp"
#include "provmark/pipeline/config.hpp"
#include "provmark/pipeline/ledger.hpp"

namespace provmark::pipeline {

// Fixed artifact layout under an experiment's output directory.
struct PipelinePaths {
    std::string root;
    std::string config;
    std::string ledger;
    std::string dataset_dir;
    std::string codec_ckpt;
    std::string codec_metrics;
    std::string marked_dir;
    std::string manifest;
    std::string classifier_ckpt;
    std::string denoiser_ckpt;
    std::string diffusion_metrics;
    std::string generated_dir;
    std::string generated_images;
    std::string generation_meta;
    std::string report_dir;
    std::string report_json;
    std::string heatmap_png;
    std::string statistics_png;
    std::string fid_scatter_png;

    static PipelinePaths under(const std::string& root);
};

// Standalone analysis over saved artifacts: decode + classify every sample,
// run the per-watermark tests, optionally pair per-class FID against signal
// strength, write report.json and figures into out_dir.
struct AnalyzeInputs {
    std::string samples_path;     // npy stack, NCHW in [-1, 1]
    std::string codec_path;       // codec checkpoint
    std::string classifier_path;  // classifier checkpoint
    std::string manifest_path;    // optional marking context
    std::string dataset_dir;      // optional FID reference corpus
    std::string out_dir;
    std::string prediction_mode = "sample";
    bool fid = true;
    int64_t fid_min_samples = 8;
    uint64_t seed = 1;
};

detect::TestReport analyze(const AnalyzeInputs& in);

struct RunOptions {
    // Called as each stage settles: status is ok, skipped or failed.
    std::function<void(const StageRecord&)> on_stage;
};

struct PipelineResult {
    PipelinePaths paths;
    std::vector<StageRecord> records;  // appended by this invocation
    detect::TestReport report;
};

// Runs dataset -> train-codec -> mark -> train-classifier -> train-diffusion
// -> generate -> analyze. Every stage is journaled in the run ledger; a stage
// whose inputs (config slice plus upstream artifact digests) match a previous
// ok record is skipped when its artifacts are still present. A failed stage
// is journaled and stops the run.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace provmark::pipeline
