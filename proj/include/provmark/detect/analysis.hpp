#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/core/tensor.hpp"
#include "provmark/detect/histogram.hpp"

namespace provmark::detect {

// Per-watermark goodness-of-fit against the pooled null: the expected count
// for each class is the mean of that class's counts across all watermark
// rows. Classes whose expected count falls below 1 are pooled into one
// residual bin before the test. Because the tested row contributes 1/C of
// every expected value, the statistic has bins - bins/C effective degrees of
// freedom rather than bins - 1; calibration against simulated nulls picks
// this out clearly, and reports carry the rule so the choice is auditable.
struct ChiSquaredResult {
    int64_t watermark = 0;
    double statistic = 0;
    double df = 0;
    double p_value = 1;
    std::string p_display;            // "<1e-300" under extreme underflow
    int64_t bins_used = 0;            // effective bins after pooling
    std::vector<int64_t> pooled_classes;

    nlohmann::json to_json() const;
    static ChiSquaredResult from_json(const nlohmann::json& j);
};

ChiSquaredResult chi_squared_per_watermark(const DetectionHistogram& h, int64_t watermark);

// The JSON block every report carries so the test is reproducible from the
// report alone.
nlohmann::json chi_squared_parameters();

// One class's generation quality against the strength of its watermark's
// statistic.
struct FidPairing {
    int64_t class_id = 0;
    int64_t watermark = 0;
    double fid_score = 0;
    double chi2_statistic = 0;
    int64_t n_generated = 0;
    int64_t n_reference = 0;

    nlohmann::json to_json() const;
};

struct FidSignalOptions {
    int64_t min_samples = 8;  // per side, per class
};

struct FidSignalResult {
    std::vector<FidPairing> pairings;
    std::vector<int64_t> excluded_classes;      // too few samples on a side
    std::optional<double> rank_correlation;     // undefined when rank variance is 0

    nlohmann::json to_json() const;
};

// Pairs each marked class's FID (generated vs clean reference features)
// with the chi-squared statistic of the watermark assigned to that class.
// watermark_of_class[k] < 0 marks class k as unpaired and skips it.
FidSignalResult fid_vs_signal(const std::vector<Tensor<float>>& generated_by_class,
                              const std::vector<Tensor<float>>& reference_by_class,
                              const DetectionHistogram& hist,
                              const std::vector<int64_t>& watermark_of_class,
                              const FidSignalOptions& opts = {});

// Full analysis output: histogram, per-watermark tests, and the context
// needed to interpret them (marking plan stats, prediction mode, seed).
struct TestReport {
    std::string created_at;
    uint64_t seed = 0;
    int64_t n_images = 0;
    std::string prediction_mode = "sample";
    double classifier_accuracy = -1;  // held-out accuracy; -1 when unknown
    DetectionHistogram histogram;
    std::vector<ChiSquaredResult> tests;
    nlohmann::json test_parameters;
    nlohmann::json marking;  // lambda + per-rule marked fractions, from the manifest
    nlohmann::json fid;      // fid_vs_signal output when computed

    nlohmann::json to_json() const;
    static TestReport from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static TestReport load(const std::string& path);
};

}  // namespace provmark::detect
