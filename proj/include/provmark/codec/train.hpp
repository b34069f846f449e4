#pragma once

#include <functional>
#include <string>
#include <vector>

#include "provmark/codec/codec.hpp"
#include "provmark/data/dataset.hpp"

namespace provmark::codec {

// Per-epoch training record, serialized as one NDJSON line.
struct EpochMetrics {
    int64_t epoch = 0;
    double lambda = 0;      // training-time blend strength for this epoch
    double loss_d = 0;      // mean decoder loss over the epoch's batches
    double loss_r = 0;      // mean regularisation loss
    double acc_clean = 0;   // held-out decode accuracy, no augmentation
    double acc_aug = 0;     // held-out decode accuracy under augmentation
    double wm_mse = 0;      // held-out mean squared marked-vs-clean difference

    nlohmann::json to_json() const;
};

struct CodecEval {
    double acc_clean = 0;
    double acc_aug = 0;
    double wm_mse = 0;
};

struct CodecTrainOptions {
    std::string checkpoint_path;   // final checkpoint; empty skips saving
    std::string metrics_path;      // NDJSON epoch records; empty skips
    std::string resume_from;       // continue a partial run if the file exists
    int64_t holdout = 0;           // 0 -> min(max(n/10, 2*C), n/2)
    int64_t eval_limit = 512;      // cap on held-out images scored per epoch
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct CodecTrainResult {
    std::vector<EpochMetrics> metrics;
};

// Joint generator/decoder optimization: random image/watermark pairs, blended
// at the annealed strength, optionally augmented, scored with the decoder
// cross-entropy plus the flat-response regularisation on clean images.
// Non-finite loss aborts with the epoch and a trace of recent batch losses.
WatermarkCodec<float> train_codec(const data::ImageDataset& dataset, const CodecConfig& cfg,
                                  uint64_t seed, const CodecTrainOptions& opts,
                                  CodecTrainResult* result = nullptr);

// Held-out scoring at a fixed blend strength: watermark index i mod C,
// evaluation-mode generator and decoder, augmentation drawn from `seed`.
CodecEval evaluate_codec(WatermarkCodec<float>& codec, const data::ImageDataset& ds,
                         double lambda, uint64_t seed, int64_t limit = 0);

// Argmax with ties broken toward the lowest index.
int64_t argmax_row(const Tensor<float>& logits, int64_t row);

}  // namespace provmark::codec
