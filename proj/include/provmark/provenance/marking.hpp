#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "provmark/codec/codec.hpp"
#include "provmark/data/dataset.hpp"

namespace provmark::provenance {

// External attribute tables (attribute name -> image id -> value), for corpora
// whose metadata lives outside the dataset itself.
using AttributeTables = std::map<std::string, std::map<std::string, std::string>>;

// One way of picking a subgroup of a dataset.
struct Selector {
    std::string type;  // class_equals | attribute_equals | split_and_class | id_list
    int64_t class_k = -1;
    std::string attribute, value;
    int64_t split_id = -1;
    int64_t num_splits = 0;
    std::vector<std::string> ids;

    static Selector class_equals(int64_t k);
    static Selector attribute_equals(std::string name, std::string val);
    static Selector split_and_class(int64_t split, int64_t splits, int64_t k);
    static Selector id_list(std::vector<std::string> ids);

    nlohmann::json to_json() const;
    static Selector from_json(const nlohmann::json& j);
    std::string describe() const;

    // Matching dataset ordinals, ascending. Splits are contiguous ordinal
    // blocks. Attribute lookups fall back to `extra` when the dataset does
    // not carry the attribute.
    std::vector<int64_t> select(const data::ImageDataset& ds,
                                const AttributeTables* extra = nullptr) const;
};

struct MarkRule {
    Selector select;
    int64_t watermark = -1;
    double lambda = -1.0;  // < 0 means "use the codec's target strength"

    nlohmann::json to_json() const;
    static MarkRule from_json(const nlohmann::json& j);
};

struct MarkingPlan {
    std::vector<MarkRule> rules;

    void validate(int64_t num_watermarks) const;
    nlohmann::json to_json() const;
    static MarkingPlan from_json(const nlohmann::json& j);
    static MarkingPlan load(const std::string& path);  // .yaml/.yml/.json
};

// Per-image marking decision; rule -1 means unmarked.
struct ManifestRecord {
    std::string id;
    int64_t rule = -1;
    int64_t watermark = -1;
    double lambda = 0.0;
};

struct RuleStats {
    int64_t matched = 0;
    double fraction = 0.0;
};

// Auditable record of exactly which images were marked how, bound to the
// dataset content and the codec checkpoint that produced the watermarks.
struct Manifest {
    std::string schema = "provmark-manifest-v1";
    std::string dataset_fingerprint;
    std::string codec_checkpoint;
    std::string created_at;
    uint64_t seed = 0;
    MarkingPlan plan;                     // rules with effective lambdas
    std::vector<ManifestRecord> records;  // one per image, ordinal order

    int64_t marked_count() const;
    std::vector<RuleStats> rule_stats() const;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Manifest load(const std::string& path);
    std::string hash() const;  // sha256 of the canonical JSON form
};

// Deterministically assigns rules to images. Overlapping selectors abort with
// the conflicting image ids. `default_lambda` substitutes for rules that did
// not state a strength.
Manifest resolve_plan(const MarkingPlan& plan, const data::ImageDataset& ds,
                      const std::string& codec_checkpoint_hash, int64_t num_watermarks,
                      double default_lambda, uint64_t seed,
                      const AttributeTables* extra_attrs = nullptr);

// Blends each marked image with its assigned watermark; unmarked images stay
// bit-identical. Refuses stale manifests (fingerprint mismatch), double
// application, and, when `expect_codec_hash` is non-empty, a codec other than
// the one the manifest was resolved against. `quantize` snaps marked pixels
// to the 8-bit grid, as file-based pipelines would.
data::ImageDataset apply_marking(const data::ImageDataset& ds, const Manifest& manifest,
                                 codec::WatermarkCodec<float>& codec, bool quantize = true,
                                 const std::string& expect_codec_hash = "");

inline float quantize_u8(float v) {
    float q = std::nearbyintf((v + 1.0f) * 127.5f);
    return std::min(255.0f, std::max(0.0f, q)) / 127.5f - 1.0f;
}

}  // namespace provmark::provenance
