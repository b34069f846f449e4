#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "provmark/core/tensor.hpp"

namespace provmark::data {

// In-memory image corpus: float NCHW pixels in [-1, 1] plus per-image labels,
// string attributes and stable content-addressed ids. Marking produces a new
// dataset with the same ids; applied_manifests records which manifests have
// already been applied so a second application can be rejected.
struct ImageDataset {
    Tensor<float> images;                                    // (N, C, H, W)
    std::vector<int64_t> labels;                             // size N
    std::map<std::string, std::vector<std::string>> attributes;
    std::vector<std::string> ids;                            // "000042-ab12cd34ef"
    std::vector<std::string> applied_manifests;              // manifest hashes

    int64_t size() const { return images.rank() == 4 ? images.dim(0) : 0; }
    int64_t channels() const { return images.dim(1); }
    int64_t image_size() const { return images.dim(2); }
    int64_t num_classes() const;

    void validate() const;

    // SHA-256 over pixel bytes, labels and attributes. Identifies the exact
    // content a manifest was resolved against.
    std::string fingerprint() const;

    ImageDataset subset(const std::vector<int64_t>& indices) const;

    // Shuffled split; second element holds `holdout` images.
    std::pair<ImageDataset, ImageDataset> split_holdout(int64_t holdout, uint64_t seed) const;

    void save(const std::string& dir) const;    // images.npy + meta.json
    static ImageDataset load(const std::string& dir);
};

// Builds a dataset from raw arrays, assigning ordinal+content-hash ids.
ImageDataset make_dataset(Tensor<float> images, std::vector<int64_t> labels,
                          std::map<std::string, std::vector<std::string>> attributes = {});

// K-class synthetic corpus: per-class palette colour and oriented sinusoid
// with random phase/amplitude, plus smooth blobs and pixel noise. Classes
// interleave by ordinal (label = i mod K) so any contiguous ordinal block is
// class-balanced. Each image carries attribute "variant" in {a, b}: variant b
// flips the sinusoid sign and alternates deterministically within each class.
ImageDataset make_synthetic(int64_t n, int64_t num_classes, int64_t image_size, uint64_t seed);

// Contiguous ordinal-block split id in [0, num_splits).
int64_t split_of(int64_t ordinal, int64_t n, int64_t num_splits);

// Reads a directory of packed NPY shards (*.npy, lexicographic order) with
// labels.json and optional attributes.json. u8 pixels are mapped to [-1, 1];
// f4 pixels are validated as already in range. Shards with mismatched
// resolutions are reported by name.
ImageDataset ingest_dir(const std::string& dir);

}  // namespace provmark::data
