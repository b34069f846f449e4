#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "provmark/core/tensor.hpp"

namespace provmark {

// Self-describing checkpoint container: a JSON header (kind, config, epoch,
// RNG state, tensor directory) followed by raw little-endian float32 blobs.
struct Checkpoint {
    nlohmann::json meta;                       // kind, config, epoch, rng, ...
    std::map<std::string, Tensor<float>> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const Tensor<float>& tensor(const std::string& name) const;
};

}  // namespace provmark
