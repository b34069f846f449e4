#pragma once

#include <string>

#include "provmark/core/tensor.hpp"

namespace provmark {

// Minimal NPY (v1.0) support for packed image/feature arrays.
// Handles C-order arrays of dtype <f4, <f8 or |u1.

void npy_write(const std::string& path, const Tensor<float>& t);
void npy_write_u8(const std::string& path, const std::vector<uint8_t>& data, const Shape& shape);

struct NpyArray {
    Shape shape;
    std::string dtype;            // "f4", "f8" or "u1"
    std::vector<float> f32;      // filled when dtype is f4/f8 (f8 narrowed)
    std::vector<uint8_t> u8;     // filled when dtype is u1
};

NpyArray npy_read(const std::string& path);

}  // namespace provmark
