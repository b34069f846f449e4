#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "provmark/core/rng.hpp"
#include "provmark/core/tensor.hpp"

namespace provmark::nn {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

    void zero_grad() { grad.zero(); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

// Persistent non-trainable state (BN running stats) that checkpoints carry.
template <typename T>
struct Buffer {
    std::string name;
    Tensor<T> value;
    Buffer() = default;
    Buffer(std::string n, Shape shape, T fill = T(0)) : name(std::move(n)), value(shape, fill) {}
};

template <typename T>
using BufferRefs = std::vector<Buffer<T>*>;

template <typename T>
void kaiming_normal(Tensor<T>& w, int64_t fan_in, Rng& rng, double gain = std::sqrt(2.0)) {
    double std = gain / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
}

template <typename T>
void normal_init(Tensor<T>& w, double std, Rng& rng) {
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
}

template <typename T>
int64_t param_count(const ParamRefs<T>& params) {
    int64_t n = 0;
    for (auto* p : params) n += p->value.numel();
    return n;
}

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
    for (auto* p : params) p->zero_grad();
}

}  // namespace provmark::nn
