#pragma once

#include <functional>

#include "provmark/core/rng.hpp"
#include "provmark/diffusion/schedule.hpp"
#include "provmark/diffusion/unet.hpp"

namespace provmark::diffusion {

// Batched restoration step: given degraded images and one step per image,
// predict the clean images.
using DenoiseFn =
    std::function<Tensor<float>(const Tensor<float>&, const std::vector<int64_t>&)>;

struct SampleOptions {
    int64_t batch_size = 64;
    int64_t* eval_counter = nullptr;  // counts model invocations when set
};

// Iterative refinement from Gaussian noise: at each step the model estimates
// the clean image, the effective noise is re-derived from the current state,
// and the pair is re-degraded one step less. Runs exactly T model evaluations
// per batch; output is clamped to [-1, 1] at the end. The i-th sample depends
// only on (seed, i), not on the batch split.
Tensor<float> sample(const DenoiseFn& model, const DegradationSchedule& schedule, int64_t n,
                     int64_t channels, int64_t image_size, uint64_t seed,
                     const SampleOptions& opts = {});

Tensor<float> sample(UNetDenoiser<float>& model, const DegradationSchedule& schedule, int64_t n,
                     uint64_t seed, const SampleOptions& opts = {});

}  // namespace provmark::diffusion
