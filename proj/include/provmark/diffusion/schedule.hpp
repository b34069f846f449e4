#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "provmark/core/tensor.hpp"

namespace provmark::diffusion {

// Noise schedule for restoration training: alpha_bar[t] is the signal
// fraction kept after t degradation steps. alpha_bar[0] = 1 (identity) and
// alpha_bar[T] is near zero.
struct DegradationSchedule {
    int64_t num_steps = 0;          // T
    std::vector<double> alpha_bar;  // size T+1, decreasing, alpha_bar[0] = 1

    double sqrt_ab(int64_t t) const { return std::sqrt(alpha_bar[static_cast<size_t>(t)]); }
    double sqrt_1mab(int64_t t) const {
        return std::sqrt(1.0 - alpha_bar[static_cast<size_t>(t)]);
    }

    void check_t(int64_t t) const {
        if (t < 0 || t > num_steps)
            throw std::out_of_range("schedule: t = " + std::to_string(t) + " outside [0, " +
                                    std::to_string(num_steps) + "]");
    }
};

// Linear per-step noise rates beta_t, spanning the usual [1e-4, 0.02] range
// rescaled by 1000/T so total degradation is comparable across step counts.
inline DegradationSchedule make_schedule(int64_t num_steps) {
    if (num_steps < 1) throw std::invalid_argument("schedule: need at least one step");
    const double scale = 1000.0 / static_cast<double>(num_steps);
    const double lo = 1e-4 * scale, hi = 0.02 * scale;
    DegradationSchedule s;
    s.num_steps = num_steps;
    s.alpha_bar.resize(static_cast<size_t>(num_steps) + 1);
    s.alpha_bar[0] = 1.0;
    for (int64_t t = 1; t <= num_steps; ++t) {
        double f = num_steps > 1 ? static_cast<double>(t - 1) / static_cast<double>(num_steps - 1)
                                 : 1.0;
        double beta = lo + (hi - lo) * f;
        if (!(beta > 0.0 && beta < 1.0))
            throw std::invalid_argument("schedule: step count " + std::to_string(num_steps) +
                                        " pushes beta to " + std::to_string(beta) +
                                        ", outside (0, 1); use more steps");
        s.alpha_bar[static_cast<size_t>(t)] =
            s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - beta);
    }
    return s;
}

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise.
template <typename T>
Tensor<T> degrade(const Tensor<T>& x0, int64_t t, const Tensor<T>& noise,
                  const DegradationSchedule& s) {
    s.check_t(t);
    if (!x0.same_shape(noise))
        throw std::invalid_argument("degrade: noise shape " + shape_str(noise.shape()) +
                                    " does not match image shape " + shape_str(x0.shape()));
    const T a = static_cast<T>(s.sqrt_ab(t));
    const T b = static_cast<T>(s.sqrt_1mab(t));
    Tensor<T> out(x0.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * noise[i];
    return out;
}

}  // namespace provmark::diffusion
