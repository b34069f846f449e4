#include "provmark/diffusion/sample.hpp"

#include <algorithm>

namespace provmark::diffusion {

Tensor<float> sample(const DenoiseFn& model, const DegradationSchedule& schedule, int64_t n,
                     int64_t channels, int64_t image_size, uint64_t seed,
                     const SampleOptions& opts) {
    if (n < 0) throw std::invalid_argument("sample: negative count");
    const int64_t chw = channels * image_size * image_size;
    Tensor<float> out({n, channels, image_size, image_size});
    if (n == 0) return out;

    Rng root(seed);
    const int64_t bs = std::max<int64_t>(1, opts.batch_size);
    for (int64_t at = 0; at < n; at += bs) {
        const int64_t b = std::min(bs, n - at);
        Tensor<float> x({b, channels, image_size, image_size});
        for (int64_t i = 0; i < b; ++i) {
            Rng r = root.fork(static_cast<uint64_t>(at + i));
            for (int64_t j = 0; j < chw; ++j)
                x[i * chw + j] = static_cast<float>(r.normal());
        }

        for (int64_t t = schedule.num_steps; t >= 1; --t) {
            std::vector<int64_t> ts(static_cast<size_t>(b), t);
            Tensor<float> x0 = model(x, ts);
            if (opts.eval_counter) ++*opts.eval_counter;
            const float sa = static_cast<float>(schedule.sqrt_ab(t));
            const float sb = static_cast<float>(schedule.sqrt_1mab(t));
            const float pa = static_cast<float>(schedule.sqrt_ab(t - 1));
            const float pb = static_cast<float>(schedule.sqrt_1mab(t - 1));
            // eps re-estimated from the current state, then re-degraded one
            // step less: x_{t-1} = pa * x0 + pb * (x_t - sa * x0) / sb
            for (int64_t i = 0; i < x.numel(); ++i) {
                const float eps = (x[i] - sa * x0[i]) / sb;
                x[i] = pa * x0[i] + pb * eps;
            }
        }
        x.clamp(-1.0f, 1.0f);
        std::copy_n(x.data(), b * chw, out.data() + at * chw);
    }
    return out;
}

Tensor<float> sample(UNetDenoiser<float>& model, const DegradationSchedule& schedule, int64_t n,
                     uint64_t seed, const SampleOptions& opts) {
    DenoiseFn fn = [&model](const Tensor<float>& x, const std::vector<int64_t>& t) {
        return model.forward(x, t);
    };
    return sample(fn, schedule, n, model.image_channels(), model.image_size(), seed, opts);
}

}  // namespace provmark::diffusion
