#include <doctest.h>

#include "grad_check.hpp"
#include "provmark/codec/augment.hpp"

using namespace provmark;
using namespace provmark::codec;
using namespace grad_check;

namespace {

Tensor<double> image_batch(int64_t n, Rng& rng, int64_t size = 8) {
    Tensor<double> x({n, 3, size, size});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::tanh(rng.normal());
    return x;
}

}  // namespace

TEST_CASE("identity draw leaves the image untouched") {
    Rng rng(1);
    auto x = image_batch(2, rng);
    AugmentParams id;  // all stages off
    CHECK(id.identity());
    Augmenter<double> aug;
    auto y = aug.forward(x, {id, id});
    CHECK(mse(x, y) == 0.0);
}

TEST_CASE("horizontal flip is an involution") {
    Rng rng(2);
    auto x = image_batch(1, rng);
    AugmentParams flip;
    flip.flip = true;
    Augmenter<double> aug;
    auto once = aug.forward(x, {flip});
    CHECK(mse(once, x) > 1e-4);  // actually moved pixels
    auto twice = aug.forward(once, {flip});
    CHECK(mse(twice, x) < 1e-24);
}

TEST_CASE("seeded augmentation is deterministic") {
    Rng rng(3);
    auto x = image_batch(4, rng);
    auto a = augment(x, 777);
    auto b = augment(x, 777);
    CHECK(mse(a, b) == 0.0);
    auto c = augment(x, 778);
    CHECK(mse(a, c) > 0.0);
}

TEST_CASE("augmentation preserves shape and range") {
    Rng rng(4);
    auto x = image_batch(6, rng, 16);
    auto y = augment(x, 12345);
    CHECK(y.shape() == x.shape());
    CHECK(y.min() >= -1.0 - 1e-9);
    CHECK(y.max() <= 1.0 + 1e-9);
}

TEST_CASE("rotation exposes corners filled with black") {
    Tensor<double> x({1, 1, 16, 16}, 1.0);  // all-white single channel
    AugmentParams rot;
    rot.rotate = true;
    rot.angle_deg = 45.0;
    Augmenter<double> aug;
    auto y = aug.forward(x, {rot});
    CHECK(y.at4(0, 0, 0, 0) < -0.5);   // corner leaves the frame
    CHECK(y.at4(0, 0, 8, 8) > 0.99);   // center remains white
}

TEST_CASE("zoom crop magnifies the center region") {
    // image with a bright center dot; zooming in keeps it central and larger
    Tensor<double> x({1, 1, 17, 17}, -1.0);
    x.at4(0, 0, 8, 8) = 1.0;
    AugmentParams crop;
    crop.crop = true;
    crop.zoom = 1.6;
    crop.cx = 0.0;
    crop.cy = 0.0;
    Augmenter<double> aug;
    auto y = aug.forward(x, {crop});
    CHECK(y.at4(0, 0, 8, 8) > -0.5);
    // mass of the bright spot spread out but total bright area increased
    double bright_in = 0, bright_out = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        bright_in += x[i] > 0 ? 1 : 0;
        bright_out += y[i] > -0.9 ? 1 : 0;
    }
    CHECK(bright_out >= bright_in);
}

TEST_CASE("full augmentation pipeline gradient matches finite differences") {
    Rng rng(5);
    auto x = image_batch(2, rng);
    std::vector<AugmentParams> ps(2);
    ps[0].flip = true;
    ps[0].rotate = true;
    ps[0].angle_deg = 23.0;
    ps[0].crop = true;
    ps[0].zoom = 1.4;
    ps[0].cx = 0.1;
    ps[0].cy = -0.15;
    ps[0].blur = true;
    ps[0].sigma = 0.8;
    ps[1].rotate = true;
    ps[1].angle_deg = -41.0;
    ps[1].blur = true;
    ps[1].sigma = 0.3;

    Augmenter<double> aug;
    auto y0 = aug.forward(x, ps);
    auto w = random_tensor(y0.shape(), rng);
    auto loss = [&] { return weighted_sum(aug.forward(x, ps), w); };
    aug.forward(x, ps);
    auto gx = aug.backward(w);
    CHECK(max_rel_err(x, gx, loss) < 1e-6);
}

TEST_CASE("augmenter validates batch shape") {
    Augmenter<double> aug;
    Tensor<double> x({2, 3, 8, 8});
    CHECK_THROWS_AS(aug.forward(x, {AugmentParams{}}), std::invalid_argument);
    Tensor<double> flat({8, 8});
    CHECK_THROWS_AS(aug.forward(flat, {AugmentParams{}}), std::invalid_argument);
}

TEST_CASE("parameter sampling respects stated ranges") {
    Rng rng(9);
    int geo = 0;
    for (int i = 0; i < 2000; ++i) {
        auto p = sample_augment_params(rng);
        CHECK(p.angle_deg >= -45.0);
        CHECK(p.angle_deg <= 45.0);
        CHECK(p.zoom >= 1.0);
        CHECK(p.zoom <= 1.75);
        // crop window stays inside the frame
        CHECK(std::fabs(p.cx) + 1.0 / p.zoom <= 1.0 + 1e-12);
        CHECK(std::fabs(p.cy) + 1.0 / p.zoom <= 1.0 + 1e-12);
        CHECK(p.sigma > 0.0);
        if (p.geometric()) ++geo;
    }
    // each stage fires with probability 1/2, so most draws have some geometry
    CHECK(geo > 1500);
    CHECK(geo < 1950);
}
