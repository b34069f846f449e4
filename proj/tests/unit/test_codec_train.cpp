#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "provmark/codec/train.hpp"
#include "provmark/data/dataset.hpp"

using namespace provmark;
using namespace provmark::codec;
namespace fs = std::filesystem;

namespace {

CodecConfig tiny_config() {
    CodecConfig cfg;
    cfg.num_watermarks = 4;
    cfg.image_channels = 3;
    cfg.image_size = 8;
    cfg.generator_block_widths = {2, 1};
    cfg.generator_channel_scale = 6;
    cfg.decoder_channel_scale = 6;
    cfg.embedding_dim = 8;
    cfg.mlp_hidden = 12;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.anneal_epochs = 4;
    cfg.lambda_target = 0.1;
    cfg.blur_kernel = 3;
    cfg.blur_sigma = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("train_codec produces metrics, checkpoint and NDJSON log") {
    auto dir = fs::temp_directory_path() / "provmark_test_train";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto ds = data::make_synthetic(64, 4, 8, 21);

    CodecConfig cfg = tiny_config();
    CodecTrainOptions opts;
    opts.checkpoint_path = (dir / "codec.ckpt").string();
    opts.metrics_path = (dir / "metrics.ndjson").string();
    CodecTrainResult res;
    auto codec = train_codec(ds, cfg, 5, opts, &res);

    CHECK(codec.trained());
    REQUIRE(res.metrics.size() == 2);
    CHECK(res.metrics[0].epoch == 0);
    CHECK(res.metrics[0].lambda == doctest::Approx(0.5));
    CHECK(res.metrics[1].lambda == doctest::Approx(0.4));
    for (const auto& m : res.metrics) {
        CHECK(std::isfinite(m.loss_d));
        CHECK(std::isfinite(m.loss_r));
        CHECK(m.loss_r >= std::log(4.0) - 1e-6);
        CHECK(m.acc_clean >= 0.0);
        CHECK(m.acc_clean <= 1.0);
        CHECK(m.wm_mse >= 0.0);
    }

    // NDJSON file has one parseable record per epoch with the agreed fields
    std::ifstream in(opts.metrics_path);
    std::string line;
    int64_t lines = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        for (const char* key : {"epoch", "lambda", "loss_d", "loss_r", "acc_clean",
                                "acc_aug", "wm_mse"})
            CHECK(j.contains(key));
        ++lines;
    }
    CHECK(lines == 2);

    // checkpoint reloads into a usable codec
    auto back = WatermarkCodec<float>::load(opts.checkpoint_path);
    CHECK(back.trained());
    auto wm = back.generate_watermark(2);
    CHECK(wm.shape() == Shape{3, 8, 8});
    fs::remove_all(dir);
}

TEST_CASE("train_codec is deterministic in the seed") {
    auto ds = data::make_synthetic(48, 4, 8, 33);
    CodecConfig cfg = tiny_config();
    cfg.epochs = 1;
    CodecTrainOptions opts;
    CodecTrainResult r1, r2, r3;
    auto c1 = train_codec(ds, cfg, 9, opts, &r1);
    auto c2 = train_codec(ds, cfg, 9, opts, &r2);
    auto c3 = train_codec(ds, cfg, 10, opts, &r3);
    CHECK(r1.metrics[0].loss_d == r2.metrics[0].loss_d);
    CHECK(r1.metrics[0].loss_d != r3.metrics[0].loss_d);
    c1.set_trained(true);
    c2.set_trained(true);
    CHECK(mse(c1.generate_watermark(0), c2.generate_watermark(0)) == 0.0);
}

TEST_CASE("resume continues from the saved epoch") {
    auto dir = fs::temp_directory_path() / "provmark_test_resume";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto ds = data::make_synthetic(48, 4, 8, 13);
    CodecConfig cfg = tiny_config();

    // full run in one go
    CodecTrainResult full;
    auto codec_full = train_codec(ds, cfg, 77, {}, &full);

    // interrupted run: 1 epoch, checkpoint, then resume to completion
    CodecConfig cfg1 = cfg;
    cfg1.epochs = 1;
    CodecTrainOptions o1;
    o1.checkpoint_path = (dir / "part.ckpt").string();
    train_codec(ds, cfg1, 77, o1, nullptr);

    CodecTrainOptions o2;
    o2.resume_from = o1.checkpoint_path;
    CodecTrainResult tail;
    auto codec_resumed = train_codec(ds, cfg, 77, o2, &tail);

    REQUIRE(tail.metrics.size() == 1);
    CHECK(tail.metrics[0].epoch == 1);
    CHECK(tail.metrics[0].loss_d == doctest::Approx(full.metrics[1].loss_d).epsilon(1e-6));
    fs::remove_all(dir);
}

TEST_CASE("non-finite state aborts with epoch and divergence report") {
    auto dir = fs::temp_directory_path() / "provmark_test_diverge";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto ds = data::make_synthetic(32, 4, 8, 3);
    CodecConfig cfg = tiny_config();

    // resuming a checkpoint whose weights went non-finite must abort, not run on
    WatermarkCodec<float> poisoned(cfg, 3);
    for (auto* p : poisoned.all_params())
        if (p->name.find(".fc.weight") != std::string::npos)
            p->value[0] = std::numeric_limits<float>::quiet_NaN();
    nlohmann::json extra;
    extra["epoch"] = 1;
    extra["adam_step"] = 2;
    extra["rng"] = Rng(1).state();
    auto path = (dir / "bad.ckpt").string();
    poisoned.save(path, extra);

    CodecTrainOptions opts;
    opts.resume_from = path;
    CHECK_THROWS_WITH_AS(train_codec(ds, cfg, 1, opts, nullptr),
                         doctest::Contains("diverged at epoch 1"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("train_codec validates dataset resolution") {
    auto ds = data::make_synthetic(32, 4, 16, 3);
    CodecConfig cfg = tiny_config();  // expects 8x8
    CHECK_THROWS_WITH_AS(train_codec(ds, cfg, 1, {}, nullptr),
                         doctest::Contains("resolution"), std::invalid_argument);
}
