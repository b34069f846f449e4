#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "provmark/codec/codec.hpp"
#include "provmark/detect/analysis.hpp"
#include "provmark/detect/classifier.hpp"
#include "provmark/detect/fid.hpp"
#include "provmark/detect/figures.hpp"
#include "provmark/detect/histogram.hpp"
#include "provmark/detect/stats.hpp"

using namespace provmark;
using namespace provmark::detect;
namespace fs = std::filesystem;

TEST_CASE("argmax prediction breaks ties toward the lowest index") {
    Rng rng(1);
    CHECK(predict_index({0.1, 0.9, 0.9}, PredictionMode::argmax, rng) == 1);
    CHECK(predict_index({2.0, 2.0}, PredictionMode::argmax, rng) == 0);
    CHECK(predict_index({-1.0, 3.0, 0.0}, PredictionMode::argmax, rng) == 1);
    CHECK_THROWS_AS(predict_index({}, PredictionMode::argmax, rng), std::invalid_argument);
    CHECK_THROWS_AS(predict_index({1.0, std::nan("")}, PredictionMode::sample, rng),
                    std::invalid_argument);
}

TEST_CASE("sampled prediction follows the softmax distribution") {
    Rng rng(7);
    // dominant logit wins essentially always
    for (int i = 0; i < 1000; ++i)
        CHECK(predict_index({50.0, 0.0, 0.0}, PredictionMode::sample, rng) == 0);

    // uniform logits spread evenly
    std::vector<int64_t> counts(4, 0);
    const int64_t n = 100000;
    for (int64_t i = 0; i < n; ++i)
        ++counts[static_cast<size_t>(predict_index({1.0, 1.0, 1.0, 1.0},
                                                   PredictionMode::sample, rng))];
    for (int64_t c : counts)
        CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.01);

    // goodness of fit against uneven probabilities
    std::vector<double> logits{0.0, 1.0, 2.0};
    auto p = stats::softmax(logits);
    std::vector<int64_t> c3(3, 0);
    for (int64_t i = 0; i < n; ++i)
        ++c3[static_cast<size_t>(predict_index(logits, PredictionMode::sample, rng))];
    double t = 0;
    for (size_t k = 0; k < 3; ++k) {
        const double e = p[k] * n;
        t += (c3[k] - e) * (c3[k] - e) / e;
    }
    CHECK(stats::chi_squared_tail(t, 2.0) > 1e-4);
}

TEST_CASE("histogram serialization and validation") {
    DetectionHistogram h;
    h.counts = {{3, 0, 1}, {0, 2, 0}};
    CHECK(h.n_images() == 6);
    CHECK(h.num_watermarks() == 2);
    CHECK(h.num_classes() == 3);
    auto j = h.to_json();
    CHECK(j.at("n_images") == 6);
    auto back = DetectionHistogram::from_json(j);
    CHECK(back.counts == h.counts);

    j["n_images"] = 7;
    CHECK_THROWS_AS(DetectionHistogram::from_json(j), std::invalid_argument);
    DetectionHistogram ragged;
    ragged.counts = {{1, 2}, {1}};
    CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);
    DetectionHistogram negative;
    negative.counts = {{1, -1}};
    CHECK_THROWS_AS(negative.validate(), std::invalid_argument);
}

namespace {

codec::CodecConfig tiny_codec_config() {
    codec::CodecConfig cfg;
    cfg.num_watermarks = 4;
    cfg.image_channels = 3;
    cfg.image_size = 8;
    cfg.generator_block_widths = {2, 1};
    cfg.generator_channel_scale = 6;
    cfg.decoder_channel_scale = 6;
    cfg.embedding_dim = 8;
    cfg.mlp_hidden = 12;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.blur_kernel = 3;
    cfg.blur_sigma = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("build_histogram counts every image exactly once") {
    auto cfg = tiny_codec_config();
    codec::WatermarkCodec<float> codec(cfg, 3);
    Rng crng(5);
    codec::ResNetClassifier<float> classifier("c", "compact", 3, 5, 6, crng);

    auto ds = data::make_synthetic(10, 5, 8, 11);
    auto h = build_histogram(ds.images, codec, classifier, PredictionMode::argmax, 1);
    CHECK(h.num_watermarks() == 4);
    CHECK(h.num_classes() == 5);
    CHECK(h.n_images() == 10);

    // argmax is deterministic
    auto h2 = build_histogram(ds.images, codec, classifier, PredictionMode::argmax, 99);
    CHECK(h2.counts == h.counts);

    // sampled histograms only depend on (seed, image index), not batching
    auto s1 = build_histogram(ds.images, codec, classifier, PredictionMode::sample, 7, 64);
    auto s2 = build_histogram(ds.images, codec, classifier, PredictionMode::sample, 7, 3);
    CHECK(s1.counts == s2.counts);

    // identical inputs fall into one cell under argmax
    Tensor<float> same({6, 3, 8, 8});
    for (int64_t i = 0; i < 6; ++i)
        std::copy_n(ds.images.data(), 3 * 8 * 8, same.data() + i * 3 * 8 * 8);
    auto hs = build_histogram(same, codec, classifier, PredictionMode::argmax, 1);
    int64_t nonzero = 0;
    for (const auto& row : hs.counts)
        for (int64_t v : row) nonzero += v > 0 ? 1 : 0;
    CHECK(nonzero == 1);
    CHECK(hs.n_images() == 6);

    Tensor<float> wrong({2, 3, 16, 16});
    CHECK_THROWS_AS(build_histogram(wrong, codec, classifier, PredictionMode::argmax, 1),
                    std::invalid_argument);
    Tensor<float> empty({0, 3, 8, 8});
    CHECK_THROWS_AS(build_histogram(empty, codec, classifier, PredictionMode::argmax, 1),
                    std::invalid_argument);
}

TEST_CASE("chi squared per watermark matches the worked example") {
    DetectionHistogram h;
    h.counts = {{30, 10}, {10, 30}};
    auto r = chi_squared_per_watermark(h, 0);
    CHECK(r.statistic == doctest::Approx(10.0));
    CHECK(r.df == doctest::Approx(1.0));
    CHECK(r.p_value == doctest::Approx(1.565e-3).epsilon(2e-4));
    CHECK(r.bins_used == 2);
    CHECK(r.pooled_classes.empty());

    // symmetric table: row 1 sees the same statistic
    auto r1 = chi_squared_per_watermark(h, 1);
    CHECK(r1.statistic == doctest::Approx(10.0));

    // identical rows match the null exactly
    DetectionHistogram flat;
    flat.counts = {{5, 7, 3}, {5, 7, 3}, {5, 7, 3}};
    auto rf = chi_squared_per_watermark(flat, 1);
    CHECK(rf.statistic == 0.0);
    CHECK(rf.p_value == 1.0);
}

TEST_CASE("chi squared pools thin classes and rejects empty tables") {
    DetectionHistogram h;
    h.counts = {{30, 10, 1}, {10, 30, 0}};
    auto r = chi_squared_per_watermark(h, 0);
    // expected (20, 20, 0.5): the third class pools into a residual bin
    CHECK(r.pooled_classes == std::vector<int64_t>{2});
    CHECK(r.bins_used == 3);
    CHECK(r.statistic == doctest::Approx(5.0 + 5.0 + 0.5));
    CHECK(r.df == doctest::Approx(1.5));

    DetectionHistogram zero;
    zero.counts = {{0, 0}, {0, 0}};
    CHECK_THROWS_WITH_AS(chi_squared_per_watermark(zero, 0),
                         doctest::Contains("insufficient counts"), std::runtime_error);

    DetectionHistogram thin;
    thin.counts = {{5, 0}, {5, 0}};
    CHECK_THROWS_WITH_AS(chi_squared_per_watermark(thin, 0),
                         doctest::Contains("insufficient counts"), std::runtime_error);

    CHECK_THROWS_AS(chi_squared_per_watermark(h, 5), std::out_of_range);
    DetectionHistogram one_row;
    one_row.counts = {{5, 5}};
    CHECK_THROWS_AS(chi_squared_per_watermark(one_row, 0), std::invalid_argument);
}

TEST_CASE("null histograms give roughly uniform p-values") {
    // null model: every image lands independently in one (watermark, class)
    // cell, which is how histograms of generated images arise. The full
    // calibration runs in the acceptance suite; this is a fast guard.
    Rng rng(17);
    const int64_t c = 8, k = 6, n = 2000;
    std::vector<double> pvals;
    for (int sim = 0; sim < 400; ++sim) {
        DetectionHistogram h;
        h.counts.assign(c, std::vector<int64_t>(k, 0));
        for (int64_t i = 0; i < n; ++i)
            ++h.counts[static_cast<size_t>(rng.below(c))][static_cast<size_t>(rng.below(k))];
        pvals.push_back(chi_squared_per_watermark(h, 0).p_value);
    }
    CHECK(stats::ks_distance_uniform(pvals) < 0.12);
}

TEST_CASE("fid closed forms and failure modes") {
    Rng rng(3);
    Tensor<float> a({60, 4});
    for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.normal());
    CHECK(fid(a, a) <= 1e-8);

    // same covariance, mean shifted by d: fid = |d|^2
    std::vector<double> d{0.5, -1.0, 0.25, 2.0};
    Tensor<float> b(a.shape());
    for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < 4; ++j)
            b.at2(i, j) = a.at2(i, j) + static_cast<float>(d[static_cast<size_t>(j)]);
    double d2 = 0;
    for (double v : d) d2 += v * v;
    CHECK(fid(a, b) == doctest::Approx(d2).epsilon(1e-6));
    CHECK(fid(a, b) == doctest::Approx(fid(b, a)).epsilon(1e-8));

    Tensor<float> skinny({1, 4});
    CHECK_THROWS_AS(fid(a, skinny), std::invalid_argument);
    Tensor<float> wide({30, 5});
    CHECK_THROWS_AS(fid(a, wide), std::invalid_argument);
}

TEST_CASE("jacobi eigendecomposition reconstructs symmetric matrices") {
    Rng rng(9);
    const int64_t d = 6;
    std::vector<double> m(static_cast<size_t>(d * d));
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i; j < d; ++j) {
            const double v = rng.normal();
            m[static_cast<size_t>(i * d + j)] = v;
            m[static_cast<size_t>(j * d + i)] = v;
        }
    std::vector<double> evals, evecs;
    sym_eig(m, d, evals, evecs);
    for (int64_t i = 1; i < d; ++i)
        CHECK(evals[static_cast<size_t>(i)] >= evals[static_cast<size_t>(i - 1)]);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double rec = 0, dot = 0;
            for (int64_t k = 0; k < d; ++k) {
                rec += evecs[static_cast<size_t>(i * d + k)] * evals[static_cast<size_t>(k)] *
                       evecs[static_cast<size_t>(j * d + k)];
                dot += evecs[static_cast<size_t>(k * d + i)] * evecs[static_cast<size_t>(k * d + j)];
            }
            CHECK(std::abs(rec - m[static_cast<size_t>(i * d + j)]) < 1e-10);
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
}

namespace {

Tensor<float> gaussian_features(int64_t n, int64_t d, double mean, double spread, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> f({n, d});
    for (int64_t i = 0; i < f.numel(); ++i)
        f[i] = static_cast<float>(mean + spread * rng.normal());
    return f;
}

}  // namespace

TEST_CASE("fid_vs_signal pairs quality with signal strength") {
    DetectionHistogram h;
    // class 0's watermark fires hard, class 1 mildly, class 2 not at all
    h.counts = {{90, 5, 5}, {10, 60, 30}, {33, 33, 34}};

    std::vector<Tensor<float>> ref{gaussian_features(40, 3, 0.0, 1.0, 1),
                                   gaussian_features(40, 3, 1.0, 1.0, 2),
                                   gaussian_features(40, 3, -1.0, 1.0, 3)};
    // class 0 generates cleanly, class 1 slightly off, class 2 is noise
    std::vector<Tensor<float>> gen{gaussian_features(40, 3, 0.05, 1.0, 4),
                                   gaussian_features(40, 3, 1.6, 1.0, 5),
                                   gaussian_features(40, 3, -1.0, 6.0, 6)};

    auto res = fid_vs_signal(gen, ref, h, {0, 1, 2});
    REQUIRE(res.pairings.size() == 3);
    CHECK(res.excluded_classes.empty());
    CHECK(res.pairings[2].fid_score > res.pairings[0].fid_score);
    CHECK(res.pairings[2].fid_score > res.pairings[1].fid_score);
    CHECK(res.pairings[0].chi2_statistic > res.pairings[2].chi2_statistic);
    REQUIRE(res.rank_correlation.has_value());
    CHECK(*res.rank_correlation < 0);

    // a class without enough generated samples is excluded, not guessed at
    std::vector<Tensor<float>> thin_gen = gen;
    thin_gen[1] = gaussian_features(3, 3, 1.0, 1.0, 5);
    auto res2 = fid_vs_signal(thin_gen, ref, h, {0, 1, 2});
    CHECK(res2.excluded_classes == std::vector<int64_t>{1});
    CHECK(res2.pairings.size() == 2);

    // unmarked classes are skipped entirely
    auto res3 = fid_vs_signal(gen, ref, h, {0, -1, -1});
    CHECK(res3.pairings.size() == 1);
    CHECK_FALSE(res3.rank_correlation.has_value());

    // identical quality everywhere: rank correlation is undefined, not fabricated
    std::vector<Tensor<float>> same{ref[0], ref[0], ref[0]};
    auto res4 = fid_vs_signal(same, same, h, {0, 1, 2});
    CHECK_FALSE(res4.rank_correlation.has_value());
    CHECK(res4.to_json().at("rank_correlation").is_null());

    CHECK_THROWS_AS(fid_vs_signal(gen, ref, h, {0, 1}), std::invalid_argument);
}

TEST_CASE("attribute classifier separates trivially separable classes") {
    Rng rng(5);
    const int64_t n = 120;
    Tensor<float> imgs({n, 3, 8, 8});
    std::vector<int64_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t y = i % 2;
        labels[static_cast<size_t>(i)] = y;
        for (int64_t j = 0; j < 3 * 8 * 8; ++j)
            imgs[i * 3 * 8 * 8 + j] =
                static_cast<float>((y ? 0.5 : -0.5) + 0.1 * rng.normal());
    }
    auto ds = data::make_dataset(imgs, labels);

    ClassifierConfig cfg;
    cfg.channel_scale = 8;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    ClassifierTrainResult info;
    auto model = train_attribute_classifier(ds, cfg, 3, &info);
    CHECK(info.num_outputs == 2);
    CHECK(info.value_names == std::vector<std::string>{"0", "1"});
    CHECK(info.holdout_accuracy >= 0.99);
    REQUIRE(info.losses.size() == 4);
    CHECK(info.losses.back() < info.losses.front());

    // frozen weights answer identically across evaluations
    auto l1 = model.forward(ds.images, false);
    auto l2 = model.forward(ds.images, false);
    CHECK(mse(l1, l2) == 0.0);
}

TEST_CASE("classifier trains on attributes and survives a checkpoint round-trip") {
    auto dir = fs::temp_directory_path() / "provmark_test_classifier";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto ds = data::make_synthetic(96, 2, 8, 21);
    ClassifierConfig cfg;
    cfg.channel_scale = 8;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.label_attribute = "variant";
    ClassifierTrainResult info;
    auto model = train_attribute_classifier(ds, cfg, 3, &info);
    CHECK(info.value_names == std::vector<std::string>{"a", "b"});
    CHECK(info.num_outputs == 2);

    auto path = (dir / "cls.ckpt").string();
    save_classifier(model, cfg, info, ds.channels(), path);
    auto loaded = load_classifier(path);
    CHECK(loaded.num_outputs == 2);
    CHECK(loaded.value_names == info.value_names);
    CHECK(loaded.holdout_accuracy == doctest::Approx(info.holdout_accuracy));
    auto l1 = model.forward(ds.images, false);
    auto l2 = loaded.model.forward(ds.images, false);
    CHECK(mse(l1, l2) == 0.0);

    // single-valued targets are rejected
    auto single = ds.subset({0, 2, 4, 6, 8, 10, 12, 14});
    ClassifierConfig cfg2 = cfg;
    cfg2.label_attribute = "";
    CHECK_THROWS_WITH_AS(train_attribute_classifier(single, cfg2, 1, nullptr),
                         doctest::Contains("single target"), std::invalid_argument);

    // missing attribute is named in the error
    ClassifierConfig cfg3 = cfg;
    cfg3.label_attribute = "absent";
    CHECK_THROWS_WITH_AS(train_attribute_classifier(ds, cfg3, 1, nullptr),
                         doctest::Contains("absent"), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("test report and figures round-trip to disk") {
    auto dir = fs::temp_directory_path() / "provmark_test_report";
    fs::remove_all(dir);
    fs::create_directories(dir);

    TestReport r;
    r.created_at = "2026-01-01T00:00:00Z";
    r.seed = 42;
    r.n_images = 80;
    r.prediction_mode = "sample";
    r.classifier_accuracy = 0.97;
    r.histogram.counts = {{30, 10}, {10, 30}};
    r.tests.push_back(chi_squared_per_watermark(r.histogram, 0));
    r.tests.push_back(chi_squared_per_watermark(r.histogram, 1));
    r.test_parameters = chi_squared_parameters();
    r.marking = {{"lambda", 0.05}};

    auto path = (dir / "report.json").string();
    r.save(path);
    auto back = TestReport::load(path);
    CHECK(back.to_json() == r.to_json());
    CHECK(back.tests[0].p_display == stats::format_p_value(back.tests[0].p_value));

    auto bad = r.to_json();
    bad["schema"] = "something-else";
    CHECK_THROWS_AS(TestReport::from_json(bad), std::runtime_error);

    write_histogram_heatmap(r.histogram, (dir / "heatmap.png").string());
    write_statistic_bars(r.tests, (dir / "bars.png").string());
    FidSignalResult fake;
    FidPairing p;
    p.class_id = 0;
    p.watermark = 0;
    p.fid_score = 1.5;
    p.chi2_statistic = 10.0;
    fake.pairings.push_back(p);
    write_fid_scatter(fake, (dir / "scatter.png").string());

    for (const char* name : {"heatmap.png", "bars.png", "scatter.png"}) {
        std::ifstream in(dir / name, std::ios::binary);
        REQUIRE(in.good());
        unsigned char magic[8] = {};
        in.read(reinterpret_cast<char*>(magic), 8);
        CHECK(magic[0] == 0x89);
        CHECK(magic[1] == 'P');
        CHECK(magic[2] == 'N');
        CHECK(magic[3] == 'G');
    }
    fs::remove_all(dir);
}
