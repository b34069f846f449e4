#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "provmark/provenance/marking.hpp"

using namespace provmark;
using namespace provmark::provenance;
namespace fs = std::filesystem;

namespace {

codec::CodecConfig tiny_cfg() {
    codec::CodecConfig cfg;
    cfg.num_watermarks = 4;
    cfg.image_channels = 3;
    cfg.image_size = 8;
    cfg.generator_block_widths = {2, 1};
    cfg.generator_channel_scale = 4;
    cfg.decoder_channel_scale = 4;
    cfg.embedding_dim = 6;
    cfg.mlp_hidden = 8;
    cfg.blur_kernel = 3;
    cfg.blur_sigma = 1.0;
    return cfg;
}

codec::WatermarkCodec<float> tiny_codec() {
    codec::WatermarkCodec<float> c(tiny_cfg(), 11);
    c.set_trained(true);
    return c;
}

}  // namespace

TEST_CASE("class selector marks exactly one class") {
    auto ds = data::make_synthetic(40, 10, 8, 2);
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(0), 0, -1.0});
    auto m = resolve_plan(plan, ds, "codechash", 4, 0.025, 7);
    CHECK(m.marked_count() == 4);
    auto stats = m.rule_stats();
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].matched == 4);
    CHECK(stats[0].fraction == doctest::Approx(0.1));
    CHECK(m.plan.rules[0].lambda == doctest::Approx(0.025));
    for (size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        CHECK(r.id == ds.ids[i]);
        if (i % 10 == 0) {
            CHECK(r.rule == 0);
            CHECK(r.watermark == 0);
        } else {
            CHECK(r.rule == -1);
        }
    }
}

TEST_CASE("split_and_class narrows to one ordinal block") {
    auto ds = data::make_synthetic(100, 10, 8, 2);
    MarkingPlan plan;
    plan.rules.push_back({Selector::split_and_class(1, 5, 0), 2, 0.05});
    auto m = resolve_plan(plan, ds, "h", 4, 0.025, 0);
    // split 1 = ordinals [20, 40); class 0 = multiples of 10 -> {20, 30}
    CHECK(m.marked_count() == 2);
    CHECK(m.rule_stats()[0].fraction == doctest::Approx(0.02));
    CHECK(m.records[20].watermark == 2);
    CHECK(m.records[20].lambda == doctest::Approx(0.05));
    CHECK(m.records[30].rule == 0);
    CHECK(m.records[10].rule == -1);
    CHECK(m.records[40].rule == -1);
}

TEST_CASE("attribute selector uses dataset attributes or external tables") {
    auto ds = data::make_synthetic(20, 2, 8, 5);
    MarkingPlan plan;
    plan.rules.push_back({Selector::attribute_equals("variant", "b"), 1, -1.0});
    auto m = resolve_plan(plan, ds, "h", 4, 0.1, 0);
    CHECK(m.marked_count() == 10);

    // unknown attribute without a table is an error
    MarkingPlan bad;
    bad.rules.push_back({Selector::attribute_equals("glasses", "yes"), 1, -1.0});
    CHECK_THROWS_WITH_AS(resolve_plan(bad, ds, "h", 4, 0.1, 0),
                         doctest::Contains("glasses"), std::invalid_argument);

    // external table keyed by image id fills the gap
    AttributeTables tables;
    tables["glasses"][ds.ids[3]] = "yes";
    tables["glasses"][ds.ids[7]] = "yes";
    tables["glasses"][ds.ids[8]] = "no";
    auto m2 = resolve_plan(bad, ds, "h", 4, 0.1, 0, &tables);
    CHECK(m2.marked_count() == 2);
    CHECK(m2.records[3].rule == 0);
    CHECK(m2.records[7].rule == 0);
    CHECK(m2.records[8].rule == -1);
}

TEST_CASE("id list selector and unknown ids") {
    auto ds = data::make_synthetic(10, 2, 8, 6);
    MarkingPlan plan;
    plan.rules.push_back({Selector::id_list({ds.ids[2], ds.ids[5]}), 3, -1.0});
    auto m = resolve_plan(plan, ds, "h", 4, 0.2, 0);
    CHECK(m.marked_count() == 2);
    CHECK(m.records[5].watermark == 3);

    MarkingPlan missing;
    missing.rules.push_back({Selector::id_list({"999999-nothere"}), 0, -1.0});
    CHECK_THROWS_WITH_AS(resolve_plan(missing, ds, "h", 4, 0.2, 0),
                         doctest::Contains("999999-nothere"), std::invalid_argument);
}

TEST_CASE("overlapping selectors list conflicting ids") {
    auto ds = data::make_synthetic(20, 2, 8, 4);
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(0), 0, -1.0});
    plan.rules.push_back({Selector::attribute_equals("variant", "a"), 1, -1.0});
    // class 0 variant a images sit in both selectors
    try {
        resolve_plan(plan, ds, "h", 4, 0.1, 0);
        FAIL("expected overlap error");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("overlap") != std::string::npos);
        CHECK(msg.find(ds.ids[0]) != std::string::npos);  // ordinal 0: class 0, variant a
        CHECK(msg.find("rules 0, 1") != std::string::npos);
    }
}

TEST_CASE("plan validation bounds watermark index and lambda") {
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(0), 7, -1.0});
    CHECK_THROWS_WITH_AS(plan.validate(4), doctest::Contains("watermark 7"),
                         std::invalid_argument);
    plan.rules[0].watermark = 1;
    plan.rules[0].lambda = 1.5;
    CHECK_THROWS_WITH_AS(plan.validate(4), doctest::Contains("lambda"), std::invalid_argument);
}

TEST_CASE("empty plan marks nothing") {
    auto ds = data::make_synthetic(10, 2, 8, 3);
    auto m = resolve_plan(MarkingPlan{}, ds, "h", 4, 0.1, 0);
    CHECK(m.marked_count() == 0);
    CHECK(m.records.size() == 10);
}

TEST_CASE("apply_marking blends marked rows and keeps the rest bit-identical") {
    auto ds = data::make_synthetic(12, 4, 8, 9);
    auto codec = tiny_codec();
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(1), 2, 0.25});
    auto m = resolve_plan(plan, ds, "h", 4, 0.025, 0);
    auto marked = apply_marking(ds, m, codec, false);

    const int64_t chw = 3 * 8 * 8;
    auto w = codec.generate_watermark(2);
    for (int64_t i = 0; i < 12; ++i) {
        for (int64_t j = 0; j < chw; ++j) {
            float orig = ds.images[i * chw + j];
            float got = marked.images[i * chw + j];
            if (i % 4 == 1) {
                CHECK(got == doctest::Approx(0.25f * w[j] + 0.75f * orig).epsilon(1e-6));
            } else {
                CHECK(got == orig);
            }
        }
    }
    CHECK(marked.ids == ds.ids);
    CHECK(marked.applied_manifests.size() == 1);
    CHECK(marked.applied_manifests[0] == m.hash());
}

TEST_CASE("quantize snaps marked pixels to the 8-bit grid") {
    auto ds = data::make_synthetic(8, 4, 8, 15);
    auto codec = tiny_codec();
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(0), 1, 0.3});
    auto m = resolve_plan(plan, ds, "h", 4, 0.025, 0);
    auto q = apply_marking(ds, m, codec, true);
    const int64_t chw = 3 * 8 * 8;
    for (int64_t j = 0; j < chw; ++j) {
        float v = q.images[j];  // ordinal 0 is marked
        float grid = std::nearbyintf((v + 1.0f) * 127.5f);
        CHECK(std::abs((v + 1.0f) * 127.5f - grid) < 1e-4f);
    }
    // quantization error stays below one grid step
    auto raw = apply_marking(ds, m, codec, false);
    for (int64_t j = 0; j < chw; ++j)
        CHECK(std::abs(q.images[j] - raw.images[j]) <= 1.0f / 127.5f);
}

TEST_CASE("apply_marking refuses stale manifests, double application, wrong codec") {
    auto ds = data::make_synthetic(8, 2, 8, 7);
    auto codec = tiny_codec();
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(0), 0, 0.1});
    auto m = resolve_plan(plan, ds, "codec-a", 4, 0.025, 0);

    auto other = data::make_synthetic(8, 2, 8, 8);
    CHECK_THROWS_WITH_AS(apply_marking(other, m, codec), doctest::Contains("stale"),
                         std::runtime_error);

    auto marked = apply_marking(ds, m, codec);
    CHECK_THROWS_WITH_AS(apply_marking(marked, m, codec), doctest::Contains("already applied"),
                         std::runtime_error);

    CHECK_THROWS_WITH_AS(apply_marking(ds, m, codec, true, "codec-b"),
                         doctest::Contains("not the one"), std::runtime_error);
    CHECK_NOTHROW(apply_marking(ds, m, codec, true, "codec-a"));
}

TEST_CASE("manifest JSON round-trip preserves the hash") {
    auto dir = fs::temp_directory_path() / "provmark_test_manifest";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto ds = data::make_synthetic(10, 2, 8, 1);
    MarkingPlan plan;
    plan.rules.push_back({Selector::class_equals(1), 3, 0.05});
    plan.rules.push_back({Selector::id_list({ds.ids[0]}), 1, -1.0});
    auto m = resolve_plan(plan, ds, "cabc", 8, 0.025, 42);
    auto path = (dir / "manifest.json").string();
    m.save(path);
    auto back = Manifest::load(path);
    CHECK(back.hash() == m.hash());
    CHECK(back.dataset_fingerprint == m.dataset_fingerprint);
    CHECK(back.records.size() == m.records.size());
    CHECK(back.plan.rules[1].lambda == doctest::Approx(0.025));
    CHECK(back.seed == 42);
    fs::remove_all(dir);
}

TEST_CASE("plan files load from yaml and json") {
    auto dir = fs::temp_directory_path() / "provmark_test_plan";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream y(dir / "plan.yaml");
        y << "rules:\n"
             "  - select: {type: class_equals, class: 0}\n"
             "    watermark: 0\n"
             "    lambda: 0.05\n"
             "  - select: {type: split_and_class, split: 1, num_splits: 5, class: 2}\n"
             "    watermark: 3\n";
    }
    auto p = MarkingPlan::load((dir / "plan.yaml").string());
    REQUIRE(p.rules.size() == 2);
    CHECK(p.rules[0].select.type == "class_equals");
    CHECK(p.rules[0].lambda == doctest::Approx(0.05));
    CHECK(p.rules[1].select.num_splits == 5);
    CHECK(p.rules[1].lambda < 0);

    {
        std::ofstream j(dir / "plan.json");
        j << p.to_json().dump();
    }
    auto p2 = MarkingPlan::load((dir / "plan.json").string());
    CHECK(p2.to_json() == p.to_json());
    fs::remove_all(dir);
}
