#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "provmark/core/hash.hpp"
#include "provmark/pipeline/config.hpp"
#include "provmark/pipeline/ledger.hpp"
#include "provmark/pipeline/run.hpp"

using namespace provmark;
using namespace provmark::pipeline;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig c;
    c.name = "tiny";
    c.seed = 7;
    c.output_dir = out_dir;
    c.dataset = DatasetSpec{"synthetic", 120, 3, 8};
    c.codec.num_watermarks = 4;
    c.codec.image_size = 8;
    c.codec.generator_block_widths = {2, 1};
    c.codec.generator_channel_scale = 4;
    c.codec.decoder_channel_scale = 4;
    c.codec.embedding_dim = 8;
    c.codec.mlp_hidden = 16;
    c.codec.epochs = 2;
    c.codec.anneal_epochs = 1;
    c.codec.batch_size = 16;
    c.codec.learning_rate = 1e-3;
    c.codec.lambda_target = 0.1;
    c.plan.rules = {{provenance::Selector::class_equals(0), 0, -1.0}};
    c.classifier.channel_scale = 4;
    c.classifier.epochs = 2;
    c.classifier.batch_size = 16;
    c.diffusion.num_steps = 25;
    c.diffusion.channel_scale = 4;
    c.diffusion.block_widths = {1, 2};
    c.diffusion.epochs = 2;
    c.diffusion.batch_size = 16;
    c.diffusion.learning_rate = 1e-3;
    c.diffusion.image_size = 8;
    c.generate = GenerateSpec{24, 16};
    c.analysis.fid_min_samples = 2;
    return c;
}

std::vector<std::string> statuses(const std::vector<StageRecord>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.stage + ":" + r.status);
    return out;
}

}  // namespace

TEST_CASE("presets wire the marking layouts") {
    auto single = ExperimentConfig::preset("single-class");
    REQUIRE(single.plan.rules.size() == 1);
    CHECK(single.plan.rules[0].select.type == "class_equals");
    CHECK(single.plan.rules[0].select.class_k == 0);
    CHECK(single.plan.rules[0].watermark == 0);
    CHECK(single.codec.num_watermarks == 16);
    CHECK_NOTHROW(single.validate());

    auto all = ExperimentConfig::preset("all-classes");
    REQUIRE(all.plan.rules.size() == 4);
    for (int64_t k = 0; k < 4; ++k) {
        CHECK(all.plan.rules[static_cast<size_t>(k)].select.class_k == k);
        CHECK(all.plan.rules[static_cast<size_t>(k)].watermark == k);
    }
    CHECK_NOTHROW(all.validate());

    auto five = ExperimentConfig::preset("5-of-100");
    CHECK(five.dataset.classes == 10);
    CHECK(five.plan.rules.size() == 5);
    CHECK_NOTHROW(five.validate());

    auto partial = ExperimentConfig::preset("partial-class");
    CHECK(partial.dataset.classes == 10);
    REQUIRE(partial.plan.rules.size() == 1);
    CHECK(partial.plan.rules[0].select.type == "split_and_class");
    CHECK(partial.plan.rules[0].select.num_splits == 5);
    CHECK_NOTHROW(partial.validate());

    auto attr = ExperimentConfig::preset("attribute");
    REQUIRE(attr.plan.rules.size() == 1);
    CHECK(attr.plan.rules[0].select.type == "attribute_equals");
    CHECK(attr.plan.rules[0].select.attribute == "variant");
    CHECK(attr.classifier.label_attribute == "variant");
    CHECK_NOTHROW(attr.validate());

    CHECK_THROWS_WITH_AS(ExperimentConfig::preset("nope"), doctest::Contains("unknown preset"),
                         std::invalid_argument);
    CHECK(ExperimentConfig::preset_names().size() == 5);
}

TEST_CASE("config json honors presets and overlays") {
    nlohmann::json j{{"preset", "single-class"},
                     {"name", "custom"},
                     {"seed", 9},
                     {"codec", {{"num_watermarks", 8}}},
                     {"diffusion", {{"num_steps", 30}}}};
    auto c = ExperimentConfig::from_json(j);
    CHECK(c.name == "custom");
    CHECK(c.seed == 9);
    CHECK(c.codec.num_watermarks == 8);
    CHECK(c.codec.image_size == 32);  // untouched preset field
    CHECK(c.diffusion.num_steps == 30);
    CHECK(c.plan.rules.size() == 1);

    auto back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    auto bad = tiny_config("x");
    bad.analysis.prediction_mode = "guess";
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("prediction_mode"),
                         std::invalid_argument);
    auto mismatched = tiny_config("x");
    mismatched.diffusion.image_size = 16;
    CHECK_THROWS_WITH_AS(mismatched.validate(), doctest::Contains("image shapes"),
                         std::invalid_argument);
}

TEST_CASE("config files load from yaml with preset expansion") {
    auto dir = fs::temp_directory_path() / "provmark_test_expcfg";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream y(dir / "exp.yaml");
        y << "preset: attribute\n"
             "name: from-yaml\n"
             "seed: 11\n"
             "generate: {n: 64}\n";
    }
    auto c = ExperimentConfig::load((dir / "exp.yaml").string());
    CHECK(c.name == "from-yaml");
    CHECK(c.seed == 11);
    CHECK(c.generate.n == 64);
    CHECK(c.generate.batch_size == 64);
    CHECK(c.classifier.label_attribute == "variant");
    fs::remove_all(dir);
}

TEST_CASE("run ledger journals and reloads records") {
    auto dir = fs::temp_directory_path() / "provmark_test_ledger";
    fs::remove_all(dir);
    auto path = (dir / "ledger.ndjson").string();

    RunLedger ledger(path);
    CHECK(ledger.records().empty());

    StageRecord a;
    a.stage = "dataset";
    a.input_hash = "h1";
    a.output_hash = "o1";
    a.status = "ok";
    ledger.append(a);
    StageRecord b = a;
    b.status = "failed";
    b.error = "boom";
    b.output_hash = "";
    ledger.append(b);
    StageRecord c = a;
    c.output_hash = "o2";
    ledger.append(c);

    CHECK(ledger.records().size() == 3);
    CHECK(!ledger.records()[0].created_at.empty());
    REQUIRE(ledger.last_ok("dataset", "h1") != nullptr);
    CHECK(ledger.last_ok("dataset", "h1")->output_hash == "o2");
    CHECK(ledger.last_ok("dataset", "h2") == nullptr);
    CHECK(ledger.last_ok("mark", "h1") == nullptr);

    RunLedger back(path);
    REQUIRE(back.records().size() == 3);
    CHECK(back.records()[1].status == "failed");
    CHECK(back.records()[1].error == "boom");

    StageRecord bad = a;
    bad.status = "pending";
    CHECK_THROWS_AS(ledger.append(bad), std::invalid_argument);

    {
        std::ofstream out(path, std::ios::app);
        out << "not json\n";
    }
    CHECK_THROWS_WITH_AS(RunLedger{path}, doctest::Contains("bad json"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("pipeline runs end to end, skips unchanged stages, reruns downstream of edits") {
    auto dir = fs::temp_directory_path() / "provmark_test_pipeline";
    fs::remove_all(dir);
    auto cfg = tiny_config((dir / "run").string());

    auto first = run_pipeline(cfg);
    const std::vector<std::string> want{"dataset:ok",          "train-codec:ok",
                                        "mark:ok",             "train-classifier:ok",
                                        "train-diffusion:ok",  "generate:ok",
                                        "analyze:ok"};
    CHECK(statuses(first.records) == want);
    for (const auto& p :
         {first.paths.config, first.paths.ledger, first.paths.codec_ckpt, first.paths.manifest,
          first.paths.classifier_ckpt, first.paths.denoiser_ckpt, first.paths.generated_images,
          first.paths.generation_meta, first.paths.report_json, first.paths.heatmap_png,
          first.paths.statistics_png, first.paths.fid_scatter_png})
        CHECK(fs::exists(p));
    CHECK(fs::exists(first.paths.dataset_dir));
    CHECK(fs::exists(first.paths.marked_dir));

    CHECK(first.report.n_images == 24);
    CHECK(first.report.histogram.num_watermarks() == 4);
    CHECK(first.report.histogram.num_classes() == 3);
    CHECK(first.report.tests.size() == 4);
    CHECK(first.report.classifier_accuracy >= 0);
    CHECK(first.report.marking.contains("rules"));
    CHECK(first.report.fid.contains("pairings"));

    const std::string report_sha = sha256_file_hex(first.paths.report_json);

    auto second = run_pipeline(cfg);
    std::vector<std::string> skipped;
    for (const auto& s : {"dataset", "train-codec", "mark", "train-classifier", "train-diffusion",
                          "generate", "analyze"})
        skipped.push_back(std::string(s) + ":skipped");
    CHECK(statuses(second.records) == skipped);
    CHECK(sha256_file_hex(second.paths.report_json) == report_sha);
    for (size_t i = 0; i < 7; ++i)
        CHECK(second.records[i].output_hash == first.records[i].output_hash);

    auto edited = cfg;
    edited.generate.n = 32;
    auto third = run_pipeline(edited);
    const std::vector<std::string> partial{"dataset:skipped",         "train-codec:skipped",
                                           "mark:skipped",            "train-classifier:skipped",
                                           "train-diffusion:skipped", "generate:ok",
                                           "analyze:ok"};
    CHECK(statuses(third.records) == partial);
    CHECK(third.report.n_images == 32);
    CHECK(third.records[5].output_hash != first.records[5].output_hash);

    RunLedger journal(first.paths.ledger);
    CHECK(journal.records().size() == 21);
    fs::remove_all(dir);
}

TEST_CASE("failed stage is journaled and halts the run") {
    auto dir = fs::temp_directory_path() / "provmark_test_pipeline_fail";
    fs::remove_all(dir);
    auto cfg = tiny_config((dir / "run").string());
    cfg.plan.rules = {{provenance::Selector::attribute_equals("nonexistent", "x"), 0, -1.0}};

    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("attribute"), std::invalid_argument);

    RunLedger journal(PipelinePaths::under(cfg.output_dir).ledger);
    REQUIRE(journal.records().size() == 3);
    CHECK(journal.records()[0].stage == "dataset");
    CHECK(journal.records()[0].status == "ok");
    CHECK(journal.records()[1].stage == "train-codec");
    CHECK(journal.records()[1].status == "ok");
    CHECK(journal.records()[2].stage == "mark");
    CHECK(journal.records()[2].status == "failed");
    CHECK(journal.records()[2].error.find("attribute") != std::string::npos);
    CHECK(!fs::exists(PipelinePaths::under(cfg.output_dir).denoiser_ckpt));

    // fixing the plan reuses the surviving stages and completes the rest
    cfg.plan.rules = {{provenance::Selector::class_equals(1), 2, -1.0}};
    auto fixed = run_pipeline(cfg);
    CHECK(statuses(fixed.records)[0] == "dataset:skipped");
    CHECK(statuses(fixed.records)[1] == "train-codec:skipped");
    CHECK(statuses(fixed.records)[2] == "mark:ok");
    CHECK(fixed.report.n_images == 24);
    fs::remove_all(dir);
}

TEST_CASE("standalone analysis works without a manifest") {
    auto dir = fs::temp_directory_path() / "provmark_test_pipeline_analyze";
    fs::remove_all(dir);
    auto cfg = tiny_config((dir / "run").string());
    auto run = run_pipeline(cfg);

    AnalyzeInputs in;
    in.samples_path = run.paths.generated_images;
    in.codec_path = run.paths.codec_ckpt;
    in.classifier_path = run.paths.classifier_ckpt;
    in.out_dir = (dir / "bare").string();
    in.prediction_mode = "argmax";
    in.seed = 5;
    auto report = analyze(in);
    CHECK(report.n_images == 24);
    CHECK(report.prediction_mode == "argmax");
    CHECK(report.marking.is_null());
    CHECK(report.fid.is_null());
    CHECK(fs::exists(dir / "bare" / "report.json"));
    CHECK(!fs::exists(dir / "bare" / "fid_scatter.png"));

    AnalyzeInputs missing = in;
    missing.samples_path = "";
    CHECK_THROWS_WITH_AS(analyze(missing), doctest::Contains("required"), std::invalid_argument);
    fs::remove_all(dir);
}
