#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "provmark/codec/train.hpp"
#include "provmark/core/hash.hpp"
#include "provmark/core/npy.hpp"
#include "provmark/core/yamljson.hpp"
#include "provmark/detect/classifier.hpp"
#include "provmark/diffusion/sample.hpp"
#include "provmark/diffusion/train.hpp"
#include "provmark/pipeline/config.hpp"
#include "provmark/pipeline/run.hpp"
#include "provmark/provenance/marking.hpp"

using namespace provmark;
namespace fs = std::filesystem;

namespace {

void print_stage(const pipeline::StageRecord& r) {
    if (r.status == "failed")
        std::printf("%-18s failed   %6.1fs  %s\n", r.stage.c_str(), r.wall_seconds,
                    r.error.c_str());
    else if (r.status == "skipped")
        std::printf("%-18s skipped\n", r.stage.c_str());
    else
        std::printf("%-18s ok       %6.1fs\n", r.stage.c_str(), r.wall_seconds);
    std::fflush(stdout);
}

void print_report(const detect::TestReport& r) {
    std::printf("images analyzed     %lld\n", static_cast<long long>(r.n_images));
    std::printf("prediction mode     %s\n", r.prediction_mode.c_str());
    if (r.classifier_accuracy >= 0)
        std::printf("classifier holdout  %.3f\n", r.classifier_accuracy);
    if (r.marking.is_object()) {
        std::printf("marking             %lld of %lld images\n",
                    static_cast<long long>(r.marking.value("marked_count", int64_t{0})),
                    static_cast<long long>(r.marking.value("total", int64_t{0})));
        for (const auto& rule : r.marking.value("rules", nlohmann::json::array()))
            std::printf("  %-38s wm %2lld  lambda %.3f  %.1f%%\n",
                        rule.value("selector", std::string()).c_str(),
                        static_cast<long long>(rule.value("watermark", int64_t{-1})),
                        rule.value("lambda", 0.0), 100.0 * rule.value("fraction", 0.0));
    }
    std::printf("\n  wm   statistic     df   p-value\n");
    for (const auto& t : r.tests)
        std::printf("  %2lld   %9.3f  %5.2f   %s\n", static_cast<long long>(t.watermark),
                    t.statistic, t.df, t.p_display.c_str());
    if (r.fid.is_object()) {
        std::printf("\n  class  wm   fid        chi2      n_gen  n_ref\n");
        for (const auto& p : r.fid.value("pairings", nlohmann::json::array()))
            std::printf("  %5lld  %2lld   %-9.3f  %-8.3f  %5lld  %5lld\n",
                        static_cast<long long>(p.value("class", int64_t{0})),
                        static_cast<long long>(p.value("watermark", int64_t{0})),
                        p.value("fid", 0.0), p.value("chi2_statistic", 0.0),
                        static_cast<long long>(p.value("n_generated", int64_t{0})),
                        static_cast<long long>(p.value("n_reference", int64_t{0})));
        if (r.fid.contains("rank_correlation") && !r.fid["rank_correlation"].is_null())
            std::printf("  fid/signal rank correlation %.3f\n",
                        r.fid["rank_correlation"].get<double>());
    }
}

nlohmann::json load_or_empty(const std::string& path) {
    return path.empty() ? nlohmann::json::object() : load_structured_file(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"watermark provenance experiments"};
    app.require_subcommand(1);
    int rc = 0;
    std::function<void()> action;

    // run
    auto* run = app.add_subcommand("run", "run an experiment pipeline end to end");
    std::string run_config, run_preset, run_out, run_name;
    uint64_t run_seed = 0;
    bool run_seed_set = false;
    run->add_option("--config", run_config, "experiment config (.yaml/.json)");
    run->add_option("--preset", run_preset, "named starting configuration");
    run->add_option("--out", run_out, "output directory override");
    run->add_option("--name", run_name, "experiment name override");
    run->add_option("--seed", run_seed, "seed override")->each([&](const std::string&) {
        run_seed_set = true;
    });
    run->callback([&] {
        action = [&, run_config, run_preset, run_out, run_name, run_seed, run_seed_set] {
            if (run_config.empty() && run_preset.empty())
                throw std::invalid_argument("run: need --config or --preset");
            pipeline::ExperimentConfig cfg =
                !run_config.empty() ? pipeline::ExperimentConfig::load(run_config)
                                    : pipeline::ExperimentConfig::preset(run_preset);
            if (!run_config.empty() && !run_preset.empty())
                throw std::invalid_argument("run: --config and --preset are exclusive");
            if (!run_out.empty()) cfg.output_dir = run_out;
            if (!run_name.empty()) cfg.name = run_name;
            if (run_seed_set) cfg.seed = run_seed;
            pipeline::RunOptions opts;
            opts.on_stage = print_stage;
            auto result = pipeline::run_pipeline(cfg, opts);
            std::printf("\nreport: %s\n\n", result.paths.report_json.c_str());
            print_report(result.report);
        };
    });

    // presets
    auto* presets = app.add_subcommand("presets", "list named experiment configurations");
    presets->callback([&] {
        action = [] {
            for (const auto& n : pipeline::ExperimentConfig::preset_names())
                std::printf("%s\n", n.c_str());
        };
    });

    // make-dataset
    auto* mkds = app.add_subcommand("make-dataset", "write a synthetic image corpus");
    std::string mkds_out;
    int64_t mkds_n = 2400, mkds_classes = 4, mkds_size = 32;
    uint64_t mkds_seed = 1;
    mkds->add_option("--out", mkds_out, "dataset directory")->required();
    mkds->add_option("--n", mkds_n, "number of images");
    mkds->add_option("--classes", mkds_classes, "number of classes");
    mkds->add_option("--size", mkds_size, "image resolution");
    mkds->add_option("--seed", mkds_seed, "rng seed");
    mkds->callback([&] {
        action = [&, mkds_out, mkds_n, mkds_classes, mkds_size, mkds_seed] {
            auto ds = data::make_synthetic(mkds_n, mkds_classes, mkds_size, mkds_seed);
            ds.save(mkds_out);
            std::printf("wrote %lld images (%lld classes, %lldx%lld) to %s\n",
                        static_cast<long long>(ds.size()),
                        static_cast<long long>(ds.num_classes()),
                        static_cast<long long>(ds.image_size()),
                        static_cast<long long>(ds.image_size()), mkds_out.c_str());
            std::printf("fingerprint %s\n", ds.fingerprint().c_str());
        };
    });

    // train-codec
    auto* tc = app.add_subcommand("train-codec", "train the watermark generator/decoder");
    std::string tc_dataset, tc_out, tc_config, tc_metrics;
    uint64_t tc_seed = 1;
    tc->add_option("--dataset", tc_dataset, "training corpus directory")->required();
    tc->add_option("--out", tc_out, "checkpoint path")->required();
    tc->add_option("--config", tc_config, "codec config (.yaml/.json)");
    tc->add_option("--metrics", tc_metrics, "per-epoch NDJSON metrics path");
    tc->add_option("--seed", tc_seed, "rng seed");
    tc->callback([&] {
        action = [&, tc_dataset, tc_out, tc_config, tc_metrics, tc_seed] {
            auto ds = data::ImageDataset::load(tc_dataset);
            auto cfg = codec::CodecConfig::from_json(load_or_empty(tc_config));
            cfg.image_channels = ds.channels();
            cfg.image_size = ds.image_size();
            codec::CodecTrainOptions opts;
            opts.checkpoint_path = tc_out;
            opts.resume_from = tc_out;
            opts.metrics_path = tc_metrics;
            opts.on_epoch = [](const codec::EpochMetrics& m) {
                std::printf("epoch %3lld  lambda %.3f  loss_d %.4f  loss_r %.4f  acc %.3f/%.3f\n",
                            static_cast<long long>(m.epoch), m.lambda, m.loss_d, m.loss_r,
                            m.acc_clean, m.acc_aug);
                std::fflush(stdout);
            };
            codec::train_codec(ds, cfg, tc_seed, opts);
            std::printf("codec checkpoint %s (%s)\n", tc_out.c_str(),
                        sha256_file_hex(tc_out).substr(0, 12).c_str());
        };
    });

    // mark
    auto* mk = app.add_subcommand("mark", "resolve a marking plan and blend watermarks");
    std::string mk_dataset, mk_codec, mk_plan, mk_out, mk_manifest;
    double mk_lambda = -1;
    uint64_t mk_seed = 1;
    mk->add_option("--dataset", mk_dataset, "clean corpus directory")->required();
    mk->add_option("--codec", mk_codec, "codec checkpoint")->required();
    mk->add_option("--plan", mk_plan, "marking plan (.yaml/.json)")->required();
    mk->add_option("--out", mk_out, "marked corpus directory")->required();
    mk->add_option("--manifest", mk_manifest, "manifest output path")->required();
    mk->add_option("--lambda", mk_lambda, "blend strength for rules without one");
    mk->add_option("--seed", mk_seed, "rng seed");
    mk->callback([&] {
        action = [&, mk_dataset, mk_codec, mk_plan, mk_out, mk_manifest, mk_lambda, mk_seed] {
            auto ds = data::ImageDataset::load(mk_dataset);
            auto codec = codec::WatermarkCodec<float>::load(mk_codec);
            auto plan = provenance::MarkingPlan::load(mk_plan);
            const std::string codec_hash = sha256_file_hex(mk_codec);
            const double lambda = mk_lambda < 0 ? codec.config().lambda_target : mk_lambda;
            auto manifest = provenance::resolve_plan(plan, ds, codec_hash,
                                                     codec.config().num_watermarks, lambda,
                                                     mk_seed);
            manifest.save(mk_manifest);
            auto marked = provenance::apply_marking(ds, manifest, codec, true, codec_hash);
            marked.save(mk_out);
            auto stats = manifest.rule_stats();
            for (size_t r = 0; r < stats.size(); ++r)
                std::printf("rule %zu [%s] matched %lld images (%.2f%%)\n", r,
                            manifest.plan.rules[r].select.describe().c_str(),
                            static_cast<long long>(stats[r].matched),
                            100.0 * stats[r].fraction);
            std::printf("manifest %s (%s)\n", mk_manifest.c_str(),
                        manifest.hash().substr(0, 12).c_str());
        };
    });

    // train-classifier
    auto* tcl = app.add_subcommand("train-classifier", "train the content classifier");
    std::string tcl_dataset, tcl_out, tcl_config, tcl_attribute;
    uint64_t tcl_seed = 1;
    tcl->add_option("--dataset", tcl_dataset, "training corpus directory")->required();
    tcl->add_option("--out", tcl_out, "checkpoint path")->required();
    tcl->add_option("--config", tcl_config, "classifier config (.yaml/.json)");
    tcl->add_option("--attribute", tcl_attribute, "train on this attribute instead of labels");
    tcl->add_option("--seed", tcl_seed, "rng seed");
    tcl->callback([&] {
        action = [&, tcl_dataset, tcl_out, tcl_config, tcl_attribute, tcl_seed] {
            auto ds = data::ImageDataset::load(tcl_dataset);
            auto cfg = detect::ClassifierConfig::from_json(load_or_empty(tcl_config));
            if (!tcl_attribute.empty()) cfg.label_attribute = tcl_attribute;
            detect::ClassifierTrainResult res;
            auto model = detect::train_attribute_classifier(ds, cfg, tcl_seed, &res);
            detect::save_classifier(model, cfg, res, ds.channels(), tcl_out);
            std::printf("classifier checkpoint %s, holdout accuracy %.3f\n", tcl_out.c_str(),
                        res.holdout_accuracy);
        };
    });

    // train-diffusion
    auto* td = app.add_subcommand("train-diffusion", "train the generative model");
    std::string td_dataset, td_out, td_config, td_metrics;
    uint64_t td_seed = 1;
    td->add_option("--dataset", td_dataset, "training corpus directory")->required();
    td->add_option("--out", td_out, "checkpoint path")->required();
    td->add_option("--config", td_config, "diffusion config (.yaml/.json)");
    td->add_option("--metrics", td_metrics, "per-epoch NDJSON metrics path");
    td->add_option("--seed", td_seed, "rng seed");
    td->callback([&] {
        action = [&, td_dataset, td_out, td_config, td_metrics, td_seed] {
            auto ds = data::ImageDataset::load(td_dataset);
            auto cfg = diffusion::DiffusionConfig::from_json(load_or_empty(td_config));
            cfg.image_channels = ds.channels();
            cfg.image_size = ds.image_size();
            diffusion::DiffusionTrainOptions opts;
            opts.checkpoint_path = td_out;
            opts.resume_from = td_out;
            opts.metrics_path = td_metrics;
            opts.on_epoch = [](const diffusion::DiffusionEpoch& e) {
                std::printf("epoch %3lld  loss %.4f\n", static_cast<long long>(e.epoch), e.loss);
                std::fflush(stdout);
            };
            diffusion::train_denoiser(ds, cfg, td_seed, opts);
            std::printf("denoiser checkpoint %s (%s)\n", td_out.c_str(),
                        sha256_file_hex(td_out).substr(0, 12).c_str());
        };
    });

    // generate
    auto* gen = app.add_subcommand("generate", "sample images from a trained model");
    std::string gen_denoiser, gen_out;
    int64_t gen_n = 64, gen_batch = 64;
    uint64_t gen_seed = 1;
    gen->add_option("--denoiser", gen_denoiser, "denoiser checkpoint")->required();
    gen->add_option("--out", gen_out, "output npy path")->required();
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_option("--batch", gen_batch, "sampling batch size");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->callback([&] {
        action = [&, gen_denoiser, gen_out, gen_n, gen_batch, gen_seed] {
            auto [model, cfg] = diffusion::load_denoiser(gen_denoiser);
            auto schedule = diffusion::make_schedule(cfg.num_steps);
            diffusion::SampleOptions opts;
            opts.batch_size = gen_batch;
            auto images = diffusion::sample(model, schedule, gen_n, gen_seed, opts);
            fs::path out(gen_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            npy_write(gen_out, images);
            std::printf("wrote %lld samples to %s\n", static_cast<long long>(gen_n),
                        gen_out.c_str());
        };
    });

    // analyze
    auto* an = app.add_subcommand("analyze", "test generated images for watermark leakage");
    pipeline::AnalyzeInputs an_in;
    bool an_no_fid = false;
    an->add_option("--samples", an_in.samples_path, "generated image stack (.npy)")->required();
    an->add_option("--codec", an_in.codec_path, "codec checkpoint")->required();
    an->add_option("--classifier", an_in.classifier_path, "classifier checkpoint")->required();
    an->add_option("--out", an_in.out_dir, "report directory")->required();
    an->add_option("--manifest", an_in.manifest_path, "marking manifest for context");
    an->add_option("--dataset", an_in.dataset_dir, "clean reference corpus for FID");
    an->add_option("--mode", an_in.prediction_mode, "prediction mode: sample|argmax");
    an->add_flag("--no-fid", an_no_fid, "skip the FID pairing");
    an->add_option("--fid-min-samples", an_in.fid_min_samples, "per-class sample floor");
    an->add_option("--seed", an_in.seed, "rng seed");
    an->callback([&] {
        action = [&] {
            an_in.fid = !an_no_fid;
            auto report = pipeline::analyze(an_in);
            std::printf("report: %s\n\n", (fs::path(an_in.out_dir) / "report.json").c_str());
            print_report(report);
        };
    });

    // report
    auto* rep = app.add_subcommand("report", "print a saved analysis report");
    std::string rep_path;
    rep->add_option("--report", rep_path, "report.json path")->required();
    rep->callback([&] {
        action = [&, rep_path] { print_report(detect::TestReport::load(rep_path)); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        action();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = 2;
    }
    return rc;
}
