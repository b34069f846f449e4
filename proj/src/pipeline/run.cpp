#include "provmark/pipeline/run.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "provmark/codec/train.hpp"
#include "provmark/core/hash.hpp"
#include "provmark/core/npy.hpp"
#include "provmark/core/yamljson.hpp"
#include "provmark/detect/classifier.hpp"
#include "provmark/detect/figures.hpp"
#include "provmark/diffusion/sample.hpp"
#include "provmark/diffusion/train.hpp"
#include "provmark/provenance/marking.hpp"

namespace fs = std::filesystem;

namespace provmark::pipeline {

PipelinePaths PipelinePaths::under(const std::string& root) {
    auto at = [&](const char* rel) { return (fs::path(root) / rel).string(); };
    PipelinePaths p;
    p.root = root;
    p.config = at("config.json");
    p.ledger = at("ledger.ndjson");
    p.dataset_dir = at("dataset");
    p.codec_ckpt = at("codec.ckpt");
    p.codec_metrics = at("codec_metrics.ndjson");
    p.marked_dir = at("marked");
    p.manifest = at("manifest.json");
    p.classifier_ckpt = at("classifier.ckpt");
    p.denoiser_ckpt = at("denoiser.ckpt");
    p.diffusion_metrics = at("diffusion_metrics.ndjson");
    p.generated_dir = at("generated");
    p.generated_images = at("generated/images.npy");
    p.generation_meta = at("generated/generation.json");
    p.report_dir = at("report");
    p.report_json = at("report/report.json");
    p.heatmap_png = at("report/heatmap.png");
    p.statistics_png = at("report/statistics.png");
    p.fid_scatter_png = at("report/fid_scatter.png");
    return p;
}

namespace {

std::string stage_hash(const std::string& stage, const nlohmann::json& slice,
                       const std::vector<std::string>& upstream) {
    nlohmann::json j{{"stage", stage}, {"config", slice}, {"upstream", upstream}};
    return sha256_hex(j.dump());
}

bool attempted(const RunLedger& ledger, const std::string& stage, const std::string& input_hash) {
    for (const auto& r : ledger.records())
        if (r.stage == stage && r.input_hash == input_hash) return true;
    return false;
}

bool all_present(const std::vector<std::string>& paths) {
    return std::all_of(paths.begin(), paths.end(),
                       [](const std::string& p) { return fs::exists(p); });
}

// Journaled stage execution. A prior ok record with the same inputs skips the
// stage when its artifacts survive. Inputs never attempted before clear the
// artifact paths first so trainers cannot resume into a checkpoint written
// under a different configuration or seed.
std::string run_stage(RunLedger& ledger, const RunOptions& opts, const std::string& stage,
                      const std::string& input_hash, const std::vector<std::string>& artifacts,
                      const std::function<std::string()>& execute) {
    auto emit = [&](StageRecord r) {
        ledger.append(std::move(r));
        if (opts.on_stage) opts.on_stage(ledger.records().back());
    };
    if (const StageRecord* prior = ledger.last_ok(stage, input_hash);
        prior && all_present(artifacts)) {
        StageRecord r;
        r.stage = stage;
        r.input_hash = input_hash;
        r.output_hash = prior->output_hash;
        r.status = "skipped";
        emit(std::move(r));
        return ledger.records().back().output_hash;
    }
    if (!attempted(ledger, stage, input_hash))
        for (const auto& p : artifacts) fs::remove_all(p);

    StageRecord r;
    r.stage = stage;
    r.input_hash = input_hash;
    const auto t0 = std::chrono::steady_clock::now();
    auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    try {
        r.output_hash = execute();
    } catch (const std::exception& e) {
        r.status = "failed";
        r.error = e.what();
        r.wall_seconds = seconds();
        emit(std::move(r));
        throw;
    }
    r.status = "ok";
    r.wall_seconds = seconds();
    emit(std::move(r));
    return ledger.records().back().output_hash;
}

// Which watermark each classifier output index is tied to by the plan, -1
// when none. Class rules map through the label, attribute rules through the
// classifier's value names.
std::vector<int64_t> watermark_of_class(const provenance::MarkingPlan& plan, int64_t num_classes,
                                        const std::string& label_attribute,
                                        const std::vector<std::string>& value_names) {
    std::vector<int64_t> wm(static_cast<size_t>(num_classes), -1);
    for (const auto& rule : plan.rules) {
        int64_t k = -1;
        if (label_attribute.empty()) {
            if (rule.select.type == "class_equals" || rule.select.type == "split_and_class")
                k = rule.select.class_k;
        } else if (rule.select.type == "attribute_equals" &&
                   rule.select.attribute == label_attribute) {
            auto it = std::find(value_names.begin(), value_names.end(), rule.select.value);
            if (it != value_names.end()) k = it - value_names.begin();
        }
        if (k >= 0 && k < num_classes && wm[static_cast<size_t>(k)] < 0)
            wm[static_cast<size_t>(k)] = rule.watermark;
    }
    return wm;
}

Tensor<float> take_rows(const Tensor<float>& src, const std::vector<int64_t>& rows) {
    const int64_t width = src.dim(0) == 0 ? 0 : src.numel() / src.dim(0);
    Tensor<float> out({static_cast<int64_t>(rows.size()), src.dim(1)});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(src.data() + rows[i] * width, width,
                    out.data() + static_cast<int64_t>(i) * width);
    return out;
}

}  // namespace

detect::TestReport analyze(const AnalyzeInputs& in) {
    if (in.samples_path.empty() || in.codec_path.empty() || in.classifier_path.empty() ||
        in.out_dir.empty())
        throw std::invalid_argument("analyze: samples, codec, classifier and out_dir are required");

    NpyArray arr = npy_read(in.samples_path);
    if (arr.shape.size() != 4)
        throw std::invalid_argument("analyze: sample stack must be (N,C,H,W), got " +
                                    shape_str(arr.shape));
    if (arr.dtype == "u1")
        throw std::invalid_argument("analyze: sample stack must be float in [-1, 1]");
    Tensor<float> samples(arr.shape);
    std::copy(arr.f32.begin(), arr.f32.end(), samples.data());

    auto codec = codec::WatermarkCodec<float>::load(in.codec_path);
    detect::LoadedClassifier clf = detect::load_classifier(in.classifier_path);
    const auto mode = detect::prediction_mode_from_string(in.prediction_mode);

    detect::TestReport report;
    report.created_at = iso8601_utc_now();
    report.seed = in.seed;
    report.n_images = samples.dim(0);
    report.prediction_mode = in.prediction_mode;
    report.classifier_accuracy = clf.holdout_accuracy;
    report.histogram = detect::build_histogram(samples, codec, clf.model, mode, in.seed);
    for (int64_t w = 0; w < report.histogram.num_watermarks(); ++w)
        report.tests.push_back(detect::chi_squared_per_watermark(report.histogram, w));
    report.test_parameters = detect::chi_squared_parameters();

    provenance::Manifest manifest;
    const bool have_manifest = !in.manifest_path.empty();
    if (have_manifest) {
        manifest = provenance::Manifest::load(in.manifest_path);
        const auto stats = manifest.rule_stats();
        nlohmann::json rules = nlohmann::json::array();
        for (size_t r = 0; r < manifest.plan.rules.size(); ++r) {
            const auto& rule = manifest.plan.rules[r];
            rules.push_back({{"selector", rule.select.describe()},
                             {"watermark", rule.watermark},
                             {"lambda", rule.lambda},
                             {"matched", stats[r].matched},
                             {"fraction", stats[r].fraction}});
        }
        report.marking = {{"manifest", manifest.hash()},
                          {"marked_count", manifest.marked_count()},
                          {"total", static_cast<int64_t>(manifest.records.size())},
                          {"rules", rules}};
    }

    std::optional<detect::FidSignalResult> fid_result;
    if (in.fid && have_manifest && !in.dataset_dir.empty()) {
        data::ImageDataset reference = data::ImageDataset::load(in.dataset_dir);
        const int64_t num_out = clf.num_outputs;

        std::vector<std::string> ref_names;
        std::vector<int64_t> ref_target =
            detect::classification_targets(reference, clf.cfg.label_attribute, ref_names);
        std::vector<int64_t> remap(ref_names.size(), -1);
        for (size_t i = 0; i < ref_names.size(); ++i) {
            auto it = std::find(clf.value_names.begin(), clf.value_names.end(), ref_names[i]);
            if (it != clf.value_names.end()) remap[i] = it - clf.value_names.begin();
        }

        std::vector<std::vector<int64_t>> ref_rows(static_cast<size_t>(num_out));
        for (int64_t i = 0; i < reference.size(); ++i) {
            const int64_t k = remap[static_cast<size_t>(ref_target[static_cast<size_t>(i)])];
            if (k >= 0) ref_rows[static_cast<size_t>(k)].push_back(i);
        }

        const int64_t n = samples.dim(0);
        const int64_t fd = clf.model.feature_dim();
        const int64_t chw = samples.numel() / n;
        Tensor<float> feats({n, fd});
        std::vector<std::vector<int64_t>> gen_rows(static_cast<size_t>(num_out));
        const int64_t bs = 64;
        for (int64_t at = 0; at < n; at += bs) {
            const int64_t count = std::min(bs, n - at);
            Tensor<float> batch({count, samples.dim(1), samples.dim(2), samples.dim(3)});
            std::copy_n(samples.data() + at * chw, count * chw, batch.data());
            Tensor<float> logits = clf.model.forward(batch, false);
            const Tensor<float>& f = clf.model.features();
            std::copy_n(f.data(), f.numel(), feats.data() + at * fd);
            for (int64_t i = 0; i < count; ++i)
                gen_rows[static_cast<size_t>(codec::argmax_row(logits, i))].push_back(at + i);
        }

        std::vector<Tensor<float>> gen_by_class, ref_by_class;
        for (int64_t k = 0; k < num_out; ++k) {
            gen_by_class.push_back(take_rows(feats, gen_rows[static_cast<size_t>(k)]));
            ref_by_class.push_back(detect::extract_features(
                clf.model, reference.subset(ref_rows[static_cast<size_t>(k)]).images));
        }

        detect::FidSignalOptions fopts;
        fopts.min_samples = in.fid_min_samples;
        fid_result = detect::fid_vs_signal(
            gen_by_class, ref_by_class, report.histogram,
            watermark_of_class(manifest.plan, num_out, clf.cfg.label_attribute, clf.value_names),
            fopts);
        report.fid = fid_result->to_json();
    }

    fs::create_directories(in.out_dir);
    const fs::path out(in.out_dir);
    report.save((out / "report.json").string());
    detect::write_histogram_heatmap(report.histogram, (out / "heatmap.png").string());
    detect::write_statistic_bars(report.tests, (out / "statistics.png").string());
    if (fid_result) detect::write_fid_scatter(*fid_result, (out / "fid_scatter.png").string());
    return report;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    PipelinePaths paths = PipelinePaths::under(cfg.output_dir);
    fs::create_directories(paths.root);
    {
        std::ofstream out(paths.config);
        if (!out) throw std::runtime_error("pipeline: cannot write " + paths.config);
        out << cfg.to_json().dump(2) << "\n";
    }

    RunLedger ledger(paths.ledger);
    const size_t first_new = ledger.records().size();

    nlohmann::json ds_slice{{"dataset", cfg.dataset.to_json()}, {"seed", cfg.seed}};
    std::optional<data::ImageDataset> external;
    if (cfg.dataset.source != "synthetic") {
        external = data::ImageDataset::load(cfg.dataset.source);
        ds_slice["source_fingerprint"] = external->fingerprint();
    }
    const std::string ds_hash = run_stage(
        ledger, opts, "dataset", stage_hash("dataset", ds_slice, {}), {paths.dataset_dir}, [&] {
            data::ImageDataset ds =
                external ? std::move(*external)
                         : data::make_synthetic(cfg.dataset.n, cfg.dataset.classes,
                                                cfg.dataset.image_size, cfg.seed);
            if (ds.image_size() != cfg.codec.image_size ||
                ds.channels() != cfg.codec.image_channels)
                throw std::runtime_error("pipeline: dataset shape does not match the codec config");
            ds.save(paths.dataset_dir);
            return ds.fingerprint();
        });

    const std::string codec_hash = run_stage(
        ledger, opts, "train-codec",
        stage_hash("train-codec", {{"codec", cfg.codec.to_json()}, {"seed", cfg.seed + 1}},
                   {ds_hash}),
        {paths.codec_ckpt}, [&] {
            data::ImageDataset ds = data::ImageDataset::load(paths.dataset_dir);
            codec::CodecTrainOptions topts;
            topts.checkpoint_path = paths.codec_ckpt;
            topts.metrics_path = paths.codec_metrics;
            topts.resume_from = paths.codec_ckpt;
            codec::train_codec(ds, cfg.codec, cfg.seed + 1, topts);
            return sha256_file_hex(paths.codec_ckpt);
        });

    const double lambda = cfg.marking_lambda < 0 ? cfg.codec.lambda_target : cfg.marking_lambda;
    const std::string mark_hash = run_stage(
        ledger, opts, "mark",
        stage_hash("mark",
                   {{"plan", cfg.plan.to_json()}, {"lambda", lambda}, {"seed", cfg.seed + 2}},
                   {ds_hash, codec_hash}),
        {paths.marked_dir, paths.manifest}, [&] {
            data::ImageDataset ds = data::ImageDataset::load(paths.dataset_dir);
            auto codec = codec::WatermarkCodec<float>::load(paths.codec_ckpt);
            provenance::Manifest manifest =
                provenance::resolve_plan(cfg.plan, ds, codec_hash, cfg.codec.num_watermarks,
                                         lambda, cfg.seed + 2);
            manifest.save(paths.manifest);
            data::ImageDataset marked = provenance::apply_marking(ds, manifest, codec, true,
                                                                  codec_hash);
            marked.save(paths.marked_dir);
            return sha256_hex(manifest.hash() + ":" + marked.fingerprint());
        });

    const std::string clf_hash = run_stage(
        ledger, opts, "train-classifier",
        stage_hash("train-classifier",
                   {{"classifier", cfg.classifier.to_json()}, {"seed", cfg.seed + 3}}, {ds_hash}),
        {paths.classifier_ckpt}, [&] {
            data::ImageDataset ds = data::ImageDataset::load(paths.dataset_dir);
            detect::ClassifierTrainResult res;
            auto model = detect::train_attribute_classifier(ds, cfg.classifier, cfg.seed + 3, &res);
            detect::save_classifier(model, cfg.classifier, res, ds.channels(),
                                    paths.classifier_ckpt);
            return sha256_file_hex(paths.classifier_ckpt);
        });

    const std::string denoiser_hash = run_stage(
        ledger, opts, "train-diffusion",
        stage_hash("train-diffusion",
                   {{"diffusion", cfg.diffusion.to_json()}, {"seed", cfg.seed + 4}}, {mark_hash}),
        {paths.denoiser_ckpt}, [&] {
            data::ImageDataset marked = data::ImageDataset::load(paths.marked_dir);
            diffusion::DiffusionTrainOptions topts;
            topts.checkpoint_path = paths.denoiser_ckpt;
            topts.metrics_path = paths.diffusion_metrics;
            topts.resume_from = paths.denoiser_ckpt;
            diffusion::train_denoiser(marked, cfg.diffusion, cfg.seed + 4, topts);
            return sha256_file_hex(paths.denoiser_ckpt);
        });

    const std::string gen_hash = run_stage(
        ledger, opts, "generate",
        stage_hash("generate", {{"generate", cfg.generate.to_json()}, {"seed", cfg.seed + 5}},
                   {denoiser_hash}),
        {paths.generated_dir}, [&] {
            auto [model, dcfg] = diffusion::load_denoiser(paths.denoiser_ckpt);
            auto schedule = diffusion::make_schedule(dcfg.num_steps);
            diffusion::SampleOptions sopts;
            sopts.batch_size = cfg.generate.batch_size;
            Tensor<float> images =
                diffusion::sample(model, schedule, cfg.generate.n, cfg.seed + 5, sopts);
            fs::create_directories(paths.generated_dir);
            npy_write(paths.generated_images, images);
            nlohmann::json meta{{"schema", "provmark-generation-v1"},
                                {"seed", cfg.seed + 5},
                                {"n", cfg.generate.n},
                                {"batch_size", cfg.generate.batch_size},
                                {"num_steps", dcfg.num_steps},
                                {"denoiser", denoiser_hash},
                                {"created_at", iso8601_utc_now()}};
            std::ofstream out(paths.generation_meta);
            if (!out) throw std::runtime_error("pipeline: cannot write " + paths.generation_meta);
            out << meta.dump(2) << "\n";
            return sha256_file_hex(paths.generated_images);
        });

    run_stage(ledger, opts, "analyze",
              stage_hash("analyze", {{"analysis", cfg.analysis.to_json()}, {"seed", cfg.seed + 6}},
                         {gen_hash, codec_hash, clf_hash, mark_hash}),
              {paths.report_json}, [&] {
                  AnalyzeInputs in;
                  in.samples_path = paths.generated_images;
                  in.codec_path = paths.codec_ckpt;
                  in.classifier_path = paths.classifier_ckpt;
                  in.manifest_path = paths.manifest;
                  in.dataset_dir = paths.dataset_dir;
                  in.out_dir = paths.report_dir;
                  in.prediction_mode = cfg.analysis.prediction_mode;
                  in.fid = cfg.analysis.fid;
                  in.fid_min_samples = cfg.analysis.fid_min_samples;
                  in.seed = cfg.seed + 6;
                  analyze(in);
                  return sha256_file_hex(paths.report_json);
              });

    PipelineResult result;
    result.paths = paths;
    result.records.assign(ledger.records().begin() + static_cast<int64_t>(first_new),
                          ledger.records().end());
    result.report = detect::TestReport::load(paths.report_json);
    return result;
}

}  // namespace provmark::pipeline
