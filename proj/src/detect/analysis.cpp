#include "provmark/detect/analysis.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "provmark/core/yamljson.hpp"
#include "provmark/detect/fid.hpp"
#include "provmark/detect/stats.hpp"

namespace provmark::detect {

nlohmann::json ChiSquaredResult::to_json() const {
    return {{"watermark", watermark},   {"statistic", statistic},
            {"df", df},                 {"p_value", p_value},
            {"p_display", p_display},   {"bins_used", bins_used},
            {"pooled_classes", pooled_classes}};
}

ChiSquaredResult ChiSquaredResult::from_json(const nlohmann::json& j) {
    ChiSquaredResult r;
    r.watermark = j.at("watermark").get<int64_t>();
    r.statistic = j.at("statistic").get<double>();
    r.df = j.at("df").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.p_display = j.value("p_display", stats::format_p_value(r.p_value));
    r.bins_used = j.value("bins_used", int64_t{0});
    r.pooled_classes = j.value("pooled_classes", std::vector<int64_t>{});
    return r;
}

ChiSquaredResult chi_squared_per_watermark(const DetectionHistogram& h, int64_t watermark) {
    h.validate();
    const int64_t c = h.num_watermarks();
    const int64_t k = h.num_classes();
    if (c < 2)
        throw std::invalid_argument("chi_squared: need at least 2 watermark rows, got " +
                                    std::to_string(c));
    if (k < 2)
        throw std::invalid_argument("chi_squared: need at least 2 classes, got " +
                                    std::to_string(k));
    if (watermark < 0 || watermark >= c)
        throw std::out_of_range("chi_squared: watermark " + std::to_string(watermark) +
                                " outside [0, " + std::to_string(c) + ")");

    std::vector<double> expected(static_cast<size_t>(k), 0.0);
    for (int64_t j = 0; j < c; ++j)
        for (int64_t i = 0; i < k; ++i)
            expected[static_cast<size_t>(i)] +=
                static_cast<double>(h.counts[static_cast<size_t>(j)][static_cast<size_t>(i)]);
    double total = 0;
    for (auto& e : expected) {
        e /= static_cast<double>(c);
        total += e;
    }
    if (total == 0) throw std::runtime_error("chi_squared: insufficient counts (all-zero histogram)");

    ChiSquaredResult r;
    r.watermark = watermark;
    const auto& row = h.counts[static_cast<size_t>(watermark)];

    // classes too thin for the approximation share one residual bin
    double pooled_obs = 0, pooled_exp = 0;
    double statistic = 0;
    int64_t bins = 0;
    for (int64_t i = 0; i < k; ++i) {
        const double e = expected[static_cast<size_t>(i)];
        const double o = static_cast<double>(row[static_cast<size_t>(i)]);
        if (e < 1.0) {
            r.pooled_classes.push_back(i);
            pooled_obs += o;
            pooled_exp += e;
        } else {
            statistic += (o - e) * (o - e) / e;
            ++bins;
        }
    }
    if (pooled_exp > 0) {
        statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        ++bins;
    }
    if (bins < 2)
        throw std::runtime_error("chi_squared: insufficient counts (" + std::to_string(bins) +
                                 " usable bins after pooling)");

    r.statistic = statistic;
    r.bins_used = bins;
    r.df = static_cast<double>(bins) - static_cast<double>(bins) / static_cast<double>(c);
    r.p_value = stats::chi_squared_tail(statistic, r.df);
    r.p_display = stats::format_p_value(r.p_value);
    return r;
}

nlohmann::json chi_squared_parameters() {
    return {{"null", "per-class mean count across all watermark rows"},
            {"df_rule", "bins - bins / num_watermarks"},
            {"pooling", "classes with expected count < 1 share one residual bin"},
            {"tail", "upper tail of the chi-squared distribution via the regularized "
                     "incomplete gamma"}};
}

nlohmann::json FidPairing::to_json() const {
    return {{"class", class_id},
            {"watermark", watermark},
            {"fid", fid_score},
            {"chi2_statistic", chi2_statistic},
            {"n_generated", n_generated},
            {"n_reference", n_reference}};
}

nlohmann::json FidSignalResult::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pairings) arr.push_back(p.to_json());
    nlohmann::json j{{"pairings", arr}, {"excluded_classes", excluded_classes}};
    if (rank_correlation)
        j["rank_correlation"] = *rank_correlation;
    else
        j["rank_correlation"] = nullptr;
    return j;
}

FidSignalResult fid_vs_signal(const std::vector<Tensor<float>>& generated_by_class,
                              const std::vector<Tensor<float>>& reference_by_class,
                              const DetectionHistogram& hist,
                              const std::vector<int64_t>& watermark_of_class,
                              const FidSignalOptions& opts) {
    const size_t k = static_cast<size_t>(hist.num_classes());
    if (generated_by_class.size() != k || reference_by_class.size() != k ||
        watermark_of_class.size() != k)
        throw std::invalid_argument(
            "fid_vs_signal: per-class inputs must match the histogram's class count (" +
            std::to_string(k) + ")");

    FidSignalResult out;
    const int64_t min_n = std::max<int64_t>(2, opts.min_samples);
    for (size_t i = 0; i < k; ++i) {
        const int64_t wm = watermark_of_class[i];
        if (wm < 0) continue;
        const auto& gen = generated_by_class[i];
        const auto& ref = reference_by_class[i];
        if (gen.dim(0) < min_n || ref.dim(0) < min_n) {
            out.excluded_classes.push_back(static_cast<int64_t>(i));
            continue;
        }
        FidPairing p;
        p.class_id = static_cast<int64_t>(i);
        p.watermark = wm;
        p.fid_score = fid(gen, ref);
        p.chi2_statistic = chi_squared_per_watermark(hist, wm).statistic;
        p.n_generated = gen.dim(0);
        p.n_reference = ref.dim(0);
        out.pairings.push_back(p);
    }

    if (out.pairings.size() >= 2) {
        std::vector<double> fids, stats_;
        for (const auto& p : out.pairings) {
            fids.push_back(p.fid_score);
            stats_.push_back(p.chi2_statistic);
        }
        out.rank_correlation = stats::spearman(fids, stats_);
    }
    return out;
}

nlohmann::json TestReport::to_json() const {
    nlohmann::json tests_json = nlohmann::json::array();
    for (const auto& t : tests) tests_json.push_back(t.to_json());
    return {{"schema", "provmark-report-v1"},
            {"created_at", created_at},
            {"seed", seed},
            {"n_images", n_images},
            {"prediction_mode", prediction_mode},
            {"classifier_accuracy", classifier_accuracy},
            {"histogram", histogram.to_json()},
            {"tests", tests_json},
            {"test_parameters", test_parameters},
            {"marking", marking},
            {"fid", fid}};
}

TestReport TestReport::from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "provmark-report-v1")
        throw std::runtime_error("report: unknown schema '" + j.value("schema", "") + "'");
    TestReport r;
    r.created_at = j.value("created_at", "");
    r.seed = j.at("seed").get<uint64_t>();
    r.n_images = j.at("n_images").get<int64_t>();
    r.prediction_mode = j.at("prediction_mode").get<std::string>();
    r.classifier_accuracy = j.value("classifier_accuracy", -1.0);
    r.histogram = DetectionHistogram::from_json(j.at("histogram"));
    for (const auto& t : j.at("tests")) r.tests.push_back(ChiSquaredResult::from_json(t));
    r.test_parameters = j.value("test_parameters", nlohmann::json{});
    r.marking = j.value("marking", nlohmann::json{});
    r.fid = j.value("fid", nlohmann::json{});
    return r;
}

void TestReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << to_json().dump(2) << "\n";
}

TestReport TestReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot read " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace provmark::detect
