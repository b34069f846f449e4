// End-to-end survivability: mark one of four classes with watermark 0 at
// blend strength 0.05, train a small diffusion model on the marked corpus as
// a black box, generate 1000 images, and test the decoded-watermark versus
// predicted-class histogram. The marked watermark should light up and the
// fifteen unmarked ones should stay quiet.
//
// All stages checkpoint under the working directory (or argv[1]); rerunning
// resumes from the stage ledger instead of retraining.

#include <cstdio>
#include <filesystem>
#include <string>

#include "acceptance/criteria.hpp"
#include "provmark/pipeline/run.hpp"

using namespace provmark;

int main(int argc, char** argv) {
    std::filesystem::path dir = argc > 1 ? argv[1] : "acceptance_e2e_work";

    auto cfg = pipeline::preset("single-class");
    cfg.name = "survivability";
    cfg.seed = 1;
    cfg.output_dir = dir.string();

    pipeline::RunOptions opts;
    opts.on_stage = [](const pipeline::StageRecord& r) {
        std::printf("  stage %-16s %-7s %8.1fs\n", r.stage.c_str(), r.status.c_str(),
                    r.wall_seconds);
        std::fflush(stdout);
    };
    auto result = pipeline::run_pipeline(cfg, opts);
    const auto& report = result.report;

    double target_p = 1.0;
    double target_stat = 0.0;
    double min_other_p = 1.0;
    int64_t min_other_wm = -1;
    for (const auto& t : report.tests) {
        if (t.watermark == 0) {
            target_p = t.p_value;
            target_stat = t.statistic;
        } else if (t.p_value < min_other_p) {
            min_other_p = t.p_value;
            min_other_wm = t.watermark;
        }
    }

    const bool pass = report.n_images >= 1000 && target_p < 1e-3 && min_other_p > 0.01;
    char what[256];
    std::snprintf(what, sizeof what,
                  "n %lld, target wm 0 stat %.1f p %.2e (need < 1e-3), quietest other wm "
                  "%lld p %.3f (need > 0.01)",
                  static_cast<long long>(report.n_images), target_stat, target_p,
                  static_cast<long long>(min_other_wm), min_other_p);
    CriteriaReport criteria;
    criteria.line(6, pass, what);
    return criteria.exit_code();
}
