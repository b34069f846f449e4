#pragma once

#include <string>
#include <vector>

#include "provmark/detect/analysis.hpp"
#include "provmark/detect/histogram.hpp"

namespace provmark::detect {

// Report figures, written as PNG files: the watermark x class count heatmap,
// the per-watermark statistic bar chart, and the FID-vs-statistic scatter.
void write_histogram_heatmap(const DetectionHistogram& h, const std::string& path);
void write_statistic_bars(const std::vector<ChiSquaredResult>& tests, const std::string& path);
void write_fid_scatter(const FidSignalResult& fid, const std::string& path);

}  // namespace provmark::detect
