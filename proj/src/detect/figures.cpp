#include "provmark/detect/figures.hpp"

#include <algorithm>
#include <cmath>

#include "provmark/core/png.hpp"

namespace provmark::detect {

namespace {

void ramp(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
    v = std::clamp(v, 0.0, 1.0);
    r = static_cast<uint8_t>(30 + 220 * v);
    g = static_cast<uint8_t>(25 + 195 * v);
    b = static_cast<uint8_t>(95 - 55 * v);
}

void border(Raster& img) {
    img.fill_rect(0, 0, img.width - 1, 0, 60, 60, 60);
    img.fill_rect(0, img.height - 1, img.width - 1, img.height - 1, 60, 60, 60);
    img.fill_rect(0, 0, 0, img.height - 1, 60, 60, 60);
    img.fill_rect(img.width - 1, 0, img.width - 1, img.height - 1, 60, 60, 60);
}

}  // namespace

void write_histogram_heatmap(const DetectionHistogram& h, const std::string& path) {
    h.validate();
    const int cell = 14, pad = 8;
    const int c = static_cast<int>(h.num_watermarks());
    const int k = static_cast<int>(h.num_classes());
    Raster img(k * cell + 2 * pad, c * cell + 2 * pad);
    int64_t peak = 1;
    for (const auto& row : h.counts)
        for (int64_t v : row) peak = std::max(peak, v);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < k; ++j) {
            uint8_t r, g, b;
            // log scale keeps off-peak cells visible next to a dominant one
            const double v = std::log1p(static_cast<double>(h.counts[static_cast<size_t>(i)][static_cast<size_t>(j)])) /
                             std::log1p(static_cast<double>(peak));
            ramp(v, r, g, b);
            img.fill_rect(pad + j * cell, pad + i * cell, pad + (j + 1) * cell - 2,
                          pad + (i + 1) * cell - 2, r, g, b);
        }
    border(img);
    png_write(path, img);
}

void write_statistic_bars(const std::vector<ChiSquaredResult>& tests, const std::string& path) {
    const int bar = 12, gap = 4, height = 160, pad = 10;
    const int c = static_cast<int>(tests.size());
    Raster img(std::max(1, c * (bar + gap) - gap) + 2 * pad, height + 2 * pad);
    double peak = 1e-12;
    for (const auto& t : tests) peak = std::max(peak, t.statistic);
    for (int i = 0; i < c; ++i) {
        const int hbar = static_cast<int>(std::lround(
            height * tests[static_cast<size_t>(i)].statistic / peak));
        const int x0 = pad + i * (bar + gap);
        if (hbar > 0)
            img.fill_rect(x0, pad + height - hbar, x0 + bar - 1, pad + height - 1, 70, 110, 180);
        img.fill_rect(x0, pad + height, x0 + bar - 1, pad + height, 60, 60, 60);
    }
    border(img);
    png_write(path, img);
}

void write_fid_scatter(const FidSignalResult& fid, const std::string& path) {
    const int w = 220, h = 180, pad = 14;
    Raster img(w + 2 * pad, h + 2 * pad);
    double fx0 = 0, fx1 = 1, fy0 = 0, fy1 = 1;
    if (!fid.pairings.empty()) {
        fx0 = fx1 = fid.pairings.front().fid_score;
        fy0 = fy1 = fid.pairings.front().chi2_statistic;
        for (const auto& p : fid.pairings) {
            fx0 = std::min(fx0, p.fid_score);
            fx1 = std::max(fx1, p.fid_score);
            fy0 = std::min(fy0, p.chi2_statistic);
            fy1 = std::max(fy1, p.chi2_statistic);
        }
    }
    const double dx = fx1 > fx0 ? fx1 - fx0 : 1.0;
    const double dy = fy1 > fy0 ? fy1 - fy0 : 1.0;
    for (const auto& p : fid.pairings) {
        const int x = pad + static_cast<int>(std::lround((p.fid_score - fx0) / dx * (w - 1)));
        const int y = pad + h - 1 - static_cast<int>(std::lround((p.chi2_statistic - fy0) / dy * (h - 1)));
        img.fill_rect(std::max(0, x - 2), std::max(0, y - 2),
                      std::min(img.width - 1, x + 2), std::min(img.height - 1, y + 2),
                      170, 40, 40);
    }
    img.fill_rect(pad, pad + h, pad + w - 1, pad + h, 60, 60, 60);
    img.fill_rect(pad - 1, pad, pad - 1, pad + h, 60, 60, 60);
    border(img);
    png_write(path, img);
}

}  // namespace provmark::detect
