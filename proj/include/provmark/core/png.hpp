#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provmark/core/tensor.hpp"

namespace provmark {

// 8-bit RGB raster with simple drawing helpers for report figures.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // width*height*3

    Raster(int w, int h, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255);
    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b);
    void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
};

void png_write(const std::string& path, const Raster& img);

// Converts one CHW image in [-1,1] (1 or 3 channels) to a raster, upscaled by `scale`.
Raster to_raster(const Tensor<float>& chw, int scale = 1);

}  // namespace provmark
