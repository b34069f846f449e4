#include "provmark/core/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace provmark {

Raster::Raster(int w, int h, uint8_t r, uint8_t g, uint8_t b)
    : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3) {
    for (size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
}

void Raster::set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
}

void Raster::fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    for (int y = std::max(0, y0); y < std::min(height, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(width, x1); ++x) set(x, y, r, g, b);
}

namespace {

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> buf;
    put_u32(buf, static_cast<uint32_t>(payload.size()));
    buf.insert(buf.end(), type, type + 4);
    buf.insert(buf.end(), payload.begin(), payload.end());
    uint32_t crc = static_cast<uint32_t>(
        crc32(0, buf.data() + 4, static_cast<uInt>(buf.size() - 4)));
    put_u32(buf, crc);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void png_write(const std::string& path, const Raster& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png_write: cannot open " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(f, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }
    uLongf clen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(clen);
    if (compress2(comp.data(), &clen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png_write: deflate failed");
    comp.resize(clen);
    write_chunk(f, "IDAT", comp);
    write_chunk(f, "IEND", {});
    if (!f) throw std::runtime_error("png_write: write failed for " + path);
}

Raster to_raster(const Tensor<float>& chw, int scale) {
    if (chw.rank() != 3) throw std::invalid_argument("to_raster: expected CHW tensor");
    int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Raster img(static_cast<int>(w) * scale, static_cast<int>(h) * scale);
    auto px = [&](int64_t ch, int64_t y, int64_t x) {
        double v = chw[(ch * h + y) * w + x];
        v = (v + 1.0) * 127.5;
        return static_cast<uint8_t>(std::min(255.0, std::max(0.0, v + 0.5)));
    };
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            uint8_t r = px(0, y, x);
            uint8_t g = c >= 3 ? px(1, y, x) : r;
            uint8_t b = c >= 3 ? px(2, y, x) : r;
            for (int dy = 0; dy < scale; ++dy)
                for (int dx = 0; dx < scale; ++dx)
                    img.set(static_cast<int>(x) * scale + dx, static_cast<int>(y) * scale + dy, r, g, b);
        }
    return img;
}

}  // namespace provmark
