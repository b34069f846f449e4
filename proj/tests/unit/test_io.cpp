#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "provmark/core/checkpoint.hpp"
#include "provmark/core/hash.hpp"
#include "provmark/core/npy.hpp"
#include "provmark/core/png.hpp"
#include "provmark/core/rng.hpp"

namespace fs = std::filesystem;
using namespace provmark;

static fs::path tmp_dir() {
    auto d = fs::temp_directory_path() / "provmark_io_test";
    fs::create_directories(d);
    return d;
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex(std::string("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    Sha256 h;
    h.update(std::string("a"));
    h.update(std::string("bc"));
    CHECK(h.hex() == sha256_hex(std::string("abc")));
}

TEST_CASE("sha256 of a file matches in-memory hash") {
    auto p = tmp_dir() / "hash_me.bin";
    std::string payload = "provmark file hashing check\n";
    std::ofstream(p, std::ios::binary) << payload;
    CHECK(sha256_file_hex(p.string()) == sha256_hex(payload));
}

TEST_CASE("npy float round-trip") {
    auto p = (tmp_dir() / "arr_f4.npy").string();
    Tensor<float> t({2, 3, 4});
    Rng rng(0);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
    npy_write(p, t);
    auto back = npy_read(p);
    CHECK(back.dtype == "f4");
    REQUIRE(back.shape == Shape{2, 3, 4});
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(back.f32[static_cast<size_t>(i)] == t[i]);
}

TEST_CASE("npy u8 round-trip") {
    auto p = (tmp_dir() / "arr_u1.npy").string();
    std::vector<uint8_t> data = {0, 1, 2, 3, 254, 255};
    npy_write_u8(p, data, {2, 3});
    auto back = npy_read(p);
    CHECK(back.dtype == "u1");
    REQUIRE(back.shape == Shape{2, 3});
    CHECK(back.u8 == data);
}

TEST_CASE("npy magic header is well formed") {
    auto p = (tmp_dir() / "arr_hdr.npy").string();
    npy_write(p, Tensor<float>({4}, 1.0f));
    std::ifstream in(p, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 6) == "\x93NUMPY");
    CHECK(magic[6] == 1);  // major version
    CHECK(magic[7] == 0);
}

TEST_CASE("checkpoint round-trip preserves meta and tensors") {
    auto p = (tmp_dir() / "model.ckpt").string();
    Checkpoint ck;
    ck.meta["kind"] = "codec";
    ck.meta["epoch"] = 17;
    ck.meta["rng"] = Rng(9).state();
    Rng rng(4);
    Tensor<float> w({3, 5});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(rng.normal());
    ck.tensors["layer.weight"] = w;
    ck.tensors["layer.bias"] = Tensor<float>({5}, 0.25f);
    ck.save(p);

    auto back = Checkpoint::load(p);
    CHECK(back.meta["kind"] == "codec");
    CHECK(back.meta["epoch"] == 17);
    CHECK(back.meta["rng"] == ck.meta["rng"]);
    REQUIRE(back.tensors.size() == 2);
    const auto& wb = back.tensor("layer.weight");
    REQUIRE(wb.shape() == w.shape());
    for (int64_t i = 0; i < w.numel(); ++i) CHECK(wb[i] == w[i]);
    CHECK(back.tensor("layer.bias")[4] == 0.25f);
    CHECK_THROWS(back.tensor("missing"));
}

TEST_CASE("checkpoint rejects corrupt magic") {
    auto p = (tmp_dir() / "bad.ckpt").string();
    std::ofstream(p, std::ios::binary) << "NOTACKPT garbage";
    CHECK_THROWS(Checkpoint::load(p));
}

TEST_CASE("png writer emits a decodable file") {
    auto p = (tmp_dir() / "img.png").string();
    Raster img(9, 7);
    img.fill_rect(1, 1, 4, 4, 200, 30, 30);
    img.set(8, 6, 0, 0, 255);
    png_write(p, img);

    std::ifstream in(p, std::ios::binary);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() > 44);
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    for (int i = 0; i < 8; ++i) CHECK(bytes[static_cast<size_t>(i)] == sig[i]);
    // IHDR width/height live at fixed offsets in the first chunk
    auto be32 = [&](size_t off) {
        return (uint32_t(bytes[off]) << 24) | (uint32_t(bytes[off + 1]) << 16) |
               (uint32_t(bytes[off + 2]) << 8) | uint32_t(bytes[off + 3]);
    };
    CHECK(be32(16) == 9);
    CHECK(be32(20) == 7);
    CHECK(bytes[24] == 8);  // bit depth
    CHECK(bytes[25] == 2);  // truecolor
}

TEST_CASE("raster conversion maps [-1,1] to [0,255] and upscales") {
    Tensor<float> chw({3, 2, 2});
    chw.fill(-1.0f);
    chw[0] = 1.0f;  // red channel, top-left pixel
    auto r = to_raster(chw, 3);
    CHECK(r.width == 6);
    CHECK(r.height == 6);
    CHECK(r.rgb[0] == 255);  // red channel of top-left
    CHECK(r.rgb[1] == 0);
    CHECK(r.rgb[2] == 0);
    // upscaled copy of the same source pixel
    size_t idx = (2 * 6 + 2) * 3;
    CHECK(r.rgb[idx + 0] == 255);
}
