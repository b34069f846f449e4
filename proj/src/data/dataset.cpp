#include "provmark/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "provmark/core/hash.hpp"
#include "provmark/core/npy.hpp"
#include "provmark/core/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace provmark::data {

namespace {

constexpr const char* kMetaVersion = "provmark-dataset-v1";

std::string ordinal_id(int64_t i, const float* pixels, int64_t count) {
    std::string content = sha256_hex(pixels, static_cast<size_t>(count) * sizeof(float));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
    return std::string(buf) + "-" + content.substr(0, 10);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace

int64_t ImageDataset::num_classes() const {
    int64_t m = -1;
    for (int64_t l : labels) m = std::max(m, l);
    return m + 1;
}

void ImageDataset::validate() const {
    if (images.rank() != 4)
        throw std::invalid_argument("dataset images must be (N,C,H,W), got " +
                                    shape_str(images.shape()));
    const int64_t n = images.dim(0);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("dataset has " + std::to_string(n) + " images but " +
                                    std::to_string(labels.size()) + " labels");
    if (static_cast<int64_t>(ids.size()) != n)
        throw std::invalid_argument("dataset has " + std::to_string(n) + " images but " +
                                    std::to_string(ids.size()) + " ids");
    for (const auto& [name, vals] : attributes)
        if (static_cast<int64_t>(vals.size()) != n)
            throw std::invalid_argument("attribute '" + name + "' has " +
                                        std::to_string(vals.size()) + " values for " +
                                        std::to_string(n) + " images");
    for (int64_t l : labels)
        if (l < 0) throw std::invalid_argument("negative label " + std::to_string(l));
    if (!images.all_finite()) throw std::invalid_argument("dataset contains non-finite pixels");
    const float lo = images.min(), hi = images.max();
    if (lo < -1.0f - 1e-5f || hi > 1.0f + 1e-5f)
        throw std::invalid_argument("pixels outside [-1,1]: range [" + std::to_string(lo) +
                                    ", " + std::to_string(hi) + "]");
}

std::string ImageDataset::fingerprint() const {
    Sha256 h;
    h.update(std::string(kMetaVersion));
    std::vector<int64_t> dims(images.shape().begin(), images.shape().end());
    h.update_vec(dims);
    h.update(images.data(), static_cast<size_t>(images.numel()) * sizeof(float));
    h.update_vec(labels);
    for (const auto& [name, vals] : attributes) {
        h.update(name);
        for (const auto& v : vals) h.update(v + "\n");
    }
    return h.hex();
}

ImageDataset ImageDataset::subset(const std::vector<int64_t>& indices) const {
    const int64_t n = size();
    const int64_t chw = images.numel() / std::max<int64_t>(n, 1);
    ImageDataset out;
    out.images = Tensor<float>({static_cast<int64_t>(indices.size()), images.dim(1),
                                images.dim(2), images.dim(3)});
    out.labels.reserve(indices.size());
    out.ids.reserve(indices.size());
    for (auto& [name, vals] : attributes) out.attributes[name].reserve(indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        int64_t i = indices[k];
        if (i < 0 || i >= n)
            throw std::out_of_range("subset index " + std::to_string(i) + " outside [0, " +
                                    std::to_string(n) + ")");
        std::copy_n(images.data() + i * chw, chw, out.images.data() + static_cast<int64_t>(k) * chw);
        out.labels.push_back(labels[static_cast<size_t>(i)]);
        out.ids.push_back(ids[static_cast<size_t>(i)]);
        for (const auto& [name, vals] : attributes)
            out.attributes[name].push_back(vals[static_cast<size_t>(i)]);
    }
    out.applied_manifests = applied_manifests;
    return out;
}

std::pair<ImageDataset, ImageDataset> ImageDataset::split_holdout(int64_t holdout,
                                                                  uint64_t seed) const {
    const int64_t n = size();
    if (holdout <= 0 || holdout >= n)
        throw std::invalid_argument("holdout " + std::to_string(holdout) +
                                    " must lie in (0, " + std::to_string(n) + ")");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int64_t> train(order.begin(), order.end() - holdout);
    std::vector<int64_t> held(order.end() - holdout, order.end());
    std::sort(train.begin(), train.end());
    std::sort(held.begin(), held.end());
    return {subset(train), subset(held)};
}

void ImageDataset::save(const std::string& dir) const {
    validate();
    fs::create_directories(dir);
    npy_write((fs::path(dir) / "images.npy").string(), images);
    json meta;
    meta["version"] = kMetaVersion;
    meta["labels"] = labels;
    meta["ids"] = ids;
    meta["attributes"] = attributes;
    meta["applied_manifests"] = applied_manifests;
    std::ofstream out(fs::path(dir) / "meta.json");
    if (!out) throw std::runtime_error("cannot write " + dir + "/meta.json");
    out << meta.dump(2) << "\n";
}

ImageDataset ImageDataset::load(const std::string& dir) {
    NpyArray arr = npy_read((fs::path(dir) / "images.npy").string());
    if (arr.dtype != "f4" || arr.shape.size() != 4)
        throw std::runtime_error(dir + "/images.npy: expected float32 (N,C,H,W), got " +
                                 arr.dtype + " " + shape_str(arr.shape));
    json meta = read_json_file((fs::path(dir) / "meta.json").string());
    if (meta.value("version", "") != kMetaVersion)
        throw std::runtime_error(dir + "/meta.json: unsupported version '" +
                                 meta.value("version", "") + "'");
    ImageDataset ds;
    ds.images = Tensor<float>(arr.shape);
    std::copy(arr.f32.begin(), arr.f32.end(), ds.images.data());
    ds.labels = meta.at("labels").get<std::vector<int64_t>>();
    ds.ids = meta.at("ids").get<std::vector<std::string>>();
    ds.attributes = meta.value("attributes",
                               std::map<std::string, std::vector<std::string>>{});
    ds.applied_manifests = meta.value("applied_manifests", std::vector<std::string>{});
    ds.validate();
    return ds;
}

ImageDataset make_dataset(Tensor<float> images, std::vector<int64_t> labels,
                          std::map<std::string, std::vector<std::string>> attributes) {
    ImageDataset ds;
    ds.images = std::move(images);
    ds.labels = std::move(labels);
    ds.attributes = std::move(attributes);
    const int64_t n = ds.size();
    const int64_t chw = n > 0 ? ds.images.numel() / n : 0;
    ds.ids.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        ds.ids.push_back(ordinal_id(i, ds.images.data() + i * chw, chw));
    ds.validate();
    return ds;
}

int64_t split_of(int64_t ordinal, int64_t n, int64_t num_splits) {
    if (num_splits <= 0 || n <= 0)
        throw std::invalid_argument("split_of: need positive n and num_splits");
    if (ordinal < 0 || ordinal >= n)
        throw std::out_of_range("split_of: ordinal " + std::to_string(ordinal) +
                                " outside [0, " + std::to_string(n) + ")");
    return ordinal * num_splits / n;
}

ImageDataset make_synthetic(int64_t n, int64_t num_classes, int64_t image_size, uint64_t seed) {
    if (n <= 0 || num_classes <= 0 || image_size < 4)
        throw std::invalid_argument("make_synthetic: bad n/classes/size");
    const int64_t ch = 3;
    Tensor<float> images({n, ch, image_size, image_size});
    std::vector<int64_t> labels(static_cast<size_t>(n));
    std::vector<std::string> variant(static_cast<size_t>(n));

    Rng root(seed);
    const double pi = 3.14159265358979312;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t k = i % num_classes;
        labels[static_cast<size_t>(i)] = k;
        const bool flip = ((i / num_classes) % 2) == 1;
        variant[static_cast<size_t>(i)] = flip ? "b" : "a";
        Rng rng = root.fork(static_cast<uint64_t>(i));

        double palette[3];
        for (int64_t c = 0; c < ch; ++c)
            palette[c] = 0.55 * std::sin(2.0 * pi * static_cast<double>(k) / num_classes +
                                         2.1 * static_cast<double>(c) + 0.7);
        const double theta = pi * static_cast<double>(k) / num_classes;
        const double freq = 2.0 + static_cast<double>(k % 3);
        const double phase = rng.uniform(0.0, 2.0 * pi);
        const double amp = rng.uniform(0.35, 0.85) * (flip ? -1.0 : 1.0);

        struct Blob { double x, y, s, h[3]; };
        Blob blobs[2];
        for (Blob& b : blobs) {
            b.x = rng.uniform(-0.8, 0.8);
            b.y = rng.uniform(-0.8, 0.8);
            b.s = rng.uniform(0.15, 0.45);
            for (double& hv : b.h) hv = rng.uniform(-0.35, 0.35);
        }

        const double ct = std::cos(theta), st = std::sin(theta);
        for (int64_t y = 0; y < image_size; ++y) {
            const double v = 2.0 * static_cast<double>(y) / (image_size - 1) - 1.0;
            for (int64_t x = 0; x < image_size; ++x) {
                const double u = 2.0 * static_cast<double>(x) / (image_size - 1) - 1.0;
                const double wave = std::sin(freq * pi * (u * ct + v * st) + phase);
                double blob[3] = {0, 0, 0};
                for (const Blob& b : blobs) {
                    const double d2 = (u - b.x) * (u - b.x) + (v - b.y) * (v - b.y);
                    const double g = std::exp(-d2 / (2.0 * b.s * b.s));
                    for (int64_t c = 0; c < ch; ++c) blob[c] += b.h[c] * g;
                }
                for (int64_t c = 0; c < ch; ++c) {
                    double val = 0.5 * palette[c] + 0.38 * amp * wave + blob[c] +
                                 0.06 * rng.normal();
                    images.at4(i, c, y, x) = static_cast<float>(std::clamp(val, -1.0, 1.0));
                }
            }
        }
    }
    return make_dataset(std::move(images), std::move(labels), {{"variant", std::move(variant)}});
}

ImageDataset ingest_dir(const std::string& dir) {
    std::vector<std::string> shards;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".npy") shards.push_back(entry.path().string());
    if (shards.empty()) throw std::runtime_error("ingest: no .npy shards in " + dir);
    std::sort(shards.begin(), shards.end());

    std::vector<NpyArray> arrays;
    arrays.reserve(shards.size());
    Shape ref;
    std::string offenders;
    int64_t total = 0;
    for (const auto& path : shards) {
        NpyArray a = npy_read(path);
        if (a.shape.size() != 4)
            throw std::runtime_error("ingest: " + path + " is not (N,C,H,W): " +
                                     shape_str(a.shape));
        Shape chw(a.shape.begin() + 1, a.shape.end());
        if (ref.empty()) ref = chw;
        if (chw != ref)
            offenders += "\n  " + fs::path(path).filename().string() + " " + shape_str(a.shape);
        total += a.shape[0];
        arrays.push_back(std::move(a));
    }
    if (!offenders.empty())
        throw std::runtime_error("ingest: shards disagree on image shape (first shard is " +
                                 shape_str(ref) + "); offending shards:" + offenders);

    Tensor<float> images({total, ref[0], ref[1], ref[2]});
    int64_t at = 0;
    for (const auto& a : arrays) {
        const int64_t count = a.shape[0] * ref[0] * ref[1] * ref[2];
        if (a.dtype == "u1") {
            for (int64_t i = 0; i < count; ++i)
                images[at + i] = static_cast<float>(a.u8[static_cast<size_t>(i)]) / 127.5f - 1.0f;
        } else {
            for (int64_t i = 0; i < count; ++i) images[at + i] = a.f32[static_cast<size_t>(i)];
        }
        at += count;
    }

    json lab = read_json_file((fs::path(dir) / "labels.json").string());
    std::vector<int64_t> labels = lab.get<std::vector<int64_t>>();
    if (static_cast<int64_t>(labels.size()) != total)
        throw std::runtime_error("ingest: labels.json has " + std::to_string(labels.size()) +
                                 " entries for " + std::to_string(total) + " images");

    std::map<std::string, std::vector<std::string>> attrs;
    if (fs::exists(fs::path(dir) / "attributes.json")) {
        json a = read_json_file((fs::path(dir) / "attributes.json").string());
        attrs = a.get<std::map<std::string, std::vector<std::string>>>();
    }
    return make_dataset(std::move(images), std::move(labels), std::move(attrs));
}

}  // namespace provmark::data
