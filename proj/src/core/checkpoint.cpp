#include "provmark/core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace provmark {

namespace {
constexpr char kMagic[8] = {'P', 'M', 'C', 'K', 'P', 'T', '1', '\n'};
}

void Checkpoint::save(const std::string& path) const {
    nlohmann::json header = meta;
    nlohmann::json dir = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
        dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    header["tensor_dir"] = dir;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f.write(kMagic, 8);
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);

    Checkpoint ck;
    ck.meta = nlohmann::json::parse(hs);
    auto dir = ck.meta.at("tensor_dir");
    ck.meta.erase("tensor_dir");
    for (const auto& e : dir) {
        Shape shape = e.at("shape").get<Shape>();
        Tensor<float> t(shape);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!f) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
        ck.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
    return ck;
}

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    return it->second;
}

}  // namespace provmark
