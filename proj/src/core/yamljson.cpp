#include "provmark/core/yamljson.hpp"

#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

namespace provmark {

namespace {

nlohmann::json node_to_json(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Scalar: {
            if (n.Tag() == "!") return n.as<std::string>();  // quoted scalar
            bool b;
            if (YAML::convert<bool>::decode(n, b)) return b;
            int64_t i;
            if (YAML::convert<int64_t>::decode(n, i)) return i;
            double d;
            if (YAML::convert<double>::decode(n, d)) return d;
            return n.as<std::string>();
        }
        case YAML::NodeType::Sequence: {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& item : n) a.push_back(node_to_json(item));
            return a;
        }
        case YAML::NodeType::Map: {
            nlohmann::json o = nlohmann::json::object();
            for (const auto& kv : n) o[kv.first.as<std::string>()] = node_to_json(kv.second);
            return o;
        }
    }
    return nullptr;
}

}  // namespace

nlohmann::json yaml_to_json(const std::string& yaml_text) {
    return node_to_json(YAML::Load(yaml_text));
}

nlohmann::json load_structured_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".yaml" || ext == ".yml") return yaml_to_json(text);
    if (ext == ".json") return nlohmann::json::parse(text);
    throw std::runtime_error(path + ": expected .yaml, .yml or .json");
}

std::string iso8601_utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace provmark
