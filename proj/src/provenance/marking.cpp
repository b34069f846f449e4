#include "provmark/provenance/marking.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "provmark/core/hash.hpp"
#include "provmark/core/yamljson.hpp"

using nlohmann::json;

namespace provmark::provenance {

Selector Selector::class_equals(int64_t k) {
    Selector s;
    s.type = "class_equals";
    s.class_k = k;
    return s;
}

Selector Selector::attribute_equals(std::string name, std::string val) {
    Selector s;
    s.type = "attribute_equals";
    s.attribute = std::move(name);
    s.value = std::move(val);
    return s;
}

Selector Selector::split_and_class(int64_t split, int64_t splits, int64_t k) {
    Selector s;
    s.type = "split_and_class";
    s.split_id = split;
    s.num_splits = splits;
    s.class_k = k;
    return s;
}

Selector Selector::id_list(std::vector<std::string> ids) {
    Selector s;
    s.type = "id_list";
    s.ids = std::move(ids);
    return s;
}

json Selector::to_json() const {
    json j{{"type", type}};
    if (type == "class_equals") {
        j["class"] = class_k;
    } else if (type == "attribute_equals") {
        j["attribute"] = attribute;
        j["value"] = value;
    } else if (type == "split_and_class") {
        j["split"] = split_id;
        j["num_splits"] = num_splits;
        j["class"] = class_k;
    } else if (type == "id_list") {
        j["ids"] = ids;
    }
    return j;
}

Selector Selector::from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "class_equals") return class_equals(j.at("class").get<int64_t>());
    if (type == "attribute_equals")
        return attribute_equals(j.at("attribute").get<std::string>(),
                                j.at("value").get<std::string>());
    if (type == "split_and_class")
        return split_and_class(j.at("split").get<int64_t>(), j.at("num_splits").get<int64_t>(),
                               j.at("class").get<int64_t>());
    if (type == "id_list") return id_list(j.at("ids").get<std::vector<std::string>>());
    throw std::invalid_argument("unknown selector type '" + type + "'");
}

std::string Selector::describe() const {
    std::ostringstream os;
    if (type == "class_equals") {
        os << "class == " << class_k;
    } else if (type == "attribute_equals") {
        os << "attribute " << attribute << " == '" << value << "'";
    } else if (type == "split_and_class") {
        os << "class == " << class_k << " within split " << split_id << " of " << num_splits;
    } else if (type == "id_list") {
        os << ids.size() << " explicit ids";
    } else {
        os << "unknown selector";
    }
    return os.str();
}

std::vector<int64_t> Selector::select(const data::ImageDataset& ds,
                                      const AttributeTables* extra) const {
    const int64_t n = ds.size();
    std::vector<int64_t> out;
    if (type == "class_equals" || type == "split_and_class") {
        if (class_k < 0 || class_k >= ds.num_classes())
            throw std::invalid_argument("selector [" + describe() + "]: class " +
                                        std::to_string(class_k) + " outside [0, " +
                                        std::to_string(ds.num_classes()) + ")");
    }
    if (type == "class_equals") {
        for (int64_t i = 0; i < n; ++i)
            if (ds.labels[static_cast<size_t>(i)] == class_k) out.push_back(i);
    } else if (type == "split_and_class") {
        if (num_splits < 1 || split_id < 0 || split_id >= num_splits)
            throw std::invalid_argument("selector [" + describe() + "]: split " +
                                        std::to_string(split_id) + " outside [0, " +
                                        std::to_string(num_splits) + ")");
        for (int64_t i = 0; i < n; ++i)
            if (ds.labels[static_cast<size_t>(i)] == class_k &&
                data::split_of(i, n, num_splits) == split_id)
                out.push_back(i);
    } else if (type == "attribute_equals") {
        auto it = ds.attributes.find(attribute);
        if (it != ds.attributes.end()) {
            for (int64_t i = 0; i < n; ++i)
                if (it->second[static_cast<size_t>(i)] == value) out.push_back(i);
        } else if (extra && extra->count(attribute)) {
            const auto& table = extra->at(attribute);
            for (int64_t i = 0; i < n; ++i) {
                auto e = table.find(ds.ids[static_cast<size_t>(i)]);
                if (e != table.end() && e->second == value) out.push_back(i);
            }
        } else {
            throw std::invalid_argument("selector [" + describe() +
                                        "]: attribute not present in dataset or external tables");
        }
    } else if (type == "id_list") {
        std::map<std::string, int64_t> lookup;
        for (int64_t i = 0; i < n; ++i) lookup[ds.ids[static_cast<size_t>(i)]] = i;
        std::string missing;
        int64_t missing_n = 0;
        for (const auto& id : ids) {
            auto e = lookup.find(id);
            if (e == lookup.end()) {
                if (++missing_n <= 8) missing += "\n  " + id;
            } else {
                out.push_back(e->second);
            }
        }
        if (missing_n)
            throw std::invalid_argument("selector [" + describe() + "]: " +
                                        std::to_string(missing_n) +
                                        " ids not in dataset:" + missing);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    } else {
        throw std::invalid_argument("unknown selector type '" + type + "'");
    }
    return out;
}

json MarkRule::to_json() const {
    json j{{"select", select.to_json()}, {"watermark", watermark}};
    if (lambda >= 0) j["lambda"] = lambda;
    return j;
}

MarkRule MarkRule::from_json(const json& j) {
    MarkRule r;
    r.select = Selector::from_json(j.at("select"));
    r.watermark = j.at("watermark").get<int64_t>();
    r.lambda = j.value("lambda", -1.0);
    return r;
}

void MarkingPlan::validate(int64_t num_watermarks) const {
    for (size_t i = 0; i < rules.size(); ++i) {
        const MarkRule& r = rules[i];
        if (r.watermark < 0 || r.watermark >= num_watermarks)
            throw std::invalid_argument("rule " + std::to_string(i) + " [" +
                                        r.select.describe() + "]: watermark " +
                                        std::to_string(r.watermark) + " outside [0, " +
                                        std::to_string(num_watermarks) + ")");
        if (r.lambda >= 0 && !(r.lambda > 0.0 && r.lambda < 1.0))
            throw std::invalid_argument("rule " + std::to_string(i) +
                                        ": lambda must lie in (0, 1)");
    }
}

json MarkingPlan::to_json() const {
    json rs = json::array();
    for (const auto& r : rules) rs.push_back(r.to_json());
    return {{"rules", rs}};
}

MarkingPlan MarkingPlan::from_json(const json& j) {
    MarkingPlan p;
    for (const auto& r : j.at("rules")) p.rules.push_back(MarkRule::from_json(r));
    return p;
}

MarkingPlan MarkingPlan::load(const std::string& path) {
    return from_json(load_structured_file(path));
}

int64_t Manifest::marked_count() const {
    int64_t c = 0;
    for (const auto& r : records)
        if (r.rule >= 0) ++c;
    return c;
}

std::vector<RuleStats> Manifest::rule_stats() const {
    std::vector<RuleStats> stats(plan.rules.size());
    for (const auto& r : records)
        if (r.rule >= 0) ++stats[static_cast<size_t>(r.rule)].matched;
    const double n = records.empty() ? 1.0 : static_cast<double>(records.size());
    for (auto& s : stats) s.fraction = static_cast<double>(s.matched) / n;
    return stats;
}

json Manifest::to_json() const {
    json recs = json::array();
    for (const auto& r : records) {
        json e{{"id", r.id}};
        if (r.rule >= 0) {
            e["rule"] = r.rule;
            e["watermark"] = r.watermark;
            e["lambda"] = r.lambda;
        }
        recs.push_back(std::move(e));
    }
    json stats = json::array();
    for (const auto& s : rule_stats())
        stats.push_back({{"matched", s.matched}, {"fraction", s.fraction}});
    return {{"schema", schema},
            {"dataset_fingerprint", dataset_fingerprint},
            {"codec_checkpoint", codec_checkpoint},
            {"created_at", created_at},
            {"seed", seed},
            {"plan", plan.to_json()},
            {"rule_stats", stats},
            {"records", recs}};
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    m.schema = j.at("schema").get<std::string>();
    if (m.schema != "provmark-manifest-v1")
        throw std::runtime_error("unsupported manifest schema '" + m.schema + "'");
    m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    m.codec_checkpoint = j.at("codec_checkpoint").get<std::string>();
    m.created_at = j.value("created_at", "");
    m.seed = j.value("seed", uint64_t{0});
    m.plan = MarkingPlan::from_json(j.at("plan"));
    for (const auto& e : j.at("records")) {
        ManifestRecord r;
        r.id = e.at("id").get<std::string>();
        r.rule = e.value("rule", int64_t{-1});
        r.watermark = e.value("watermark", int64_t{-1});
        r.lambda = e.value("lambda", 0.0);
        m.records.push_back(std::move(r));
    }
    return m;
}

void Manifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json().dump(2) << "\n";
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return from_json(j);
}

std::string Manifest::hash() const { return sha256_hex(to_json().dump()); }

Manifest resolve_plan(const MarkingPlan& plan, const data::ImageDataset& ds,
                      const std::string& codec_checkpoint_hash, int64_t num_watermarks,
                      double default_lambda, uint64_t seed, const AttributeTables* extra_attrs) {
    ds.validate();
    plan.validate(num_watermarks);
    if (!(default_lambda > 0.0 && default_lambda < 1.0))
        throw std::invalid_argument("resolve_plan: default lambda must lie in (0, 1)");

    const int64_t n = ds.size();
    std::vector<int64_t> rule_of(static_cast<size_t>(n), -1);
    std::vector<std::string> conflicts;
    for (size_t ri = 0; ri < plan.rules.size(); ++ri) {
        for (int64_t i : plan.rules[ri].select.select(ds, extra_attrs)) {
            if (rule_of[static_cast<size_t>(i)] >= 0) {
                if (conflicts.size() < 8)
                    conflicts.push_back(ds.ids[static_cast<size_t>(i)] + " (rules " +
                                        std::to_string(rule_of[static_cast<size_t>(i)]) + ", " +
                                        std::to_string(ri) + ")");
            } else {
                rule_of[static_cast<size_t>(i)] = static_cast<int64_t>(ri);
            }
        }
    }
    if (!conflicts.empty()) {
        std::string msg = "resolve_plan: selectors overlap; conflicting image ids:";
        for (const auto& c : conflicts) msg += "\n  " + c;
        throw std::invalid_argument(msg);
    }

    Manifest m;
    m.dataset_fingerprint = ds.fingerprint();
    m.codec_checkpoint = codec_checkpoint_hash;
    m.created_at = iso8601_utc_now();
    m.seed = seed;
    m.plan = plan;
    for (auto& r : m.plan.rules)
        if (r.lambda < 0) r.lambda = default_lambda;

    m.records.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        ManifestRecord& rec = m.records[static_cast<size_t>(i)];
        rec.id = ds.ids[static_cast<size_t>(i)];
        rec.rule = rule_of[static_cast<size_t>(i)];
        if (rec.rule >= 0) {
            const MarkRule& rule = m.plan.rules[static_cast<size_t>(rec.rule)];
            rec.watermark = rule.watermark;
            rec.lambda = rule.lambda;
        }
    }
    return m;
}

data::ImageDataset apply_marking(const data::ImageDataset& ds, const Manifest& manifest,
                                 codec::WatermarkCodec<float>& codec, bool quantize,
                                 const std::string& expect_codec_hash) {
    const std::string mh = manifest.hash();
    for (const auto& applied : ds.applied_manifests)
        if (applied == mh)
            throw std::runtime_error("apply_marking: manifest " + mh.substr(0, 12) +
                                     "... already applied to this dataset");
    const std::string fp = ds.fingerprint();
    if (fp != manifest.dataset_fingerprint)
        throw std::runtime_error(
            "apply_marking: stale manifest, dataset fingerprint " + fp.substr(0, 12) +
            "... does not match manifest's " + manifest.dataset_fingerprint.substr(0, 12) +
            "...");
    if (!expect_codec_hash.empty() && !manifest.codec_checkpoint.empty() &&
        expect_codec_hash != manifest.codec_checkpoint)
        throw std::runtime_error("apply_marking: codec checkpoint " +
                                 expect_codec_hash.substr(0, 12) +
                                 "... is not the one the manifest was resolved against (" +
                                 manifest.codec_checkpoint.substr(0, 12) + "...)");
    if (static_cast<int64_t>(manifest.records.size()) != ds.size())
        throw std::runtime_error("apply_marking: manifest covers " +
                                 std::to_string(manifest.records.size()) + " images, dataset has " +
                                 std::to_string(ds.size()));
    const auto& cfg = codec.config();
    if (cfg.image_channels != ds.channels() || cfg.image_size != ds.image_size())
        throw std::runtime_error("apply_marking: codec resolution does not match dataset");

    data::ImageDataset out = ds;
    const int64_t chw = ds.channels() * ds.image_size() * ds.image_size();
    std::map<int64_t, Tensor<float>> wm_cache;
    for (int64_t i = 0; i < ds.size(); ++i) {
        const ManifestRecord& rec = manifest.records[static_cast<size_t>(i)];
        if (rec.id != ds.ids[static_cast<size_t>(i)])
            throw std::runtime_error("apply_marking: record " + std::to_string(i) + " id " +
                                     rec.id + " does not match dataset id " +
                                     ds.ids[static_cast<size_t>(i)]);
        if (rec.rule < 0) continue;
        auto it = wm_cache.find(rec.watermark);
        if (it == wm_cache.end())
            it = wm_cache.emplace(rec.watermark, codec.generate_watermark(rec.watermark)).first;
        const Tensor<float>& w = it->second;
        const float l = static_cast<float>(rec.lambda), il = 1.0f - l;
        float* px = out.images.data() + i * chw;
        for (int64_t j = 0; j < chw; ++j) {
            float v = l * w[j] + il * px[j];
            px[j] = quantize ? quantize_u8(v) : v;
        }
    }
    out.applied_manifests.push_back(mh);
    return out;
}

}  // namespace provmark::provenance
