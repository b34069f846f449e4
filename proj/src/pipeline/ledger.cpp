#include "provmark/pipeline/ledger.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "provmark/core/yamljson.hpp"

namespace provmark::pipeline {

nlohmann::json StageRecord::to_json() const {
    nlohmann::json j{{"stage", stage},
                     {"input_hash", input_hash},
                     {"output_hash", output_hash},
                     {"wall_seconds", wall_seconds},
                     {"status", status},
                     {"created_at", created_at}};
    if (!error.empty()) j["error"] = error;
    return j;
}

StageRecord StageRecord::from_json(const nlohmann::json& j) {
    StageRecord r;
    r.stage = j.at("stage").get<std::string>();
    r.input_hash = j.value("input_hash", "");
    r.output_hash = j.value("output_hash", "");
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", "");
    r.created_at = j.value("created_at", "");
    return r;
}

RunLedger::RunLedger(std::string path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    if (!in) throw std::runtime_error("ledger: cannot read " + path_);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("ledger: bad json at " + path_ + ":" +
                                     std::to_string(lineno));
        records_.push_back(StageRecord::from_json(j));
    }
}

void RunLedger::append(StageRecord r) {
    if (r.status != "ok" && r.status != "skipped" && r.status != "failed")
        throw std::invalid_argument("ledger: status must be ok|skipped|failed");
    r.created_at = iso8601_utc_now();
    std::filesystem::path p(path_);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("ledger: cannot append to " + path_);
    out << r.to_json().dump() << "\n";
    if (!out) throw std::runtime_error("ledger: write failed for " + path_);
    records_.push_back(std::move(r));
}

const StageRecord* RunLedger::last_ok(const std::string& stage,
                                      const std::string& input_hash) const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it)
        if (it->stage == stage && it->input_hash == input_hash && it->status == "ok")
            return &*it;
    return nullptr;
}

}  // namespace provmark::pipeline
