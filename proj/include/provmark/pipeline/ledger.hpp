#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace provmark::pipeline {

// One completed, skipped, or failed stage execution.
struct StageRecord {
    std::string stage;
    std::string input_hash;   // digest of config slice + upstream outputs
    std::string output_hash;  // digest of the artifacts this stage produced
    double wall_seconds = 0;
    std::string status;  // ok | skipped | failed
    std::string error;
    std::string created_at;

    nlohmann::json to_json() const;
    static StageRecord from_json(const nlohmann::json& j);
};

// Append-only NDJSON journal of stage executions. A stage whose inputs hash
// to a value already recorded as ok can be skipped on rerun; the skip itself
// is journaled so the file reads as a complete history.
class RunLedger {
  public:
    explicit RunLedger(std::string path);

    const std::string& path() const { return path_; }
    const std::vector<StageRecord>& records() const { return records_; }

    // Stamps created_at, appends one line to the journal, keeps it in memory.
    void append(StageRecord r);

    // Most recent ok record for this stage with matching inputs, or nullptr.
    const StageRecord* last_ok(const std::string& stage, const std::string& input_hash) const;

  private:
    std::string path_;
    std::vector<StageRecord> records_;
};

}  // namespace provmark::pipeline
