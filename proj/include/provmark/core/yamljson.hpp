#pragma once

#include <string>

#include <json.hpp>

namespace provmark {

// Converts a YAML document to JSON (maps, sequences, typed scalars). Used so
// every config/plan format has a single JSON-based parsing path.
nlohmann::json yaml_to_json(const std::string& yaml_text);

// Loads .yaml/.yml via yaml_to_json, .json directly.
nlohmann::json load_structured_file(const std::string& path);

// Current time as ISO-8601 UTC, e.g. 2026-08-17T12:00:00Z.
std::string iso8601_utc_now();

}  // namespace provmark
