#pragma once

#include <filesystem>

#include "json.hpp"
#include "ps/core.hpp"
#include "ps/synth.hpp"

namespace ps {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

void save_json(const Json& doc, const std::filesystem::path& path);
Json load_json(const std::filesystem::path& path);

// Reads a required field, raising ErrorCode::Format with the field name.
const Json& require(const Json& doc, const char* field);

Json to_json(const OutageEvent& e);
OutageEvent outage_event_from_json(const Json& j);

Json to_json(const DeviceCatalog& c);
DeviceCatalog catalog_from_json(const Json& j);

Json to_json(const synth::GroundTruth& truth);
synth::GroundTruth ground_truth_from_json(const Json& j);

Json to_json(const synth::SynthConfig& config);
// Missing fields keep their defaults; a missing "templates" array selects
// the default five-class template set.
synth::SynthConfig synth_config_from_json(const Json& j);

}  // namespace ps
