#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "batchal/orchestrator.hpp"

namespace batchal::store {

nlohmann::json record_to_json(const RoundRecord& record);
RoundRecord record_from_json(const nlohmann::json& j);

nlohmann::json cycle_to_json(const CycleState& state);
CycleState cycle_from_json(const nlohmann::json& j);

// Writes to a temporary sibling and renames it over `path`.
void write_atomically(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace batchal::store
