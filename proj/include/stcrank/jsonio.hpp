#pragma once

#include "stcrank/labels.hpp"
#include "stcrank/worldsim.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stcrank {

/// Writes via a temporary file and rename so readers never see partial
/// artifacts. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// One compact JSON document per line.
void write_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

void save_logs(const std::filesystem::path& path, std::span<const SessionLog> logs);
std::vector<SessionLog> load_logs(const std::filesystem::path& path);

void save_samples(const std::filesystem::path& path, std::span<const TrainingSample> samples);
std::vector<TrainingSample> load_samples(const std::filesystem::path& path);

/// Throws DependencyError naming `step` when `path` does not exist.
void require_artifact(const std::filesystem::path& path, const std::string& step);

}  // namespace stcrank
