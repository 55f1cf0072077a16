#include "stcrank/jsonio.hpp"

#include "stcrank/error.hpp"

#include <fstream>
#include <sstream>

namespace stcrank {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_jsonl(const fs::path& path, std::span<const nlohmann::json> rows) {
  std::string text;
  for (const auto& r : rows) {
    text += r.dump();
    text += '\n';
  }
  write_text(path, text);
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<nlohmann::json> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_logs(const fs::path& path, std::span<const SessionLog> logs) {
  std::vector<nlohmann::json> rows;
  rows.reserve(logs.size());
  for (const auto& l : logs) rows.push_back(to_json(l));
  write_jsonl(path, rows);
}

std::vector<SessionLog> load_logs(const fs::path& path) {
  std::vector<SessionLog> out;
  for (const auto& j : read_jsonl(path)) out.push_back(session_from_json(j));
  return out;
}

void save_samples(const fs::path& path, std::span<const TrainingSample> samples) {
  std::vector<nlohmann::json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(to_json(s));
  write_jsonl(path, rows);
}

std::vector<TrainingSample> load_samples(const fs::path& path) {
  std::vector<TrainingSample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(sample_from_json(j));
  return out;
}

void require_artifact(const fs::path& path, const std::string& step) {
  if (!fs::exists(path)) throw DependencyError(step, "missing " + path.string());
}

}  // namespace stcrank
