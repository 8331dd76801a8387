#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>

#include <json.hpp>

namespace triagebot {

using Json = nlohmann::json;

/// Milliseconds since the Unix epoch.
using Instant = std::int64_t;

Instant wall_clock_ms();

/// Random 128-bit hex token.
std::string random_token();

/// Append-only JSON-lines file. Each append writes exactly one line and
/// flushes it before returning; appends from many threads are serialized.
class JsonlLog {
 public:
  explicit JsonlLog(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }

  void append(const Json& record);

  // Calls `visit` for every well-formed line in file order. A torn final
  // line (crash mid-write) is skipped; a malformed line elsewhere throws
  // Error(storage_error). Returns the number of records visited.
  std::size_t replay(const std::function<void(const Json&)>& visit) const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

// Write-then-rename so readers never observe a partial file.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace triagebot
