#include "triagebot/jsonl.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "triagebot/error.hpp"

namespace triagebot {

Instant wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string random_token() {
  thread_local std::mt19937_64 rng{[] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

JsonlLog::JsonlLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void JsonlLog::append(const Json& record) {
  std::string line = record.dump();
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  // O_APPEND makes each write land at the current end of file.
  int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::storage_error, "cannot open " + path_.string());
  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      ::close(fd);
      throw Error(Errc::storage_error, "write failed on " + path_.string());
    }
    written += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

std::size_t JsonlLog::replay(const std::function<void(const Json&)>& visit) const {
  std::lock_guard lock(mutex_);
  std::ifstream in(path_);
  if (!in) return 0;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Json record = Json::parse(lines[i], nullptr, /*allow_exceptions=*/false);
    if (record.is_discarded()) {
      if (i + 1 == lines.size()) break;
      throw Error(Errc::storage_error,
                  path_.string() + ": corrupt record on line " + std::to_string(i + 1));
    }
    visit(record);
    ++count;
  }
  return count;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::storage_error, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(Errc::storage_error, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::storage_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace triagebot
