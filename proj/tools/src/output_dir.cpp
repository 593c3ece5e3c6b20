#include "output_dir.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "vmsgan/error.hpp"

namespace vmsgan::cli {

namespace fs = std::filesystem;

OutputDir::OutputDir(const fs::path& path, const std::string& command, const RunConfig& config) : path_(path) {
  if (path.empty()) throw UsageError("an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw DataError("cannot create output directory " + path.string() + ": " + ec.message());
  const fs::path lock = path / ".lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DataError("cannot create lockfile " + lock.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw UsageError("output directory " + path.string() + " is in use by another command");
  }
  write_run_config(path / "run_config.json", command, config);
}

OutputDir::~OutputDir() {
  if (fd_ >= 0) {
    std::error_code ec;
    fs::remove(path_ / ".lock", ec);
    ::close(fd_);
  }
}

fs::path epoch_checkpoint(const fs::path& dir, const std::string& prefix, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_epoch_%04d.ckpt", epoch);
  return dir / (prefix + buf);
}

namespace {

std::vector<std::pair<int, fs::path>> list_checkpoints(const fs::path& dir, const std::string& prefix) {
  std::vector<std::pair<int, fs::path>> found;
  if (!fs::is_directory(dir)) return found;
  const std::string head = prefix + "_epoch_";
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(head, 0) != 0 || entry.path().extension() != ".ckpt") continue;
    const std::string digits = name.substr(head.size(), name.size() - head.size() - 5);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    found.emplace_back(std::stoi(digits), entry.path());
  }
  std::sort(found.begin(), found.end());
  return found;
}

}  // namespace

std::optional<fs::path> latest_checkpoint(const fs::path& dir, const std::string& prefix) {
  const auto found = list_checkpoints(dir, prefix);
  if (found.empty()) return std::nullopt;
  return found.back().second;
}

void prune_checkpoints(const fs::path& dir, const std::string& prefix, int keep) {
  const auto found = list_checkpoints(dir, prefix);
  for (std::size_t i = 0; i + static_cast<std::size_t>(keep) < found.size(); ++i) fs::remove(found[i].second);
}

}  // namespace vmsgan::cli
