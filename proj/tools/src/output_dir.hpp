#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vmsgan_cli/run_config.hpp"

namespace vmsgan::cli {

/// Output directory held under an exclusive lock for the lifetime of the
/// object. A second command on the same directory fails with UsageError.
class OutputDir {
 public:
  OutputDir(const std::filesystem::path& path, const std::string& command, const RunConfig& config);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

/// `<dir>/<prefix>_epoch_NNNN.ckpt`
[[nodiscard]] std::filesystem::path epoch_checkpoint(const std::filesystem::path& dir, const std::string& prefix,
                                                     int epoch);

/// Highest-epoch checkpoint with this prefix, if any.
[[nodiscard]] std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir,
                                                                     const std::string& prefix);

/// Deletes all but the `keep` highest-epoch checkpoints with this prefix.
void prune_checkpoints(const std::filesystem::path& dir, const std::string& prefix, int keep = 2);

}  // namespace vmsgan::cli
