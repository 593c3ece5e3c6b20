#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vmsgan {

/// Versioned binary container: a JSON metadata block plus named sections of
/// raw float64 arrays or opaque bytes. Values round-trip bit-exactly.
///
/// Layout: "VMSGCKPT" | u32 version | u64 len | metadata JSON |
///         u32 count | { u32 len | name | u8 kind | u64 len | payload }*
class Checkpoint {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  Checkpoint() = default;
  explicit Checkpoint(nlohmann::json metadata) : metadata_(std::move(metadata)) {}

  [[nodiscard]] const nlohmann::json& metadata() const { return metadata_; }
  nlohmann::json& metadata() { return metadata_; }

  void put(const std::string& name, std::span<const double> values);
  void put_bytes(const std::string& name, std::string bytes);

  [[nodiscard]] bool has(const std::string& name) const;
  [[nodiscard]] const std::vector<double>& doubles(const std::string& name) const;
  [[nodiscard]] const std::string& bytes(const std::string& name) const;

  /// Writes to a temporary sibling and renames it into place.
  void save(const std::filesystem::path& path) const;
  [[nodiscard]] static Checkpoint load(const std::filesystem::path& path);

 private:
  nlohmann::json metadata_ = nlohmann::json::object();
  std::map<std::string, std::vector<double>> arrays_;
  std::map<std::string, std::string> blobs_;
};

}  // namespace vmsgan
