#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace vmsgan {

/// Header + rows of a comma-separated file (no quoting; fields must not contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws DataError when absent.
  [[nodiscard]] std::size_t column(std::string_view name) const;
};

[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal text of a double.
[[nodiscard]] std::string format_number(double value);

[[nodiscard]] double parse_number(const std::string& text, std::string_view what);
[[nodiscard]] long long parse_integer(const std::string& text, std::string_view what);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append = false);

  void row(const std::vector<std::string>& fields);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace vmsgan
