#include "vmsgan/csv.hpp"

#include <array>
#include <charconv>
#include <sstream>

#include "vmsgan/error.hpp"

namespace vmsgan {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    const auto start = field.find_first_not_of(' ');
    fields.push_back(start == std::string::npos ? std::string{} : field.substr(start));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError("CSV column '" + std::string(name) + "' not found");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(table.rows.size() + 1) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (first) throw DataError("CSV file " + path.string() + " is empty");
  return table;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw NumericError("cannot format number");
  return {buf.data(), end};
}

double parse_number(const std::string& text, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("invalid number '" + text + "' for " + std::string(what));
  }
  return v;
}

long long parse_integer(const std::string& text, std::string_view what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("invalid integer '" + text + "' for " + std::string(what));
  }
  return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append)
    : columns_(header.size()) {
  const bool existing = append && std::filesystem::exists(path);
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw DataError("cannot write CSV file " + path.string());
  if (!existing) row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) throw UsageError("CSV row width mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

}  // namespace vmsgan
