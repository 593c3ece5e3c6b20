#include "vmsgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vmsgan/error.hpp"

namespace vmsgan {
namespace {

constexpr char kMagic[8] = {'V', 'M', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kArray = 0;
constexpr std::uint8_t kBytes = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <class T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError("truncated checkpoint " + path);
  return value;
}

std::string read_string(std::istream& is, std::uint64_t len, const std::string& path) {
  std::string s(len, '\0');
  if (len > 0 && !is.read(s.data(), static_cast<std::streamsize>(len))) {
    throw DataError("truncated checkpoint " + path);
  }
  return s;
}

}  // namespace

void Checkpoint::put(const std::string& name, std::span<const double> values) {
  arrays_[name] = std::vector<double>(values.begin(), values.end());
}

void Checkpoint::put_bytes(const std::string& name, std::string bytes) { blobs_[name] = std::move(bytes); }

bool Checkpoint::has(const std::string& name) const { return arrays_.contains(name) || blobs_.contains(name); }

const std::vector<double>& Checkpoint::doubles(const std::string& name) const {
  const auto it = arrays_.find(name);
  if (it == arrays_.end()) throw DataError("checkpoint has no array section '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::bytes(const std::string& name) const {
  const auto it = blobs_.find(name);
  if (it == blobs_.end()) throw DataError("checkpoint has no byte section '" + name + "'");
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kFormatVersion);
    const std::string meta = metadata_.dump();
    write_pod<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arrays_.size() + blobs_.size()));
    for (const auto& [name, values] : arrays_) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod<std::uint8_t>(os, kArray);
      write_pod<std::uint64_t>(os, values.size() * sizeof(double));
      os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    for (const auto& [name, blob] : blobs_) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod<std::uint8_t>(os, kBytes);
      write_pod<std::uint64_t>(os, blob.size());
      os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + p);
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(p + " is not a vmsgan checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is, p);
  if (version != kFormatVersion) {
    throw DataError(p + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta_len = read_pod<std::uint64_t>(is, p);
  try {
    ckpt.metadata_ = nlohmann::json::parse(read_string(is, meta_len, p));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p + ": corrupt checkpoint metadata: " + e.what());
  }
  const auto count = read_pod<std::uint32_t>(is, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is, p);
    std::string name = read_string(is, name_len, p);
    const auto kind = read_pod<std::uint8_t>(is, p);
    const auto len = read_pod<std::uint64_t>(is, p);
    std::string payload = read_string(is, len, p);
    if (kind == kArray) {
      if (len % sizeof(double) != 0) throw DataError(p + ": misaligned array section " + name);
      std::vector<double> values(len / sizeof(double));
      std::memcpy(values.data(), payload.data(), len);
      ckpt.arrays_[name] = std::move(values);
    } else if (kind == kBytes) {
      ckpt.blobs_[name] = std::move(payload);
    } else {
      throw DataError(p + ": unknown section kind in " + name);
    }
  }
  return ckpt;
}

}  // namespace vmsgan
