#pragma once

// Versioned binary tensor container. Layout (all integers little-endian):
//   magic: 4 bytes ("WCCK" for model checkpoints, "WCCD" for datasets)
//   version: u32
//   entry count: u32
//   per entry: name (u32 length + UTF-8 bytes), shape (4 x u64),
//              dtype tag (u8: 0 = f32, 1 = f64), raw payload.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "wcc/data_error.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError(DataError::Kind::kTruncated, "container: truncated header field");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | hi << 32;
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace detail

template <typename T>
void write_tensor_container(const std::filesystem::path& path, const char magic[4],
                            std::span<const std::pair<std::string, const Tensor<T>*>> entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(DataError::Kind::kMissingFile, "cannot open for write: " + path.string());
  os.write(magic, 4);
  detail::put_u32(os, kContainerVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape s = t->shape();
    detail::put_u64(os, static_cast<std::uint64_t>(s.n));
    detail::put_u64(os, static_cast<std::uint64_t>(s.c));
    detail::put_u64(os, static_cast<std::uint64_t>(s.h));
    detail::put_u64(os, static_cast<std::uint64_t>(s.w));
    os.put(static_cast<char>(detail::dtype_tag<T>()));
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    os.write(reinterpret_cast<const char*>(t->data().data()),
             static_cast<std::streamsize>(sizeof(T) * t->numel()));
  }
  if (!os) throw DataError(DataError::Kind::kTruncated, "container: short write to " + path.string());
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> read_tensor_container(
    const std::filesystem::path& path, const char expected_magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataError::Kind::kMissingFile, "cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, expected_magic, 4) != 0)
    throw DataError(DataError::Kind::kBadMagic,
                    "container: bad magic in " + path.string() + ", expected " +
                        std::string(expected_magic, 4));
  const std::uint32_t version = detail::get_u32(is);
  if (version != kContainerVersion)
    throw DataError(DataError::Kind::kBadFormat,
                    "container: unsupported version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(is);
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Shape s;
    s.n = static_cast<long>(detail::get_u64(is));
    s.c = static_cast<long>(detail::get_u64(is));
    s.h = static_cast<long>(detail::get_u64(is));
    s.w = static_cast<long>(detail::get_u64(is));
    const int tag = is.get();
    if (!is) throw DataError(DataError::Kind::kTruncated, "container: truncated entry header");
    if (tag != detail::dtype_tag<T>())
      throw DataError(DataError::Kind::kBadFormat,
                      "container: dtype tag " + std::to_string(tag) + " does not match reader");
    std::vector<T> data(static_cast<std::size_t>(s.numel()));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(T) * data.size()));
    if (!is) throw DataError(DataError::Kind::kTruncated, "container: truncated payload for " + name);
    out.emplace_back(std::move(name), Tensor<T>::from(s, std::move(data)));
  }
  return out;
}

inline constexpr char kCheckpointMagic[4] = {'W', 'C', 'C', 'K'};
inline constexpr char kDatasetMagic[4] = {'W', 'C', 'C', 'D'};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamRegistry<T>& reg) {
  std::vector<std::pair<std::string, const Tensor<T>*>> entries;
  entries.reserve(reg.size());
  for (const auto& e : reg.entries()) entries.emplace_back(e.name, &e.param->value);
  write_tensor_container<T>(path, kCheckpointMagic, entries);
}

// Loads into an existing registry; every stored entry must match a
// registered parameter by name and shape.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParamRegistry<T>& reg) {
  auto entries = read_tensor_container<T>(path, kCheckpointMagic);
  if (entries.size() != reg.size())
    throw DataError(DataError::Kind::kCountMismatch,
                    "checkpoint: holds " + std::to_string(entries.size()) + " tensors, model has " +
                        std::to_string(reg.size()));
  for (auto& [name, tensor] : entries) {
    Parameter<T>* p = reg.find(name);
    if (!p) throw DataError(DataError::Kind::kBadFormat, "checkpoint: unknown parameter '" + name + "'");
    if (!(p->value.shape() == tensor.shape()))
      throw DataError(DataError::Kind::kBadFormat,
                      "checkpoint: shape mismatch for '" + name + "': file " + tensor.shape().str() +
                          ", model " + p->value.shape().str());
    std::copy_n(tensor.data().data(), tensor.numel(), p->value.data().data());
  }
}

}  // namespace wcc
