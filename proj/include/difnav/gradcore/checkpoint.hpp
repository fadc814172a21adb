#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>

#include "difnav/gradcore/tensor.hpp"

namespace difnav::gradcore {

inline constexpr char kCheckpointMagic[8] = {'D', 'N', 'A', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Parameters plus string metadata (architecture keys, stage name).
template <class T>
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamStore<T> params;
};

namespace detail {

template <class T>
constexpr std::uint32_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 4u : 8u;
}

inline void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated checkpoint");
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated checkpoint");
  return v;
}
inline std::string get_str(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1u << 20)) throw FormatError("checkpoint string too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated checkpoint");
  return s;
}

}  // namespace detail

/// Binary layout: magic, version, dtype, metadata pairs, then (name, rank, extents, raw values).
template <class T>
void write_checkpoint(std::ostream& os, const Checkpoint<T>& ck) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, detail::dtype_code<T>());
  detail::put_u64(os, ck.meta.size());
  for (const auto& [k, v] : ck.meta) {
    detail::put_str(os, k);
    detail::put_str(os, v);
  }
  detail::put_u64(os, ck.params.size());
  for (const auto& [name, t] : ck.params) {
    detail::put_str(os, name);
    detail::put_u64(os, t.shape.size());
    for (auto e : t.shape) detail::put_u64(os, e);
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  }
}

template <class T>
Checkpoint<T> read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError("not a checkpoint file");
  }
  const auto version = detail::get_u32(is);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  if (detail::get_u32(is) != detail::dtype_code<T>()) throw VersionError("checkpoint scalar type mismatch");
  Checkpoint<T> ck;
  const auto n_meta = detail::get_u64(is);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto k = detail::get_str(is);
    ck.meta[k] = detail::get_str(is);
  }
  const auto n_params = detail::get_u64(is);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    auto name = detail::get_str(is);
    const auto rank = detail::get_u64(is);
    if (rank > 8) throw FormatError("checkpoint tensor rank too large");
    Shape shape(rank);
    for (auto& e : shape) e = detail::get_u64(is);
    std::vector<T> data(numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)))) {
      throw FormatError("truncated checkpoint tensor " + name);
    }
    ck.params.add(name, Tensor<T>(std::move(shape), std::move(data)));
  }
  return ck;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingInputError("cannot write checkpoint " + path.string());
  write_checkpoint(os, ck);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("checkpoint not found: " + path.string());
  return read_checkpoint<T>(is);
}

}  // namespace difnav::gradcore
