#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "skewnet/error.hpp"
#include "skewnet/nn/sequential.hpp"
#include "skewnet/tensor.hpp"
#include "skewnet/text.hpp"

namespace skewnet {

/// Binary model container.
///
///   "SKWN"                      4 bytes
///   version                     u32
///   header entry count          u32, then (key, value) string pairs
///   tensor count                u32, then per tensor:
///     name                      string
///     rank                      u32, then rank x u64 extents
///     values                    f64, row-major
///
/// Strings are a u32 byte length followed by the bytes. All integers and
/// reals are little-endian. The header always carries "kind".
struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const std::string& get(const std::string& key) const {
    const auto it = header.find(key);
    if (it == header.end()) throw DataError("checkpoint header lacks '" + key + "'");
    return it->second;
  }

  std::size_t get_size(const std::string& key) const {
    const auto v = detail::parse_integer<std::size_t>(get(key));
    if (!v) throw DataError("checkpoint header '" + key + "' is not an integer");
    return *v;
  }

  std::string kind() const { return get("kind"); }

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'K', 'W', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = std::bit_cast<U>(v);
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof b);
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof b)) throw DataError("checkpoint is truncated");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(b[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > (1u << 20)) throw DataError("checkpoint string length is implausible");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("checkpoint is truncated");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.header.size()));
  for (const auto& [k, v] : ck.header) {
    detail::put_string(out, k);
    detail::put_string(out, v);
  }
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_string(out, name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) detail::put_le<double>(out, v);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto n_header = detail::get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_header; ++i) {
    std::string k = detail::get_string(in);
    ck.header[k] = detail::get_string(in);
  }
  const auto n_tensors = detail::get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = detail::get_string(in);
    const auto rank = detail::get_le<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw DataError("checkpoint tensor '" + name + "' has bad rank");
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
    std::vector<double> values(shape_product(shape));
    for (double& v : values) v = detail::get_le<double>(in);
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in);
}

/// Appends every parameter of `net` under its named_parameters key.
inline void store_parameters(Checkpoint& ck, nn::Sequential& net, const std::string& prefix = "") {
  for (auto& [name, p] : net.named_parameters(prefix)) ck.tensors.emplace_back(name, p->value);
}

/// Copies tensors back into a freshly built network of the same layout.
inline void restore_parameters(const Checkpoint& ck, nn::Sequential& net, const std::string& prefix = "") {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
  for (auto& [name, p] : net.named_parameters(prefix)) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_string(it->second->shape()) +
                           ", model expects " + shape_string(p->value.shape()));
    }
    p->value = *it->second;
  }
}

}  // namespace skewnet
