#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hpk/tensor.hpp"

namespace hpk {

// Little-endian binary helpers (explicit, host-order independent).
namespace wire {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline bool get_u16(std::istream& is, std::uint16_t& v) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) return false;
  v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  return true;
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f32(std::istream& is, float& v) {
  std::uint32_t bits;
  if (!get_u32(is, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

}  // namespace wire

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

inline constexpr char kCheckpointMagic[4] = {'H', 'P', 'K', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Weight checkpoint: "HPKW", u32 version, then per-tensor records
// (u16 name length, name bytes, u32 rank, u32 dims..., f32 payload), LE.
inline void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 4);
  wire::put_u32(os, kCheckpointVersion);
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > 0xffff) throw ConfigError("checkpoint tensor name too long");
    wire::put_u16(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    wire::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t n = 1;
    for (int d : t.shape) {
      wire::put_u32(os, static_cast<std::uint32_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (n != t.data.size()) throw ConfigError("checkpoint tensor shape/data mismatch: " + t.name);
    for (float v : t.data) wire::put_f32(os, v);
  }
  if (!os) throw ConfigError("checkpoint write failed: " + path);
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ConfigError("bad checkpoint magic: " + path);
  std::uint32_t version;
  if (!wire::get_u32(is, version) || version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version in " + path);
  std::vector<NamedTensor> out;
  std::uint16_t name_len;
  while (wire::get_u16(is, name_len)) {
    NamedTensor t;
    t.name.resize(name_len);
    if (!is.read(t.name.data(), name_len)) throw ConfigError("truncated checkpoint: " + path);
    std::uint32_t rank;
    if (!wire::get_u32(is, rank) || rank > 8) throw ConfigError("bad checkpoint rank: " + path);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d;
      if (!wire::get_u32(is, d) || d == 0) throw ConfigError("bad checkpoint dim: " + path);
      t.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!wire::get_f32(is, t.data[i])) throw ConfigError("truncated checkpoint: " + path);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace hpk
