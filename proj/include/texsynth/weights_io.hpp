#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/net.hpp"
#include "texsynth/raster_io.hpp"

// Weight file layout (all integers and floats little-endian):
//
//   "NTWF"  u32 version
//   str arch_name  u32 input_channels  u32 layer_count
//   layer_count x { u8 kind  u8 pool_mode  u32 in  u32 out  str name }
//   str provenance
//   per conv layer: out*in*9 f64 kernel, out f64 bias
//   u64 FNV-1a checksum of every preceding byte
//
// where str = u32 length + raw bytes.

namespace texsynth::net {

inline constexpr std::uint32_t kWeightFileVersion = 1;

inline std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.begin() + std::ptrdiff_t(pos_), b_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) fail(ErrorCode::MalformedFile, "truncated weight file");
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_weights(const Architecture& arch, const NetworkWeights& w) {
  check_weights(arch, w);
  detail::Writer out;
  for (char c : std::string("NTWF")) out.u8(std::uint8_t(c));
  out.u32(kWeightFileVersion);
  out.str(arch.name());
  out.u32(std::uint32_t(arch.input_channels()));
  out.u32(std::uint32_t(arch.layers().size()));
  for (const auto& l : arch.layers()) {
    out.u8(std::uint8_t(l.kind));
    out.u8(std::uint8_t(l.pool));
    out.u32(std::uint32_t(l.in_channels));
    out.u32(std::uint32_t(l.out_channels));
    out.str(l.name);
  }
  out.str(w.provenance);
  for (const auto& p : w.conv) {
    for (double v : p.kernel) out.f64(v);
    for (double v : p.bias) out.f64(v);
  }
  out.u64(fnv1a64(out.bytes.data(), out.bytes.size()));
  return std::move(out.bytes);
}

struct LoadedWeights {
  Architecture architecture;
  NetworkWeights weights;
};

inline LoadedWeights decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::string(bytes.begin(), bytes.begin() + 4) != "NTWF") {
    fail(ErrorCode::MalformedFile, "not a weight file (bad magic)");
  }
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) fail(ErrorCode::ChecksumMismatch, "weight file checksum mismatch");

  detail::Reader in(bytes, body);
  for (int i = 0; i < 4; ++i) in.u8();
  if (const auto v = in.u32(); v != kWeightFileVersion) {
    fail(ErrorCode::MalformedFile, "unsupported weight file version " + std::to_string(v));
  }
  const std::string name = in.str();
  const int input_channels = int(in.u32());
  const std::uint32_t count = in.u32();
  if (count > 4096) fail(ErrorCode::MalformedFile, "implausible layer count");
  std::vector<LayerSpec> layers;
  std::vector<std::pair<int, int>> declared;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    const auto kind = in.u8();
    const auto mode = in.u8();
    if (kind > 2 || mode > 1) fail(ErrorCode::MalformedFile, "bad layer record");
    l.kind = LayerKind(kind);
    l.pool = PoolMode(mode);
    const int cin = int(in.u32());
    l.out_channels = int(in.u32());
    l.name = in.str();
    declared.emplace_back(cin, l.out_channels);
    layers.push_back(std::move(l));
  }
  Architecture arch(name, input_channels, std::move(layers));
  for (std::size_t i = 0; i < declared.size(); ++i) {
    const auto& l = arch.layers()[i];
    if (declared[i] != std::pair(l.in_channels, l.out_channels)) {
      fail(ErrorCode::MalformedFile, "inconsistent channel chain at layer " + l.name);
    }
  }
  NetworkWeights w;
  w.provenance = in.str();
  for (const auto& l : arch.layers()) {
    if (l.kind != LayerKind::Conv3x3) continue;
    ConvParams p;
    p.kernel.resize(std::size_t(l.out_channels) * l.in_channels * 9);
    for (double& v : p.kernel) v = in.f64();
    p.bias.resize(std::size_t(l.out_channels));
    for (double& v : p.bias) v = in.f64();
    w.conv.push_back(std::move(p));
  }
  if (!in.at_end()) fail(ErrorCode::MalformedFile, "trailing bytes in weight file");
  check_weights(arch, w);
  return {std::move(arch), std::move(w)};
}

inline void save_weights(const Architecture& arch, const NetworkWeights& w, const std::filesystem::path& path) {
  write_file_bytes(path, encode_weights(arch, w));
}

/// Loads weights and checks them against the architecture the caller expects.
inline NetworkWeights load_weights(const std::filesystem::path& path, const Architecture& expected) {
  auto loaded = decode_weights(read_file_bytes(path));
  if (!(loaded.architecture.layers() == expected.layers()) ||
      loaded.architecture.input_channels() != expected.input_channels()) {
    fail(ErrorCode::DimensionMismatch, "weight file " + path.string() +
                                           " was saved for a different architecture");
  }
  return std::move(loaded.weights);
}

}  // namespace texsynth::net
