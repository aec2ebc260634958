#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"

// Binary PPM (P6) / PGM (P5) codec. Samples above 8 bits are big-endian, as
// the netpbm format requires.

namespace texsynth {

enum class BitDepth { k8 = 8, k16 = 16 };

inline int max_value(BitDepth depth) { return depth == BitDepth::k8 ? 255 : 65535; }

inline std::uint16_t quantize_sample(double v, BitDepth depth) {
  const double m = max_value(depth);
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * m));
}

/// Sample payload only (no header), clamped and quantized.
inline std::vector<std::uint8_t> encode_samples(const Image& img, BitDepth depth) {
  std::vector<std::uint8_t> out;
  out.reserve(img.size() * (depth == BitDepth::k8 ? 1 : 2));
  for (double v : img.values()) {
    const std::uint16_t q = quantize_sample(v, depth);
    if (depth == BitDepth::k16) out.push_back(std::uint8_t(q >> 8));
    out.push_back(std::uint8_t(q & 0xff));
  }
  return out;
}

inline std::vector<std::uint8_t> encode_netpbm(const Image& img, BitDepth depth = BitDepth::k16) {
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n" + std::to_string(max_value(depth)) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto payload = encode_samples(img, depth);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

namespace detail {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      fail(ErrorCode::MalformedFile, "malformed netpbm header");
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000'000L) fail(ErrorCode::MalformedFile, "netpbm header value too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail(ErrorCode::MalformedFile, "missing separator before netpbm payload");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace detail

inline Image decode_netpbm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') fail(ErrorCode::MalformedFile, "not a netpbm file");
  int channels = 0;
  if (bytes[1] == '6') {
    channels = 3;
  } else if (bytes[1] == '5') {
    channels = 1;
  } else {
    fail(ErrorCode::MalformedFile,
         std::string("unsupported netpbm variant P") + char(bytes[1]) + " (only P5/P6)");
  }
  detail::HeaderReader reader(bytes);
  const long width = reader.next_int();
  const long height = reader.next_int();
  const long maxval = reader.next_int();
  if (width < 1 || height < 1) fail(ErrorCode::MalformedFile, "netpbm dimensions must be positive");
  if (maxval < 1 || maxval > 65535) fail(ErrorCode::MalformedFile, "netpbm maxval out of range");
  const std::size_t offset = reader.payload_offset();
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t count = std::size_t(width) * std::size_t(height) * channels;
  if (bytes.size() < offset + count * bytes_per_sample) {
    fail(ErrorCode::MalformedFile, "truncated netpbm payload");
  }
  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = bytes_per_sample == 2 ? (unsigned(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
    if (v > unsigned(maxval)) fail(ErrorCode::MalformedFile, "netpbm sample exceeds maxval");
    data[i] = double(v) / double(maxval);
  }
  return Image(int(height), int(width), channels, std::move(data));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "short write to " + path.string());
}

inline Image read_image(const std::filesystem::path& path) {
  return decode_netpbm(read_file_bytes(path));
}

inline void write_image(const Image& img, const std::filesystem::path& path,
                        BitDepth depth = BitDepth::k16) {
  write_file_bytes(path, encode_netpbm(img, depth));
}

}  // namespace texsynth
