#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "texsynth/error.hpp"

namespace texsynth {

/// Real-valued raster, row-major with interleaved channels. Nominal range is
/// [0,1] but intermediate optimizer iterates may leave it; clamping happens on
/// export only.
class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    check_shape();
    data_.assign(size(), fill);
  }

  Image(int height, int width, int channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != size()) {
      fail(ErrorCode::DimensionMismatch, "image data length does not match h*w*c");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "image contains non-finite values");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return std::size_t(height_) * width_; }
  std::size_t size() const noexcept { return pixels() * channels_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (std::size_t(y) * width_ + x) * channels_ + c;
  }

  void check_shape() const {
    if (height_ < 1 || width_ < 1) fail(ErrorCode::InvalidArgument, "image dimensions must be >= 1");
    if (channels_ != 1 && channels_ != 3) {
      fail(ErrorCode::InvalidArgument, "image must have 1 or 3 channels");
    }
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

inline int ceil_half(int n) { return (n + 1) / 2; }

/// Halves each dimension (rounding up) by 2x2 block means; edge blocks average
/// only the pixels that exist.
inline Image downsample2(const Image& img) {
  const int h = img.height(), w = img.width(), ch = img.channels();
  Image out(ceil_half(h), ceil_half(w), ch);
  for (int y = 0; y < out.height(); ++y) {
    const int y0 = 2 * y, y1 = std::min(2 * y + 1, h - 1);
    for (int x = 0; x < out.width(); ++x) {
      const int x0 = 2 * x, x1 = std::min(2 * x + 1, w - 1);
      const double count = double((y1 - y0 + 1) * (x1 - x0 + 1));
      for (int c = 0; c < ch; ++c) {
        double sum = 0.0;
        for (int yy = y0; yy <= y1; ++yy)
          for (int xx = x0; xx <= x1; ++xx) sum += img.at(yy, xx, c);
        out.at(y, x, c) = sum / count;
      }
    }
  }
  return out;
}

namespace detail {

struct LinearTap {
  int lo;
  int hi;
  double t;
};

// Half-pixel-centered source coordinate for each target sample, clamped to the
// source extent.
inline std::vector<LinearTap> bilinear_taps(int src, int dst) {
  std::vector<LinearTap> taps(dst);
  const double scale = double(src) / double(dst);
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, double(src - 1));
    const int lo = std::min(int(std::floor(s)), src - 1);
    const int hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace detail

inline Image upsample_bilinear(const Image& img, int target_h, int target_w) {
  if (target_h < img.height() || target_w < img.width()) {
    fail(ErrorCode::InvalidArgument, "upsample target must not be smaller than the source");
  }
  const auto ty = detail::bilinear_taps(img.height(), target_h);
  const auto tx = detail::bilinear_taps(img.width(), target_w);
  Image out(target_h, target_w, img.channels());
  for (int y = 0; y < target_h; ++y) {
    const auto [y0, y1, fy] = ty[y];
    for (int x = 0; x < target_w; ++x) {
      const auto [x0, x1, fx] = tx[x];
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const double bottom = (1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out.at(y, x, c) = (1 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

/// levels[0] is the original; levels[k] is downsample2 applied k times.
struct Pyramid {
  std::vector<Image> levels;

  int depth() const noexcept { return int(levels.size()) - 1; }
  const Image& level(int k) const { return levels.at(std::size_t(k)); }
};

inline constexpr int kMinCoarsestSide = 8;

inline void check_scale_count(int h, int w, int scales) {
  if (scales < 0) fail(ErrorCode::InvalidArgument, "number of scales must be >= 0");
  if (scales >= 30 || std::min(h, w) < (kMinCoarsestSide << scales)) {
    fail(ErrorCode::TooManyScales,
         "K=" + std::to_string(scales) + " would shrink a " + std::to_string(h) + "x" +
             std::to_string(w) + " image below " + std::to_string(kMinCoarsestSide) +
             " pixels per side");
  }
}

inline Pyramid build_pyramid(const Image& img, int scales) {
  check_scale_count(img.height(), img.width(), scales);
  Pyramid p;
  p.levels.reserve(std::size_t(scales) + 1);
  p.levels.push_back(img);
  for (int k = 1; k <= scales; ++k) p.levels.push_back(downsample2(p.levels.back()));
  return p;
}

/// Unweighted channel mean.
inline Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(y, x, c);
      out.at(y, x, 0) = s / img.channels();
    }
  return out;
}

/// out(y, x) = img((y - dy) mod h, (x - dx) mod w).
inline Image circular_shift(const Image& img, int dy, int dx) {
  Image out(img.height(), img.width(), img.channels());
  const int h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = ((y - dy) % h + h) % h;
      const int sx = ((x - dx) % w + w) % w;
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

inline Image clamped(const Image& img, double lo = 0.0, double hi = 1.0) {
  Image out = img;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

struct ChannelMoments {
  std::vector<double> mean;
  std::vector<double> variance;
};

inline ChannelMoments channel_moments(const Image& img) {
  ChannelMoments m;
  const int ch = img.channels();
  m.mean.assign(ch, 0.0);
  m.variance.assign(ch, 0.0);
  const double n = double(img.pixels());
  for (std::size_t i = 0; i < img.size(); ++i) m.mean[i % ch] += img.values()[i];
  for (auto& v : m.mean) v /= n;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = img.values()[i] - m.mean[i % ch];
    m.variance[i % ch] += d * d;
  }
  for (auto& v : m.variance) v /= n;
  return m;
}

}  // namespace texsynth
