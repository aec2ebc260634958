#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"

namespace texsynth {

/// Planar activation tensor: channels x height x width, each channel a
/// contiguous row-major plane.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(std::size_t(c) * h * w, fill) {}

  std::size_t plane_size() const noexcept { return std::size_t(height) * width; }
  std::size_t size() const noexcept { return data.size(); }

  std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }

  double& at(int c, int y, int x) { return data[c * plane_size() + std::size_t(y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[c * plane_size() + std::size_t(y) * width + x];
  }

  bool same_shape(const Tensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Layer name -> activation. N_l is height * width of each entry.
using FeatureStack = std::map<std::string, Tensor>;

inline Tensor to_planar(const Image& img) {
  Tensor t(img.channels(), img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

inline Image to_image(const Tensor& t) {
  Image img(t.height, t.width, t.channels);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < t.channels; ++c) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace texsynth
