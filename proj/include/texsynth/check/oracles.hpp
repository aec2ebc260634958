#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "texsynth/image.hpp"
#include "texsynth/net.hpp"
#include "texsynth/tensor.hpp"

// Slow, direct reference computations used to validate the fast paths. None
// of these share code with the implementations they check.

namespace texsynth::check {

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

inline Image random_image(int h, int w, int c, std::uint64_t seed) {
  return Image(h, w, c, uniform_values(std::size_t(h) * w * c, seed));
}

inline Tensor random_tensor(int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(c, h, w);
  t.data = uniform_values(t.size(), seed, lo, hi);
  return t;
}

/// Standard normal draws for test inputs.
class GaussianNoise {
 public:
  explicit GaussianNoise(std::uint64_t seed) : gen_(seed) {}
  double operator()() { return dist_(gen_); }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> dist_;
};

/// Central differences of f at x with a relative step.
inline std::vector<double> finite_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                      std::vector<double> x, double rel_step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    const double h = rel_step * std::max(1.0, std::abs(orig));
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-300) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// O(N^2) circular autocorrelation C(k,l) = (1/N^2) sum_ij f(i,j) f((i+k) mod h, (j+l) mod w).
inline std::vector<double> brute_force_autocorrelation(std::span<const double> plane, int h, int w) {
  const double n = double(h) * w;
  std::vector<double> c(plane.size(), 0.0);
  for (int k = 0; k < h; ++k)
    for (int l = 0; l < w; ++l) {
      double s = 0.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) s += plane[std::size_t(i) * w + j] * plane[std::size_t((i + k) % h) * w + (j + l) % w];
      c[std::size_t(k) * w + l] = s / (n * n);
    }
  return c;
}

/// Direct O(N^2) 2-D DFT; sign -1 forward, +1 inverse (unnormalized either way).
inline std::vector<std::complex<double>> naive_dft_2d(std::span<const std::complex<double>> x, int h, int w,
                                                      int sign = -1) {
  std::vector<std::complex<double>> out(x.size());
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      std::complex<double> s(0.0, 0.0);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double a = sign * 2.0 * std::numbers::pi * (double(u) * i / h + double(v) * j / w);
          s += x[std::size_t(i) * w + j] * std::complex<double>(std::cos(a), std::sin(a));
        }
      out[std::size_t(u) * w + v] = s;
    }
  return out;
}

/// Double-loop Gram matrix (1/N^2) sum_i f_p(i) f_q(i).
inline std::vector<double> brute_force_gram(const Tensor& f) {
  const double n = double(f.height) * f.width;
  std::vector<double> g(std::size_t(f.channels) * f.channels, 0.0);
  for (int p = 0; p < f.channels; ++p)
    for (int q = 0; q < f.channels; ++q)
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) g[std::size_t(p) * f.channels + q] += f.at(p, y, x) * f.at(q, y, x);
  for (double& v : g) v /= n * n;
  return g;
}

/// Per-pixel bilinear evaluation with half-pixel-centered sampling.
inline double bilinear_at(const Image& img, int c, double sy, double sx) {
  sy = std::clamp(sy, 0.0, double(img.height() - 1));
  sx = std::clamp(sx, 0.0, double(img.width() - 1));
  const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
  const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
  const double fy = sy - y0, fx = sx - x0;
  return img.at(y0, x0, c) * (1 - fy) * (1 - fx) + img.at(y0, x1, c) * (1 - fy) * fx +
         img.at(y1, x0, c) * fy * (1 - fx) + img.at(y1, x1, c) * fy * fx;
}

/// Smallest |input| of any ReLU and smallest gap between the two largest
/// entries of any max-pool window with a positive maximum. Finite differences
/// and linearizations are exact only when this margin exceeds the step.
inline double kink_margin(const net::Network& network, const Image& img) {
  const auto& layers = network.architecture().layers();
  const net::Trace t = network.run(to_planar(img), int(layers.size()) - 1);
  double margin = 1e300;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Tensor& in = i == 0 ? t.input : t.outputs[i - 1];
    if (layers[i].kind == net::LayerKind::Relu) {
      for (double v : in.data) margin = std::min(margin, std::abs(v));
    } else if (layers[i].kind == net::LayerKind::Pool2 && layers[i].pool == net::PoolMode::Max) {
      for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y + 1 < in.height; y += 2)
          for (int x = 0; x + 1 < in.width; x += 2) {
            double v[4] = {in.at(c, y, x), in.at(c, y, x + 1), in.at(c, y + 1, x), in.at(c, y + 1, x + 1)};
            std::sort(v, v + 4);
            // Ties among rectified zeros are locally flat and harmless.
            if (v[3] > 0.0) margin = std::min(margin, v[3] - v[2]);
          }
    }
  }
  return margin;
}

/// Colour checkerboard with square cells of side `cell`, periodic when the
/// image side is a multiple of 2 * cell.
inline Image checkerboard(int h, int w, int cell) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool on = ((y / cell) + (x / cell)) % 2 == 0;
      img.at(y, x, 0) = on ? 0.9 : 0.1;
      img.at(y, x, 1) = on ? 0.7 : 0.2;
      img.at(y, x, 2) = on ? 0.3 : 0.6;
    }
  return img;
}

/// Smooth periodic colour texture: a few random plane waves per channel plus
/// weak noise, values kept in [0, 1].
inline Image wave_texture(int h, int w, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> freq(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img(h, w, 3, 0.5);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      const int fy = freq(gen), fx = freq(gen);
      const double phase = 2.0 * std::numbers::pi * unit(gen), amp = 0.08 + 0.05 * unit(gen);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          img.at(y, x, c) += amp * std::sin(2.0 * std::numbers::pi * (double(fy) * y / h + double(fx) * x / w) + phase);
    }
  for (double& v : img.values()) v = std::clamp(v + 0.04 * (unit(gen) - 0.5), 0.0, 1.0);
  return img;
}

/// Three conv layers with ReLU and average pooling, small enough for
/// finite-difference sweeps on 8x8 inputs.
inline net::Architecture three_layer_architecture(int input_channels = 3) {
  using namespace net;
  return Architecture("three-layer", input_channels,
                      {conv("conv1", 4), relu("relu1"), pool("pool1"), conv("conv2", 6), relu("relu2"),
                       pool("pool2"), conv("conv3", 8), relu("relu3")});
}

inline std::vector<std::string> three_layer_stat_layers() { return {"conv1", "pool1", "pool2", "relu3"}; }

/// First image in the seeded sequence whose kink margin exceeds `margin`.
inline Image image_away_from_kinks(const net::Network& network, int h, int w, int c, std::uint64_t seed,
                                   double margin) {
  for (;; ++seed) {
    Image img = random_image(h, w, c, seed);
    if (kink_margin(network, img) > margin) return img;
  }
}

}  // namespace texsynth::check
