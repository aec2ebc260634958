#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "texsynth/error.hpp"

// Discrete Fourier transforms of arbitrary length. Powers of two use an
// iterative radix-2 kernel; every other length goes through Bluestein's chirp-z
// reformulation on a padded power-of-two grid.
//
// Convention: the forward transform is unnormalized, the inverse carries 1/N.

namespace texsynth::fft {

using cplx = std::complex<double>;

enum class Direction { Forward, Inverse };

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

class Radix2 {
 public:
  explicit Radix2(std::size_t n) : n_(n), rev_(n), twiddle_(n / 2) {
    unsigned bits = 0;
    while ((std::size_t(1) << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (unsigned b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      rev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * double(k) / double(n);
      twiddle_[k] = cplx(std::cos(a), std::sin(a));
    }
  }

  // Unnormalized forward transform, in place.
  void forward(cplx* x) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2, step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const cplx t = x[start + j + half] * twiddle_[j * step];
          const cplx u = x[start + j];
          x[start + j] = u + t;
          x[start + j + half] = u - t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<cplx> twiddle_;
};

class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n) {
    if (is_pow2(n)) {
      radix2_ = std::make_unique<Radix2>(n);
      return;
    }
    m_ = next_pow2(2 * n - 1);
    radix2_ = std::make_unique<Radix2>(m_);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      // k^2 mod 2n keeps the angle argument small for large k.
      const std::size_t k2 = (k * k) % (2 * n);
      const double a = -std::numbers::pi * double(k2) / double(n);
      chirp_[k] = cplx(std::cos(a), std::sin(a));
    }
    kernel_.assign(m_, cplx(0.0, 0.0));
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      kernel_[k] = std::conj(chirp_[k]);
      kernel_[m_ - k] = std::conj(chirp_[k]);
    }
    radix2_->forward(kernel_.data());
  }

  std::size_t size() const noexcept { return n_; }

  void forward(cplx* x, std::vector<cplx>& scratch) const {
    if (!chirp_.size()) {
      radix2_->forward(x);
      return;
    }
    scratch.assign(m_, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n_; ++k) scratch[k] = x[k] * chirp_[k];
    radix2_->forward(scratch.data());
    for (std::size_t k = 0; k < m_; ++k) scratch[k] = std::conj(scratch[k] * kernel_[k]);
    radix2_->forward(scratch.data());
    const double inv_m = 1.0 / double(m_);
    for (std::size_t k = 0; k < n_; ++k) x[k] = std::conj(scratch[k]) * inv_m * chirp_[k];
  }

 private:
  std::size_t n_;
  std::size_t m_ = 0;
  std::unique_ptr<Radix2> radix2_;
  std::vector<cplx> chirp_;
  std::vector<cplx> kernel_;
};

// Plans are cached per thread, so no synchronization is needed.
inline const Plan& plan_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<Plan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

inline void transform_1d(cplx* x, std::size_t n, Direction dir, std::vector<cplx>& scratch) {
  if (n == 1) return;
  const Plan& plan = plan_for(n);
  if (dir == Direction::Forward) {
    plan.forward(x, scratch);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) x[i] = std::conj(x[i]);
  plan.forward(x, scratch);
  const double inv = 1.0 / double(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::conj(x[i]) * inv;
}

}  // namespace detail

inline void transform(std::span<cplx> x, Direction dir) {
  std::vector<cplx> scratch;
  detail::transform_1d(x.data(), x.size(), dir, scratch);
}

/// In-place 2-D transform of a row-major h x w grid.
inline void transform_2d(std::span<cplx> grid, int h, int w, Direction dir) {
  if (grid.size() != std::size_t(h) * std::size_t(w)) {
    fail(ErrorCode::DimensionMismatch, "fft grid size does not match h*w");
  }
  std::vector<cplx> scratch;
  for (int y = 0; y < h; ++y) detail::transform_1d(grid.data() + std::size_t(y) * w, w, dir, scratch);
  if (h == 1) return;
  std::vector<cplx> column(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) column[y] = grid[std::size_t(y) * w + x];
    detail::transform_1d(column.data(), h, dir, scratch);
    for (int y = 0; y < h; ++y) grid[std::size_t(y) * w + x] = column[y];
  }
}

inline std::vector<cplx> forward_real_2d(std::span<const double> plane, int h, int w) {
  std::vector<cplx> grid(plane.begin(), plane.end());
  transform_2d(grid, h, w, Direction::Forward);
  return grid;
}

/// Inverse transform keeping the real part; the caller guarantees (near)
/// Hermitian symmetry of the input.
inline std::vector<double> inverse_real_2d(std::vector<cplx> spectrum, int h, int w) {
  transform_2d(spectrum, h, w, Direction::Inverse);
  std::vector<double> out(spectrum.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = spectrum[i].real();
  return out;
}

}  // namespace texsynth::fft
