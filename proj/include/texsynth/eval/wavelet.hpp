#pragma once

#include <array>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"

namespace texsynth::eval {

/// Single-channel array of coefficients.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> v;  // row-major

  Plane() = default;
  Plane(int h, int w, double fill = 0.0) : height(h), width(w), v(std::size_t(h) * w, fill) {}

  double& operator()(int y, int x) { return v[std::size_t(y) * width + x]; }
  double operator()(int y, int x) const { return v[std::size_t(y) * width + x]; }
};

inline Plane plane_of(const Image& gray) {
  if (gray.channels() != 1) fail(ErrorCode::InvalidArgument, "expected a single-channel image");
  Plane p(gray.height(), gray.width());
  p.v = gray.values();
  return p;
}

/// Orthonormal Daubechies scaling filter with four vanishing moments (8 taps).
inline constexpr std::array<double, 8> kDb4Lowpass = {
    -0.010597401785069033094, 0.032883011666885202956, 0.030841381835560761244, -0.18703481171909308712,
    -0.02798376941685984938,  0.63088076792985891123,  0.71484657055291564412,  0.23037781330889649885};

/// Quadrature mirror of the scaling filter: g[k] = (-1)^k h[L-1-k].
inline std::array<double, 8> db4_highpass() {
  std::array<double, 8> g{};
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = (k % 2 ? -1.0 : 1.0) * kDb4Lowpass[g.size() - 1 - k];
  return g;
}

/// One periodic analysis step along a line of even length n:
/// lo[i] = sum_k h[k] x[(2i + k) mod n], hi likewise with g.
inline void analyze_line(const double* x, std::size_t stride, int n, double* lo, double* hi, std::size_t out_stride) {
  static const auto g = db4_highpass();
  for (int i = 0; i < n / 2; ++i) {
    // The highpass taps sum to zero, so differences against the first sample
    // give the same value and make constant input map to exactly zero.
    const double ref = x[std::size_t(2 * i % n) * stride];
    double a = 0.0, d = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double v = x[std::size_t((2 * i + k) % n) * stride];
      a += kDb4Lowpass[k] * v;
      d += g[k] * (v - ref);
    }
    lo[std::size_t(i) * out_stride] = a;
    hi[std::size_t(i) * out_stride] = d;
  }
}

/// Adjoint (and inverse) of analyze_line.
inline void synthesize_line(const double* lo, const double* hi, std::size_t in_stride, int n, double* x,
                            std::size_t stride) {
  static const auto g = db4_highpass();
  for (int m = 0; m < n; ++m) x[std::size_t(m) * stride] = 0.0;
  for (int i = 0; i < n / 2; ++i) {
    const double a = lo[std::size_t(i) * in_stride], d = hi[std::size_t(i) * in_stride];
    for (int k = 0; k < 8; ++k) x[std::size_t((2 * i + k) % n) * stride] += kDb4Lowpass[k] * a + g[k] * d;
  }
}

/// Detail subbands of one level. `lh` is lowpass across columns and highpass
/// down rows (horizontal edges), `hl` the reverse, `hh` both highpass.
struct DetailBands {
  Plane lh, hl, hh;
};

struct Wavelet2D {
  std::vector<DetailBands> details;  // finest level first
  Plane approx;
};

inline void check_dwt_size(int h, int w, int scales) {
  if (scales < 1) fail(ErrorCode::InvalidArgument, "wavelet scale count must be >= 1");
  if (scales > 30 || h % (1 << scales) != 0 || w % (1 << scales) != 0)
    fail(ErrorCode::InvalidArgument, "image dimensions must be multiples of 2^scales for the wavelet transform");
}

inline Wavelet2D dwt2(const Plane& img, int scales) {
  check_dwt_size(img.height, img.width, scales);
  Wavelet2D out;
  Plane cur = img;
  for (int s = 0; s < scales; ++s) {
    const int h = cur.height, w = cur.width, h2 = h / 2, w2 = w / 2;
    // Rows: [L | H] halves side by side.
    Plane rows(h, w);
    for (int y = 0; y < h; ++y) analyze_line(&cur(y, 0), 1, w, &rows(y, 0), &rows(y, w2), 1);
    Plane cols(h, w);
    for (int x = 0; x < w; ++x) analyze_line(&rows(0, x), std::size_t(w), h, &cols(0, x), &cols(h2, x), std::size_t(w));
    DetailBands d{Plane(h2, w2), Plane(h2, w2), Plane(h2, w2)};
    Plane next(h2, w2);
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) {
        next(y, x) = cols(y, x);
        d.hl(y, x) = cols(y, x + w2);
        d.lh(y, x) = cols(y + h2, x);
        d.hh(y, x) = cols(y + h2, x + w2);
      }
    out.details.push_back(std::move(d));
    cur = std::move(next);
  }
  out.approx = std::move(cur);
  return out;
}

inline Plane idwt2(const Wavelet2D& coeffs) {
  Plane cur = coeffs.approx;
  for (auto it = coeffs.details.rbegin(); it != coeffs.details.rend(); ++it) {
    const int h2 = cur.height, w2 = cur.width, h = 2 * h2, w = 2 * w2;
    if (it->hh.height != h2 || it->hh.width != w2 || it->lh.height != h2 || it->hl.width != w2)
      fail(ErrorCode::DimensionMismatch, "wavelet subband shapes are inconsistent");
    Plane cols(h, w);
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) {
        cols(y, x) = cur(y, x);
        cols(y, x + w2) = it->hl(y, x);
        cols(y + h2, x) = it->lh(y, x);
        cols(y + h2, x + w2) = it->hh(y, x);
      }
    Plane rows(h, w);
    for (int x = 0; x < w; ++x)
      synthesize_line(&cols(0, x), &cols(h2, x), std::size_t(w), h, &rows(0, x), std::size_t(w));
    Plane next(h, w);
    for (int y = 0; y < h; ++y) synthesize_line(&rows(y, 0), &rows(y, w2), 1, w, &next(y, 0), 1);
    cur = std::move(next);
  }
  return cur;
}

}  // namespace texsynth::eval
