#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "texsynth/eval/ggd.hpp"
#include "texsynth/eval/wavelet.hpp"
#include "texsynth/image.hpp"

namespace texsynth::eval {

inline constexpr int kDefaultWaveletScales = 8;
/// Logged in place of log(0) so that records stay numeric.
inline constexpr double kZeroKlLog = -1e9;

struct SubbandKl {
  int level = 0;  // 1 = finest
  std::string orientation;  // "lh", "hl" or "hh"
  double kl = 0.0;
};

struct KlwResult {
  std::vector<SubbandKl> subbands;  // subbands that entered the sum
  std::vector<SubbandKl> skipped;   // too few coefficients or degenerate
  double aggregate = 0.0;
  double log_score = kZeroKlLog;
};

/// Top-left crop to the largest multiple of 2^scales in each dimension.
inline Plane crop_for_scales(const Plane& p, int scales) {
  const int m = 1 << scales;
  const int h = p.height / m * m, w = p.width / m * m;
  if (h == 0 || w == 0) fail(ErrorCode::InvalidArgument, "image too small for the requested wavelet scales");
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = p(y, x);
  return out;
}

/// Sum over detail subbands of KL(GGD fit of a || GGD fit of b), computed on
/// the grayscale (channel mean) images.
inline KlwResult texture_distance_klw(const Image& a, const Image& b, int scales = kDefaultWaveletScales) {
  if (scales < 1 || scales > 30) fail(ErrorCode::InvalidArgument, "wavelet scale count must be in [1, 30]");
  const auto wa = dwt2(crop_for_scales(plane_of(to_grayscale(a)), scales), scales);
  const auto wb = dwt2(crop_for_scales(plane_of(to_grayscale(b)), scales), scales);
  KlwResult out;
  for (int s = 0; s < scales; ++s) {
    const DetailBands& da = wa.details[s];
    const DetailBands& db = wb.details[s];
    const std::pair<const Plane*, const Plane*> bands[3] = {{&da.lh, &db.lh}, {&da.hl, &db.hl}, {&da.hh, &db.hh}};
    const char* names[3] = {"lh", "hl", "hh"};
    for (int o = 0; o < 3; ++o) {
      SubbandKl entry{s + 1, names[o], 0.0};
      const auto& [pa, pb] = bands[o];
      if (pa->v.size() < kMinGgdSamples || pb->v.size() < kMinGgdSamples) {
        out.skipped.push_back(entry);
        continue;
      }
      try {
        entry.kl = kl_ggd(fit_ggd(pa->v), fit_ggd(pb->v));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateSample) throw;
        out.skipped.push_back(entry);
        continue;
      }
      out.aggregate += entry.kl;
      out.subbands.push_back(entry);
    }
  }
  out.log_score = out.aggregate > 0.0 ? std::log(out.aggregate) : kZeroKlLog;
  return out;
}

}  // namespace texsynth::eval
