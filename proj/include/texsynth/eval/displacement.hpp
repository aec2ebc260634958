#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"
#include "texsynth/parallel.hpp"
#include "texsynth/raster_io.hpp"

namespace texsynth::eval {

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Nearest-neighbour patch offsets for every synthesized pixel whose patch
/// lies fully inside the image. Entry (y, x) belongs to synthesized pixel
/// (y + radius, x + radius); the offset points from that pixel to the centre
/// of its best-matching exemplar patch.
struct DisplacementMap {
  int height = 0;
  int width = 0;
  int patch = 0;
  std::vector<Offset> offsets;  // row-major

  const Offset& at(int y, int x) const { return offsets[std::size_t(y) * width + x]; }
  Offset& at(int y, int x) { return offsets[std::size_t(y) * width + x]; }
  bool empty() const noexcept { return offsets.empty(); }
};

inline constexpr int kDefaultPatch = 5;

inline void check_patch_geometry(const Image& synth, const Image& exemplar, int patch) {
  if (patch < 3 || patch % 2 == 0) fail(ErrorCode::InvalidArgument, "patch size must be odd and >= 3");
  if (synth.channels() != exemplar.channels()) fail(ErrorCode::DimensionMismatch, "channel counts differ");
  if (synth.height() < patch || synth.width() < patch || exemplar.height() < patch || exemplar.width() < patch)
    fail(ErrorCode::InvalidArgument, "image smaller than the patch");
}

/// Exhaustive SSD search. Ties go to the smallest (dy, dx) in lexicographic
/// order, which is the first candidate met in a row-major scan.
inline DisplacementMap displacement_map(const Image& synth, const Image& exemplar, int patch = kDefaultPatch) {
  check_patch_geometry(synth, exemplar, patch);
  const int r = patch / 2, c = synth.channels();
  DisplacementMap map;
  map.patch = patch;
  map.height = synth.height() - 2 * r;
  map.width = synth.width() - 2 * r;
  map.offsets.resize(std::size_t(map.height) * map.width);
  const int eh = exemplar.height() - 2 * r, ew = exemplar.width() - 2 * r;
  const std::size_t sw = std::size_t(synth.width()) * c, xw = std::size_t(exemplar.width()) * c;
  const double* s = synth.values().data();
  const double* e = exemplar.values().data();

  parallel_for(map.height, [&](int y) {
    for (int x = 0; x < map.width; ++x) {
      double best = std::numeric_limits<double>::infinity();
      Offset arg;
      for (int ey = 0; ey < eh; ++ey)
        for (int ex = 0; ex < ew; ++ex) {
          double ssd = 0.0;
          for (int py = 0; py < patch && ssd < best; ++py) {
            const double* a = s + (y + py) * sw + std::size_t(x) * c;
            const double* b = e + (ey + py) * xw + std::size_t(ex) * c;
            for (int k = 0; k < patch * c; ++k) ssd += (a[k] - b[k]) * (a[k] - b[k]);
          }
          if (ssd < best) {
            best = ssd;
            arg = {ex - x, ey - y};
          }
        }
      map.at(y, x) = arg;
    }
  });
  return map;
}

/// 1 - n/N over ordered 4-neighbour pairs, n counting pairs with identical
/// offsets. A map without any neighbour pair scores 1.
inline double ds_score(const DisplacementMap& map) {
  if (map.empty()) fail(ErrorCode::InvalidArgument, "displacement map is empty");
  std::uint64_t same = 0, total = 0;
  constexpr int dirs[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      for (const auto& d : dirs) {
        const int ny = y + d[0], nx = x + d[1];
        if (ny < 0 || nx < 0 || ny >= map.height || nx >= map.width) continue;
        ++total;
        if (map.at(y, x) == map.at(ny, nx)) ++same;
      }
  return total == 0 ? 1.0 : 1.0 - double(same) / double(total);
}

/// Colour rendering: dx drives red, dy drives blue, each mapped affinely from
/// its attainable range onto [0, 1].
inline Image render_displacement(const DisplacementMap& map, int exemplar_h, int exemplar_w) {
  const int r = map.patch / 2;
  auto unit = [](int v, int lo, int hi) { return hi == lo ? 0.5 : double(v - lo) / double(hi - lo); };
  // Synthesized centres span [r, r + map.width); exemplar centres [r, exemplar_w - r).
  const int dx_lo = r - (r + map.width - 1), dx_hi = (exemplar_w - r - 1) - r;
  const int dy_lo = r - (r + map.height - 1), dy_hi = (exemplar_h - r - 1) - r;
  Image img(map.height, map.width, 3, 0.0);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      img.at(y, x, 0) = unit(map.at(y, x).dx, dx_lo, dx_hi);
      img.at(y, x, 2) = unit(map.at(y, x).dy, dy_lo, dy_hi);
    }
  return img;
}

inline std::vector<std::uint8_t> displacement_ppm(const DisplacementMap& map, int exemplar_h, int exemplar_w) {
  return encode_netpbm(render_displacement(map, exemplar_h, exemplar_w), BitDepth::k8);
}

}  // namespace texsynth::eval
