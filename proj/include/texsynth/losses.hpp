#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/fft.hpp"
#include "texsynth/image.hpp"
#include "texsynth/net.hpp"
#include "texsynth/tensor.hpp"

// Statistical losses on an image and its network features.
//
// DFT convention throughout: unnormalized forward transform, 1/N inverse.
// N_l is the number of spatial positions of layer l, N the number of pixels.

namespace texsynth::losses {

using fft::cplx;
using LayerWeights = std::map<std::string, double>;

/// Symmetric m x m matrix, row-major.
struct Gram {
  int m = 0;
  std::vector<double> v;

  double operator()(int p, int q) const { return v[std::size_t(p) * m + q]; }
};

/// G_pq = <f_p, f_q> / N_l^2, per layer.
inline std::map<std::string, Gram> gram_of(const FeatureStack& features) {
  std::map<std::string, Gram> out;
  for (const auto& [name, f] : features) {
    const double n = double(f.plane_size());
    Gram g{f.channels, std::vector<double>(std::size_t(f.channels) * f.channels)};
    for (int p = 0; p < f.channels; ++p)
      for (int q = p; q < f.channels; ++q) {
        const double val = dot(f.plane(p), f.plane(q)) / (n * n);
        g.v[std::size_t(p) * g.m + q] = val;
        g.v[std::size_t(q) * g.m + p] = val;
      }
    out.emplace(name, std::move(g));
  }
  return out;
}

struct GramTarget {
  std::map<std::string, Gram> gram;
  LayerWeights weight;
};

inline GramTarget make_gram_target(const FeatureStack& exemplar_features, const LayerWeights& weights) {
  GramTarget t;
  for (const auto& [name, w] : weights) {
    if (!exemplar_features.count(name)) fail(ErrorCode::UnknownLayer, "no exemplar features for layer " + name);
    if (!(w >= 0.0)) fail(ErrorCode::InvalidArgument, "layer weights must be >= 0");
  }
  t.gram = gram_of(exemplar_features);
  for (auto it = t.gram.begin(); it != t.gram.end();) {
    it = weights.count(it->first) ? std::next(it) : t.gram.erase(it);
  }
  t.weight = weights;
  return t;
}

/// A loss term on features: its value and d value / d features.
struct FeatureTerm {
  double value = 0.0;
  FeatureStack cotangents;
};

namespace detail {

template <typename Target>
void check_layers(const FeatureStack& features, const std::map<std::string, Target>& target) {
  if (features.size() != target.size()) fail(ErrorCode::UnknownLayer, "feature layers do not match loss target");
  for (const auto& [name, _] : target)
    if (!features.count(name)) fail(ErrorCode::UnknownLayer, "missing features for layer " + name);
}

}  // namespace detail

/// sum_l w_l ||G_l - target_l||_F^2 with d/df_r(i) = (4 w_l / N_l^2) sum_q D_rq f_q(i).
inline FeatureTerm gram_loss(const FeatureStack& features, const GramTarget& target) {
  detail::check_layers(features, target.gram);
  FeatureTerm out;
  const auto current = gram_of(features);
  for (const auto& [name, tg] : target.gram) {
    const Tensor& f = features.at(name);
    const Gram& g = current.at(name);
    if (g.m != tg.m) fail(ErrorCode::DimensionMismatch, "channel count mismatch at layer " + name);
    const double w = target.weight.at(name);
    std::vector<double> diff(g.v.size());
    double sq = 0.0;
    for (std::size_t k = 0; k < diff.size(); ++k) {
      diff[k] = g.v[k] - tg.v[k];
      sq += diff[k] * diff[k];
    }
    out.value += w * sq;
    const double n = double(f.plane_size());
    const double scale = 4.0 * w / (n * n);
    Tensor cot(f.channels, f.height, f.width);
    for (int r = 0; r < f.channels; ++r) {
      auto dst = cot.plane(r);
      for (int q = 0; q < f.channels; ++q) {
        const double c = scale * diff[std::size_t(r) * g.m + q];
        if (c == 0.0) continue;
        const auto src = f.plane(q);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
      }
    }
    out.cotangents.emplace(name, std::move(cot));
  }
  return out;
}

// --- spectrum -----------------------------------------------------------------

struct SpectrumTarget {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::vector<cplx>> dft;  // per channel, row-major h x w
  std::vector<double> joint_modulus;   // sqrt(sum_c |F(I_c)|^2) per frequency
};

inline std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> plane(img.pixels());
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.values()[i * img.channels() + c];
  return plane;
}

inline SpectrumTarget make_spectrum_target(const Image& exemplar) {
  SpectrumTarget t{exemplar.height(), exemplar.width(), exemplar.channels(), {}, {}};
  for (int c = 0; c < t.channels; ++c)
    t.dft.push_back(fft::forward_real_2d(channel_plane(exemplar, c), t.height, t.width));
  t.joint_modulus.assign(exemplar.pixels(), 0.0);
  for (const auto& ch : t.dft)
    for (std::size_t k = 0; k < ch.size(); ++k) t.joint_modulus[k] += std::norm(ch[k]);
  for (double& v : t.joint_modulus) v = std::sqrt(v);
  return t;
}

/// Frequencies whose cross-channel product modulus falls below this fraction
/// of the mean modulus keep the exemplar's phase unchanged.
inline constexpr double kDegenerateFrequency = 1e-12;

/// Per-frequency unit phase factors (F(x) . F(I)) / |F(x) . F(I)|, the dot
/// product running over channels with the exemplar conjugated.
inline std::vector<cplx> projection_phase(const Image& img, const SpectrumTarget& target) {
  if (img.height() != target.height || img.width() != target.width || img.channels() != target.channels) {
    fail(ErrorCode::DimensionMismatch, "image and spectrum target dimensions differ");
  }
  const std::size_t n = img.pixels();
  std::vector<cplx> prod(n, cplx(0.0, 0.0));
  for (int c = 0; c < target.channels; ++c) {
    const auto fx = fft::forward_real_2d(channel_plane(img, c), img.height(), img.width());
    for (std::size_t k = 0; k < n; ++k) prod[k] += fx[k] * std::conj(target.dft[c][k]);
  }
  double mean = 0.0;
  for (const auto& p : prod) mean += std::abs(p);
  mean /= double(n);
  const double threshold = kDegenerateFrequency * mean;
  for (auto& p : prod) {
    const double mod = std::abs(p);
    p = mod <= threshold ? cplx(1.0, 0.0) : p / mod;
  }
  return prod;
}

/// Nearest image (Euclidean) whose spectrum is a pure per-frequency phase
/// rotation of the exemplar's joint color spectrum.
inline Image spectrum_project(const Image& img, const SpectrumTarget& target) {
  const auto phase = projection_phase(img, target);
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < target.channels; ++c) {
    std::vector<cplx> spec(phase.size());
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = phase[k] * target.dft[c][k];
    const auto plane = fft::inverse_real_2d(std::move(spec), img.height(), img.width());
    for (std::size_t i = 0; i < plane.size(); ++i) out.values()[i * img.channels() + c] = plane[i];
  }
  return out;
}

struct ImageTerm {
  double value = 0.0;
  Image gradient;
};

/// (1/2N) ||x - P(x)||^2, gradient (x - P(x)) / N with P held fixed.
inline ImageTerm spectrum_loss(const Image& img, const SpectrumTarget& target) {
  const Image proj = spectrum_project(img, target);
  const double n = double(img.pixels());
  ImageTerm out{0.0, Image(img.height(), img.width(), img.channels())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double r = img.values()[i] - proj.values()[i];
    out.value += r * r;
    out.gradient.values()[i] = r / n;
  }
  out.value /= 2.0 * n;
  return out;
}

// --- autocorrelation ------------------------------------------------------------

/// A_p = |F(f_p)|^2 / N_l^2 per channel, i.e. the DFT of the circular
/// autocorrelation (1/N_l^2) sum_i f(i) f(i + k).
inline FeatureStack autocorr_of(const FeatureStack& features) {
  FeatureStack out;
  for (const auto& [name, f] : features) {
    const double n = double(f.plane_size());
    Tensor a(f.channels, f.height, f.width);
    for (int p = 0; p < f.channels; ++p) {
      const auto spec = fft::forward_real_2d(f.plane(p), f.height, f.width);
      auto dst = a.plane(p);
      for (std::size_t k = 0; k < spec.size(); ++k) dst[k] = std::norm(spec[k]) / (n * n);
    }
    out.emplace(name, std::move(a));
  }
  return out;
}

struct AutocorrTarget {
  FeatureStack spectra;
  LayerWeights weight;
};

inline AutocorrTarget make_autocorr_target(const FeatureStack& exemplar_features, const LayerWeights& weights) {
  FeatureStack chosen;
  for (const auto& [name, w] : weights) {
    auto it = exemplar_features.find(name);
    if (it == exemplar_features.end()) fail(ErrorCode::UnknownLayer, "no exemplar features for layer " + name);
    if (!(w >= 0.0)) fail(ErrorCode::InvalidArgument, "layer weights must be >= 0");
    chosen.emplace(name, it->second);
  }
  return {autocorr_of(chosen), weights};
}

/// sum_l w_l ||A_l - target_l||^2 with d/df_p = (2/N_l) Re(IDFT(2 w_l (A_p - T_p) F(f_p))).
inline FeatureTerm autocorr_loss(const FeatureStack& features, const AutocorrTarget& target) {
  detail::check_layers(features, target.spectra);
  FeatureTerm out;
  for (const auto& [name, ta] : target.spectra) {
    const Tensor& f = features.at(name);
    if (!f.same_shape(ta)) fail(ErrorCode::DimensionMismatch, "feature shape mismatch at layer " + name);
    const double w = target.weight.at(name);
    const double n = double(f.plane_size());
    Tensor cot(f.channels, f.height, f.width);
    for (int p = 0; p < f.channels; ++p) {
      auto spec = fft::forward_real_2d(f.plane(p), f.height, f.width);
      const auto tp = ta.plane(p);
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const double d = std::norm(spec[k]) / (n * n) - tp[k];
        out.value += w * d * d;
        spec[k] *= 2.0 * w * d;
      }
      const auto back = fft::inverse_real_2d(std::move(spec), f.height, f.width);
      auto dst = cot.plane(p);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 2.0 / n * back[i];
    }
    out.cotangents.emplace(name, std::move(cot));
  }
  return out;
}

// --- total --------------------------------------------------------------------

struct Terms {
  bool gram = false;
  bool spectrum = false;
  bool autocorr = false;

  bool any() const noexcept { return gram || spectrum || autocorr; }
  friend bool operator==(const Terms&, const Terms&) = default;
};

struct Targets {
  std::optional<GramTarget> gram;
  std::optional<SpectrumTarget> spectrum;
  std::optional<AutocorrTarget> autocorr;
};

/// Precomputes every target the active terms need from the exemplar.
inline Targets make_targets(const Image& exemplar, const net::Network& network, const Terms& terms,
                            const LayerWeights& weights) {
  if (!terms.any()) fail(ErrorCode::InvalidArgument, "at least one loss term must be active");
  Targets t;
  if (terms.gram || terms.autocorr) {
    std::set<std::string> layers;
    for (const auto& [name, _] : weights) layers.insert(name);
    const auto features = network.forward(exemplar, layers);
    if (terms.gram) t.gram = make_gram_target(features, weights);
    if (terms.autocorr) t.autocorr = make_autocorr_target(features, weights);
  }
  if (terms.spectrum) t.spectrum = make_spectrum_target(exemplar);
  return t;
}

struct LossReport {
  double total = 0.0;
  double gram = 0.0;
  double spectrum = 0.0;  // unweighted L_spe; total carries beta * spectrum
  double autocorr = 0.0;
  Image gradient;
};

/// total = [gram] L_gram + [spectrum] beta L_spe + [autocorr] L_autocorr.
inline LossReport total_loss(const Image& img, const Terms& terms, double beta, const Targets& targets,
                             const net::Network& network) {
  if (!terms.any()) fail(ErrorCode::InvalidArgument, "at least one loss term must be active");
  LossReport r;
  r.gradient = Image(img.height(), img.width(), img.channels());
  if (terms.gram || terms.autocorr) {
    if ((terms.gram && !targets.gram) || (terms.autocorr && !targets.autocorr)) {
      fail(ErrorCode::InvalidArgument, "missing target for an active feature term");
    }
    std::set<std::string> layers;
    if (terms.gram)
      for (const auto& [name, _] : targets.gram->gram) layers.insert(name);
    if (terms.autocorr)
      for (const auto& [name, _] : targets.autocorr->spectra) layers.insert(name);
    const net::Trace trace = network.run(to_planar(img), network.deepest(layers));
    FeatureStack cot;
    auto accumulate = [&cot](FeatureStack&& part) {
      for (auto& [name, t] : part) {
        auto [it, inserted] = cot.try_emplace(name, std::move(t));
        if (!inserted)
          for (std::size_t k = 0; k < t.data.size(); ++k) it->second.data[k] += t.data[k];
      }
    };
    if (terms.gram) {
      std::set<std::string> names;
      for (const auto& [name, _] : targets.gram->gram) names.insert(name);
      auto term = gram_loss(network.select(trace, names), *targets.gram);
      r.gram = term.value;
      accumulate(std::move(term.cotangents));
    }
    if (terms.autocorr) {
      std::set<std::string> names;
      for (const auto& [name, _] : targets.autocorr->spectra) names.insert(name);
      auto term = autocorr_loss(network.select(trace, names), *targets.autocorr);
      r.autocorr = term.value;
      accumulate(std::move(term.cotangents));
    }
    r.gradient = to_image(network.backward(trace, cot));
  }
  if (terms.spectrum) {
    if (!targets.spectrum) fail(ErrorCode::InvalidArgument, "missing spectrum target");
    const auto term = spectrum_loss(img, *targets.spectrum);
    r.spectrum = term.value;
    for (std::size_t i = 0; i < img.size(); ++i) r.gradient.values()[i] += beta * term.gradient.values()[i];
  }
  r.total = (terms.gram ? r.gram : 0.0) + (terms.spectrum ? beta * r.spectrum : 0.0) +
            (terms.autocorr ? r.autocorr : 0.0);
  return r;
}

}  // namespace texsynth::losses
