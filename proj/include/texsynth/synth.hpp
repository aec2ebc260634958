#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"
#include "texsynth/lbfgs.hpp"
#include "texsynth/losses.hpp"
#include "texsynth/net.hpp"

namespace texsynth::synth {

inline constexpr double kDefaultBeta = 1e5;
inline constexpr double kDefaultLayerWeight = 1e9;
inline constexpr int kDefaultScales = 2;
inline constexpr int kDefaultIterations = 2000;

/// Which statistics are matched, and whether the coarse-to-fine
/// initialization is used. `scales` (K) only matters when multiscale is set.
struct MethodVariant {
  losses::Terms terms;
  bool multiscale = false;
  double beta = kDefaultBeta;
  int scales = kDefaultScales;

  int effective_scales() const noexcept { return multiscale ? scales : 0; }

  void validate() const {
    if (!terms.any()) fail(ErrorCode::InvalidArgument, "variant must use at least one statistic");
    if (!(beta >= 0.0) || !std::isfinite(beta)) fail(ErrorCode::InvalidArgument, "beta must be finite and >= 0");
    if (scales < 0) fail(ErrorCode::InvalidArgument, "K must be >= 0");
  }

  /// Canonical "+"-joined name, e.g. "gram+spectrum+msinit".
  std::string name() const {
    std::vector<std::string> parts;
    if (terms.gram) parts.push_back("gram");
    if (terms.spectrum) parts.push_back("spectrum");
    if (terms.autocorr) parts.push_back("autocorr");
    if (multiscale) parts.push_back("msinit");
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
    return out;
  }

  friend bool operator==(const MethodVariant&, const MethodVariant&) = default;
};

inline MethodVariant parse_variant(const std::string& text) {
  MethodVariant v;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, '+')) {
    std::transform(token.begin(), token.end(), token.begin(), [](unsigned char c) { return std::tolower(c); });
    if (token == "gram") {
      v.terms.gram = true;
    } else if (token == "spectrum") {
      v.terms.spectrum = true;
    } else if (token == "autocorr") {
      v.terms.autocorr = true;
    } else if (token == "msinit") {
      v.multiscale = true;
    } else {
      fail(ErrorCode::InvalidArgument, "unknown variant component '" + token + "' in '" + text + "'");
    }
  }
  v.validate();
  return v;
}

/// Uniform i.i.d. noise, affinely matched to the given per-channel mean and
/// variance when `match` is non-null. Deterministic in the seed.
inline Image white_noise(int h, int w, int c, std::uint64_t seed, const ChannelMoments* match = nullptr) {
  std::mt19937_64 gen(seed);
  Image img(h, w, c);
  for (double& v : img.values()) v = double(gen() >> 11) * 0x1.0p-53;
  if (!match) return img;
  if (int(match->mean.size()) != c) fail(ErrorCode::DimensionMismatch, "moment target channel count differs");
  const ChannelMoments own = channel_moments(img);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::size_t ch = i % std::size_t(c);
    const double gain = own.variance[ch] > 0.0 ? std::sqrt(match->variance[ch] / own.variance[ch]) : 0.0;
    img.values()[i] = match->mean[ch] + gain * (img.values()[i] - own.mean[ch]);
  }
  return img;
}

/// Everything besides the exemplar and the noise seed that shapes a run.
struct Settings {
  MethodVariant variant;
  losses::LayerWeights layer_weights;  // statistic layers and their weights
  optim::LbfgsConfig lbfgs;
};

inline losses::LayerWeights uniform_weights(const std::vector<std::string>& layers, double w = kDefaultLayerWeight) {
  losses::LayerWeights out;
  for (const auto& l : layers) out[l] = w;
  return out;
}

struct LossSample {
  int iteration = 0;
  double total = 0.0;
  double gram = 0.0;
  double spectrum = 0.0;
  double autocorr = 0.0;
};

struct ScaleResult {
  int level = 0;  // pyramid level, 0 = full resolution
  Image output;
  optim::OptTrace trace;
  std::vector<LossSample> curve;       // initial point, then every accepted step
  std::vector<std::string> layers;     // statistic layers used at this scale
  std::vector<std::string> dropped;    // layers whose maps would be below 2x2
};

/// Statistic layers whose feature maps are at least 2x2 for an h x w input.
inline losses::LayerWeights usable_layers(const net::Network& network, const losses::LayerWeights& weights, int h,
                                          int w, std::vector<std::string>* dropped = nullptr) {
  losses::LayerWeights out;
  for (const auto& [name, weight] : weights) {
    const auto [lh, lw] = network.architecture().output_dims(network.architecture().index_of(name), h, w);
    if (lh >= 2 && lw >= 2) {
      out[name] = weight;
    } else if (dropped) {
      dropped->push_back(name);
    }
  }
  return out;
}

inline ScaleResult synth_single_scale(const Image& exemplar, const Image& init, const Settings& setup,
                                      const net::Network& network, int level = 0) {
  setup.variant.validate();
  if (!init.same_shape(exemplar)) fail(ErrorCode::DimensionMismatch, "initialization must match exemplar dimensions");
  ScaleResult res;
  res.level = level;
  losses::LayerWeights weights;
  const bool uses_features = setup.variant.terms.gram || setup.variant.terms.autocorr;
  if (uses_features) {
    weights = usable_layers(network, setup.layer_weights, exemplar.height(), exemplar.width(), &res.dropped);
    if (weights.empty()) fail(ErrorCode::TooManyScales, "no statistic layer has a feature map of at least 2x2");
    for (const auto& [name, _] : weights) res.layers.push_back(name);
  }
  const auto targets = losses::make_targets(exemplar, network, setup.variant.terms, weights);

  losses::LossReport last;
  const int h = exemplar.height(), w = exemplar.width(), c = exemplar.channels();
  auto objective = [&](std::span<const double> x, std::span<double> grad) {
    const Image img(h, w, c, std::vector<double>(x.begin(), x.end()));
    last = losses::total_loss(img, setup.variant.terms, setup.variant.beta, targets, network);
    std::copy(last.gradient.values().begin(), last.gradient.values().end(), grad.begin());
    return last.total;
  };
  auto record = [&](int iteration) {
    res.curve.push_back({iteration, last.total, last.gram, last.spectrum, last.autocorr});
  };
  // minimize() evaluates x0 first; seed the curve from that evaluation.
  bool first = true;
  auto wrapped = [&](std::span<const double> x, std::span<double> grad) {
    const double v = objective(x, grad);
    if (first) {
      record(0);
      first = false;
    }
    return v;
  };
  auto result = optim::minimize(wrapped, init.values(), setup.lbfgs,
                                [&](int iteration, std::span<const double>, double) { record(iteration); });
  res.output = Image(h, w, c, std::move(result.x));
  res.trace = std::move(result.trace);
  return res;
}

struct Outcome {
  Image output;
  std::vector<ScaleResult> scales;  // coarsest first
};

/// Coarse-to-fine synthesis: the coarsest level starts from moment-matched
/// white noise, every finer level from the bilinear upsampling of the level
/// below it. With K = 0 this is plain single-scale synthesis from noise.
inline Outcome synth_multiscale(const Image& exemplar, const Settings& setup, const net::Network& network,
                                std::uint64_t seed,
                                const std::function<void(const ScaleResult&)>& on_scale = {}) {
  setup.variant.validate();
  const int scales = setup.variant.effective_scales();
  const Pyramid pyramid = build_pyramid(exemplar, scales);
  const Image& coarsest = pyramid.level(scales);
  const ChannelMoments moments = channel_moments(coarsest);
  Image init = white_noise(coarsest.height(), coarsest.width(), coarsest.channels(), seed, &moments);
  Outcome out;
  for (int k = scales; k >= 0; --k) {
    ScaleResult r = synth_single_scale(pyramid.level(k), init, setup, network, k);
    if (on_scale) on_scale(r);
    if (k > 0) {
      const Image& finer = pyramid.level(k - 1);
      init = upsample_bilinear(r.output, finer.height(), finer.width());
    }
    out.scales.push_back(std::move(r));
  }
  out.output = out.scales.back().output;
  return out;
}

}  // namespace texsynth::synth
