#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "texsynth/error.hpp"
#include "texsynth/image.hpp"
#include "texsynth/parallel.hpp"
#include "texsynth/tensor.hpp"

namespace texsynth::net {

enum class LayerKind : std::uint8_t { Conv3x3 = 0, Relu = 1, Pool2 = 2 };
enum class PoolMode : std::uint8_t { Average = 0, Max = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv3x3;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  PoolMode pool = PoolMode::Average;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A validated chain of layers. Channel counts of relu/pool layers are
/// inferred from their predecessor.
class Architecture {
 public:
  Architecture() = default;

  Architecture(std::string name, int input_channels, std::vector<LayerSpec> layers)
      : name_(std::move(name)), input_channels_(input_channels), layers_(std::move(layers)) {
    if (input_channels_ != 1 && input_channels_ != 3) {
      fail(ErrorCode::InvalidArgument, "network input must have 1 or 3 channels");
    }
    if (layers_.empty()) fail(ErrorCode::InvalidArgument, "network needs at least one layer");
    std::set<std::string> seen;
    int channels = input_channels_;
    for (auto& layer : layers_) {
      if (layer.name.empty() || !seen.insert(layer.name).second) {
        fail(ErrorCode::InvalidArgument, "layer names must be unique and non-empty: '" + layer.name + "'");
      }
      layer.in_channels = channels;
      if (layer.kind == LayerKind::Conv3x3) {
        if (layer.out_channels < 1) fail(ErrorCode::InvalidArgument, "conv layer " + layer.name + " needs out_channels >= 1");
      } else {
        layer.out_channels = channels;
      }
      channels = layer.out_channels;
    }
  }

  const std::string& name() const noexcept { return name_; }
  int input_channels() const noexcept { return input_channels_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

  int index_of(const std::string& layer) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].name == layer) return int(i);
    fail(ErrorCode::UnknownLayer, "unknown layer '" + layer + "'");
  }

  /// Spatial size of a layer's output for an input of the given size.
  std::pair<int, int> output_dims(int layer_index, int h, int w) const {
    for (int i = 0; i <= layer_index; ++i) {
      if (layers_[i].kind == LayerKind::Pool2) {
        h = ceil_half(h);
        w = ceil_half(w);
      }
    }
    return {h, w};
  }

  std::size_t conv_count() const {
    return std::size_t(std::count_if(layers_.begin(), layers_.end(),
                                     [](const LayerSpec& l) { return l.kind == LayerKind::Conv3x3; }));
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;

 private:
  std::string name_;
  int input_channels_ = 3;
  std::vector<LayerSpec> layers_;
};

inline LayerSpec conv(std::string name, int out) { return {LayerKind::Conv3x3, std::move(name), 0, out}; }
inline LayerSpec relu(std::string name) { return {LayerKind::Relu, std::move(name)}; }
inline LayerSpec pool(std::string name, PoolMode mode = PoolMode::Average) {
  return {LayerKind::Pool2, std::move(name), 0, 0, mode};
}

/// conv1_1(16) relu conv1_2(16) relu pool1 conv2_1(32) relu pool2 conv3_1(64) relu pool3
inline Architecture vgg_mini(PoolMode mode = PoolMode::Average, int input_channels = 3) {
  return Architecture("vgg-mini", input_channels,
                      {conv("conv1_1", 16), relu("relu1_1"), conv("conv1_2", 16), relu("relu1_2"),
                       pool("pool1", mode), conv("conv2_1", 32), relu("relu2_1"), pool("pool2", mode),
                       conv("conv3_1", 64), relu("relu3_1"), pool("pool3", mode)});
}

inline std::vector<std::string> vgg_mini_stat_layers() { return {"conv1_1", "pool1", "pool2", "pool3"}; }

// --- JSON description -------------------------------------------------------

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Relu: return "relu";
    case LayerKind::Pool2: return "pool2";
  }
  return "?";
}

inline std::string to_string(PoolMode m) { return m == PoolMode::Average ? "average" : "max"; }

inline PoolMode parse_pool_mode(const std::string& s) {
  if (s == "average") return PoolMode::Average;
  if (s == "max") return PoolMode::Max;
  fail(ErrorCode::InvalidArgument, "pool mode must be 'average' or 'max', got '" + s + "'");
}

inline nlohmann::ordered_json to_json(const Architecture& arch) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : arch.layers()) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(l.kind);
    j["name"] = l.name;
    if (l.kind == LayerKind::Conv3x3) j["out_channels"] = l.out_channels;
    if (l.kind == LayerKind::Pool2) j["mode"] = to_string(l.pool);
    layers.push_back(std::move(j));
  }
  nlohmann::ordered_json j;
  j["name"] = arch.name();
  j["input_channels"] = arch.input_channels();
  j["layers"] = std::move(layers);
  return j;
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  auto require_keys = [](const nlohmann::json& obj, std::set<std::string> allowed, const std::string& where) {
    if (!obj.is_object()) fail(ErrorCode::InvalidArgument, where + " must be an object");
    for (const auto& [key, _] : obj.items())
      if (!allowed.count(key)) fail(ErrorCode::InvalidArgument, "unknown key '" + key + "' in " + where);
  };
  try {
    require_keys(j, {"name", "input_channels", "layers"}, "architecture");
    std::vector<LayerSpec> layers;
    for (const auto& lj : j.at("layers")) {
      require_keys(lj, {"kind", "name", "out_channels", "mode"}, "layer");
      const std::string kind = lj.at("kind").get<std::string>();
      const std::string name = lj.at("name").get<std::string>();
      if (kind == "conv3x3") {
        layers.push_back(conv(name, lj.at("out_channels").get<int>()));
      } else if (kind == "relu") {
        layers.push_back(relu(name));
      } else if (kind == "pool2") {
        layers.push_back(pool(name, parse_pool_mode(lj.value("mode", std::string("average")))));
      } else {
        fail(ErrorCode::InvalidArgument, "unknown layer kind '" + kind + "'");
      }
    }
    return Architecture(j.value("name", std::string("custom")), j.at("input_channels").get<int>(),
                        std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad architecture description: ") + e.what());
  }
}

// --- weights -----------------------------------------------------------------

struct ConvParams {
  std::vector<double> kernel;  // out x in x 3 x 3
  std::vector<double> bias;    // out
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct NetworkWeights {
  std::vector<ConvParams> conv;  // one per conv layer, in chain order
  std::string provenance;        // "file:<path>" or "random(<seed>)"
  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

namespace detail {

// Box-Muller over raw mt19937_64 draws, so the stream is identical across
// standard library implementations.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

/// He-style initialization, std = sqrt(2 / fan_in), zero biases. Pooling
/// needs no compensation: neighbouring activations are strongly correlated, so
/// 2x2 averaging loses little variance.
inline NetworkWeights random_weights(const Architecture& arch, std::uint64_t seed) {
  NetworkWeights w;
  w.provenance = "random(" + std::to_string(seed) + ")";
  detail::GaussianStream rng(seed);
  for (const auto& layer : arch.layers()) {
    if (layer.kind != LayerKind::Conv3x3) continue;
    const double std_dev = std::sqrt(2.0 / (9.0 * layer.in_channels));
    ConvParams p;
    p.kernel.resize(std::size_t(layer.out_channels) * layer.in_channels * 9);
    for (double& k : p.kernel) k = std_dev * rng.next();
    p.bias.assign(layer.out_channels, 0.0);
    w.conv.push_back(std::move(p));
  }
  return w;
}

inline void check_weights(const Architecture& arch, const NetworkWeights& w) {
  if (w.conv.size() != arch.conv_count()) {
    fail(ErrorCode::DimensionMismatch, "weights have " + std::to_string(w.conv.size()) +
                                           " conv layers, architecture declares " +
                                           std::to_string(arch.conv_count()));
  }
  std::size_t ci = 0;
  for (const auto& layer : arch.layers()) {
    if (layer.kind != LayerKind::Conv3x3) continue;
    const auto& p = w.conv[ci++];
    if (p.kernel.size() != std::size_t(layer.out_channels) * layer.in_channels * 9 ||
        p.bias.size() != std::size_t(layer.out_channels)) {
      fail(ErrorCode::DimensionMismatch, "weight shape mismatch at layer " + layer.name);
    }
    for (double v : p.kernel)
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "non-finite weight at " + layer.name);
    for (double v : p.bias)
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "non-finite bias at " + layer.name);
  }
}

// --- layer kernels -------------------------------------------------------------

namespace kernels {

// Zero-padded 3x3 convolution (cross-correlation), stride 1.
inline Tensor conv3x3_forward(const Tensor& in, const ConvParams& p, int out_channels) {
  const int h = in.height, w = in.width, cin = in.channels;
  Tensor out(out_channels, h, w);
  parallel_for(out_channels, [&](int o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), p.bias[o]);
    for (int i = 0; i < cin; ++i) {
      const auto src = in.plane(i);
      const double* k = &p.kernel[(std::size_t(o) * cin + i) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = k[ky * 3 + kx];
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            double* drow = dst.data() + std::size_t(y) * w;
            const double* srow = src.data() + std::size_t(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }, 4);
  return out;
}

// Adjoint of conv3x3_forward with respect to its input.
inline Tensor conv3x3_backward(const Tensor& grad_out, const ConvParams& p, int in_channels) {
  const int h = grad_out.height, w = grad_out.width, cout = grad_out.channels;
  Tensor grad_in(in_channels, h, w);
  parallel_for(in_channels, [&](int i) {
    auto dst = grad_in.plane(i);
    for (int o = 0; o < cout; ++o) {
      const auto src = grad_out.plane(o);
      const double* k = &p.kernel[(std::size_t(o) * in_channels + i) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = k[ky * 3 + kx];
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            double* drow = dst.data() + std::size_t(y + dy) * w + dx;
            const double* srow = src.data() + std::size_t(y) * w;
            for (int x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }, 4);
  return grad_in;
}

inline Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// Subgradient at 0 is 0.
inline Tensor relu_backward(const Tensor& grad_out, const Tensor& in) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(in.data[i] > 0.0)) g.data[i] = 0.0;
  return g;
}

struct Window {
  int y0, y1, x0, x1;  // inclusive
};

inline Window pool_window(int y, int x, int h, int w) {
  return {2 * y, std::min(2 * y + 1, h - 1), 2 * x, std::min(2 * x + 1, w - 1)};
}

inline Tensor pool_forward(const Tensor& in, PoolMode mode) {
  Tensor out(in.channels, ceil_half(in.height), ceil_half(in.width));
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const auto win = pool_window(y, x, in.height, in.width);
        double acc = mode == PoolMode::Average ? 0.0 : -std::numeric_limits<double>::infinity();
        for (int yy = win.y0; yy <= win.y1; ++yy)
          for (int xx = win.x0; xx <= win.x1; ++xx)
            acc = mode == PoolMode::Average ? acc + in.at(c, yy, xx) : std::max(acc, in.at(c, yy, xx));
        if (mode == PoolMode::Average) acc /= double((win.y1 - win.y0 + 1) * (win.x1 - win.x0 + 1));
        out.at(c, y, x) = acc;
      }
  return out;
}

// Max pooling routes the gradient to the first maximal element in scan order.
inline Tensor pool_backward(const Tensor& grad_out, const Tensor& in, PoolMode mode) {
  Tensor g(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y)
      for (int x = 0; x < grad_out.width; ++x) {
        const auto win = pool_window(y, x, in.height, in.width);
        const double go = grad_out.at(c, y, x);
        if (mode == PoolMode::Average) {
          const double share = go / double((win.y1 - win.y0 + 1) * (win.x1 - win.x0 + 1));
          for (int yy = win.y0; yy <= win.y1; ++yy)
            for (int xx = win.x0; xx <= win.x1; ++xx) g.at(c, yy, xx) += share;
        } else {
          int by = win.y0, bx = win.x0;
          for (int yy = win.y0; yy <= win.y1; ++yy)
            for (int xx = win.x0; xx <= win.x1; ++xx)
              if (in.at(c, yy, xx) > in.at(c, by, bx)) by = yy, bx = xx;
          g.at(c, by, bx) += go;
        }
      }
  return g;
}

}  // namespace kernels

/// Activations of every layer up to the deepest one requested.
struct Trace {
  Tensor input;
  std::vector<Tensor> outputs;
};

class Network {
 public:
  Network(Architecture arch, NetworkWeights weights)
      : arch_(std::move(arch)), weights_(std::move(weights)) {
    check_weights(arch_, weights_);
    std::size_t ci = 0;
    for (const auto& layer : arch_.layers())
      conv_slot_.push_back(layer.kind == LayerKind::Conv3x3 ? int(ci++) : -1);
  }

  const Architecture& architecture() const noexcept { return arch_; }
  const NetworkWeights& weights() const noexcept { return weights_; }

  int deepest(const std::set<std::string>& wanted) const {
    int last = -1;
    for (const auto& name : wanted) last = std::max(last, arch_.index_of(name));
    return last;
  }

  Trace run(const Tensor& input, int last_layer) const {
    if (input.channels != arch_.input_channels()) {
      fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(input.channels) +
                                             " channels, network expects " +
                                             std::to_string(arch_.input_channels()));
    }
    Trace t;
    t.input = input;
    t.outputs.reserve(std::size_t(last_layer) + 1);
    for (int i = 0; i <= last_layer; ++i) {
      const Tensor& in = i == 0 ? t.input : t.outputs.back();
      t.outputs.push_back(apply(i, in));
    }
    return t;
  }

  FeatureStack forward(const Image& img, const std::set<std::string>& wanted) const {
    if (wanted.empty()) return {};
    const Trace t = run(to_planar(img), deepest(wanted));
    return select(t, wanted);
  }

  FeatureStack select(const Trace& t, const std::set<std::string>& wanted) const {
    FeatureStack out;
    for (const auto& name : wanted) out[name] = t.outputs.at(std::size_t(arch_.index_of(name)));
    return out;
  }

  /// Pullback of per-layer cotangents to the input: d(sum_l <g_l, f_l>)/d input.
  Tensor backward(const Trace& t, const FeatureStack& cotangents) const {
    int last = -1;
    for (const auto& [name, g] : cotangents) {
      const int idx = arch_.index_of(name);
      if (idx >= int(t.outputs.size())) fail(ErrorCode::InvalidArgument, "trace does not reach layer " + name);
      if (!g.same_shape(t.outputs[idx])) {
        fail(ErrorCode::DimensionMismatch, "cotangent shape mismatch at layer " + name);
      }
      last = std::max(last, idx);
    }
    if (last < 0) return Tensor(t.input.channels, t.input.height, t.input.width);
    Tensor grad(t.outputs[last].channels, t.outputs[last].height, t.outputs[last].width);
    for (int i = last; i >= 0; --i) {
      if (auto it = cotangents.find(arch_.layers()[i].name); it != cotangents.end()) {
        for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += it->second.data[k];
      }
      const Tensor& in = i == 0 ? t.input : t.outputs[i - 1];
      grad = apply_adjoint(i, grad, in);
    }
    return grad;
  }

  Image backward(const Image& img, const FeatureStack& cotangents) const {
    std::set<std::string> names;
    for (const auto& [name, _] : cotangents) names.insert(name);
    if (names.empty()) return Image(img.height(), img.width(), img.channels());
    const Trace t = run(to_planar(img), deepest(names));
    return to_image(backward(t, cotangents));
  }

 private:
  Tensor apply(int i, const Tensor& in) const {
    const auto& layer = arch_.layers()[i];
    switch (layer.kind) {
      case LayerKind::Conv3x3:
        return kernels::conv3x3_forward(in, weights_.conv[conv_slot_[i]], layer.out_channels);
      case LayerKind::Relu:
        return kernels::relu_forward(in);
      case LayerKind::Pool2:
        return kernels::pool_forward(in, layer.pool);
    }
    return in;
  }

  Tensor apply_adjoint(int i, const Tensor& grad, const Tensor& in) const {
    const auto& layer = arch_.layers()[i];
    switch (layer.kind) {
      case LayerKind::Conv3x3:
        return kernels::conv3x3_backward(grad, weights_.conv[conv_slot_[i]], layer.in_channels);
      case LayerKind::Relu:
        return kernels::relu_backward(grad, in);
      case LayerKind::Pool2:
        return kernels::pool_backward(grad, in, layer.pool);
    }
    return grad;
  }

  Architecture arch_;
  NetworkWeights weights_;
  std::vector<int> conv_slot_;
};

}  // namespace texsynth::net
