#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "texsynth/error.hpp"
#include "texsynth/eval/displacement.hpp"
#include "texsynth/eval/klw.hpp"
#include "texsynth/lbfgs.hpp"
#include "texsynth/synth.hpp"

// Run configurations for the command-line front end. Each command reads an
// optional JSON object (unknown keys are rejected), then command-line flags
// override individual fields. `to_json` always emits every field in a fixed
// order, which is the canonical form.

namespace texsynth::app {

using Json = nlohmann::ordered_json;

namespace detail {

/// Reads known keys from a JSON object and rejects everything else.
class StrictReader {
 public:
  StrictReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::InvalidArgument, where_ + " must be a JSON object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::InvalidArgument, "wrong type for '" + key + "' in " + where_);
    }
  }

  StrictReader child(const std::string& key) {
    known_.insert(key);
    return StrictReader(j_.contains(key) ? j_.at(key) : empty_object(), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!known_.count(key)) fail(ErrorCode::InvalidArgument, "unknown key '" + key + "' in " + where_);
  }

 private:
  static const nlohmann::json& empty_object() {
    static const nlohmann::json e = nlohmann::json::object();
    return e;
  }

  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> known_;
};

}  // namespace detail

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::MalformedFile, path.string() + ": " + e.what());
  }
}

/// Network selection: the built-in "vgg-mini" or a path to an architecture
/// JSON file; weights from a file, or seeded random weights when empty.
struct NetSpec {
  std::string architecture = "vgg-mini";
  std::string pool = "average";
  std::string weights;
  std::uint64_t weight_seed = 0;

  Json to_json() const {
    return Json{{"architecture", architecture}, {"pool", pool}, {"weights", weights}, {"weight_seed", weight_seed}};
  }
  void read(detail::StrictReader r) {
    r.read("architecture", architecture);
    r.read("pool", pool);
    r.read("weights", weights);
    r.read("weight_seed", weight_seed);
    r.finish();
  }
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct SynthConfig {
  std::string exemplar;
  std::string out;
  std::string variant = "gram+spectrum+msinit";
  double beta = synth::kDefaultBeta;
  int K = synth::kDefaultScales;
  std::uint64_t seed = 0;
  double layer_weight = synth::kDefaultLayerWeight;
  std::vector<std::string> layers;  // empty: the network's default statistic layers
  int history = 10;
  int max_iter = synth::kDefaultIterations;
  double grad_tol = 1e-8;
  NetSpec net;
  int bit_depth = 16;

  Json to_json() const {
    Json j;
    j["exemplar"] = exemplar;
    j["out"] = out;
    j["variant"] = variant;
    j["beta"] = beta;
    j["K"] = K;
    j["seed"] = seed;
    j["layer_weight"] = layer_weight;
    j["layers"] = layers;
    j["lbfgs"] = Json{{"history", history}, {"max_iter", max_iter}, {"grad_tol", grad_tol}};
    j["net"] = net.to_json();
    j["bit_depth"] = bit_depth;
    return j;
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    detail::StrictReader r(j, "synth config");
    r.read("exemplar", c.exemplar);
    r.read("out", c.out);
    r.read("variant", c.variant);
    r.read("beta", c.beta);
    r.read("K", c.K);
    r.read("seed", c.seed);
    r.read("layer_weight", c.layer_weight);
    r.read("layers", c.layers);
    auto l = r.child("lbfgs");
    l.read("history", c.history);
    l.read("max_iter", c.max_iter);
    l.read("grad_tol", c.grad_tol);
    l.finish();
    c.net.read(r.child("net"));
    r.read("bit_depth", c.bit_depth);
    r.finish();
    return c;
  }

  synth::MethodVariant method() const {
    synth::MethodVariant v = synth::parse_variant(variant);
    v.beta = beta;
    v.scales = K;
    v.validate();
    return v;
  }

  optim::LbfgsConfig lbfgs() const {
    optim::LbfgsConfig cfg;
    cfg.history = history;
    cfg.max_iter = max_iter;
    cfg.grad_tol = grad_tol;
    cfg.validate();
    return cfg;
  }

  void validate() const {
    if (exemplar.empty()) fail(ErrorCode::InvalidArgument, "synth needs an exemplar");
    if (out.empty()) fail(ErrorCode::InvalidArgument, "synth needs an output path");
    if (bit_depth != 8 && bit_depth != 16) fail(ErrorCode::InvalidArgument, "bit_depth must be 8 or 16");
    if (!(layer_weight >= 0.0)) fail(ErrorCode::InvalidArgument, "layer_weight must be >= 0");
    method();
    lbfgs();
    net::parse_pool_mode(net.pool);
  }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Shared by the two evaluation commands: one exemplar against several
/// synthesized images. A synth entry is "method=path" or a bare path, whose
/// file stem then names the method.
struct EvalConfig {
  std::string exemplar;
  std::vector<std::string> synth;
  std::string image_id;  // defaults to the exemplar's file stem
  int patch = eval::kDefaultPatch;
  int scales = eval::kDefaultWaveletScales;
  std::string map_dir;  // displacement maps are written here when set
  int jobs = 1;

  Json to_json() const {
    return Json{{"exemplar", exemplar}, {"synth", synth},     {"image_id", image_id}, {"patch", patch},
                {"scales", scales},     {"map_dir", map_dir}, {"jobs", jobs}};
  }

  static EvalConfig from_json(const nlohmann::json& j) {
    EvalConfig c;
    detail::StrictReader r(j, "eval config");
    r.read("exemplar", c.exemplar);
    r.read("synth", c.synth);
    r.read("image_id", c.image_id);
    r.read("patch", c.patch);
    r.read("scales", c.scales);
    r.read("map_dir", c.map_dir);
    r.read("jobs", c.jobs);
    r.finish();
    return c;
  }

  void validate() const {
    if (exemplar.empty()) fail(ErrorCode::InvalidArgument, "evaluation needs an exemplar");
    if (synth.empty()) fail(ErrorCode::InvalidArgument, "evaluation needs at least one synthesized image");
    if (jobs < 1) fail(ErrorCode::InvalidArgument, "jobs must be >= 1");
  }

  std::string resolved_image_id() const {
    return image_id.empty() ? std::filesystem::path(exemplar).stem().string() : image_id;
  }

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct BtConfig {
  std::string duels;
  std::vector<std::string> filters;  // "scale=global|local", "image-class=<class>"
  std::string classes;               // image_id,class table for image-class filters
  std::string out;                   // output prefix; empty writes both tables to stdout

  Json to_json() const {
    return Json{{"duels", duels}, {"filters", filters}, {"classes", classes}, {"out", out}};
  }

  static BtConfig from_json(const nlohmann::json& j) {
    BtConfig c;
    detail::StrictReader r(j, "bt-fit config");
    r.read("duels", c.duels);
    r.read("filters", c.filters);
    r.read("classes", c.classes);
    r.read("out", c.out);
    r.finish();
    return c;
  }

  void validate() const {
    if (duels.empty()) fail(ErrorCode::InvalidArgument, "bt-fit needs a duel CSV");
  }

  friend bool operator==(const BtConfig&, const BtConfig&) = default;
};

struct ProjectConfig {
  std::string exemplar;
  std::string input;
  std::string out;
  int bit_depth = 16;

  Json to_json() const {
    return Json{{"exemplar", exemplar}, {"input", input}, {"out", out}, {"bit_depth", bit_depth}};
  }

  static ProjectConfig from_json(const nlohmann::json& j) {
    ProjectConfig c;
    detail::StrictReader r(j, "project-spectrum config");
    r.read("exemplar", c.exemplar);
    r.read("input", c.input);
    r.read("out", c.out);
    r.read("bit_depth", c.bit_depth);
    r.finish();
    return c;
  }

  void validate() const {
    if (exemplar.empty() || input.empty() || out.empty())
      fail(ErrorCode::InvalidArgument, "project-spectrum needs exemplar, input and out");
    if (bit_depth != 8 && bit_depth != 16) fail(ErrorCode::InvalidArgument, "bit_depth must be 8 or 16");
  }

  friend bool operator==(const ProjectConfig&, const ProjectConfig&) = default;
};

}  // namespace texsynth::app
