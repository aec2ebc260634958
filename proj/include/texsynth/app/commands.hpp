#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "texsynth/app/config.hpp"
#include "texsynth/app/hash.hpp"
#include "texsynth/eval/bradley_terry.hpp"
#include "texsynth/eval/displacement.hpp"
#include "texsynth/eval/klw.hpp"
#include "texsynth/losses.hpp"
#include "texsynth/net.hpp"
#include "texsynth/raster_io.hpp"
#include "texsynth/synth.hpp"
#include "texsynth/weights_io.hpp"

namespace texsynth::app {

namespace fs = std::filesystem;

/// Shortest decimal that reads back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline BitDepth bit_depth_of(int bits) { return bits == 8 ? BitDepth::k8 : BitDepth::k16; }

// --- network ----------------------------------------------------------------------

struct BuiltNetwork {
  net::Network network;
  std::vector<std::string> default_layers;
};

inline BuiltNetwork build_network(const NetSpec& spec, int input_channels) {
  const net::PoolMode mode = net::parse_pool_mode(spec.pool);
  net::Architecture arch = spec.architecture == "vgg-mini"
                               ? net::vgg_mini(mode, input_channels)
                               : net::architecture_from_json(read_json_file(spec.architecture));
  if (arch.input_channels() != input_channels)
    fail(ErrorCode::DimensionMismatch, "network expects " + std::to_string(arch.input_channels()) +
                                           " input channels but the exemplar has " + std::to_string(input_channels));
  std::vector<std::string> layers;
  if (spec.architecture == "vgg-mini") layers = net::vgg_mini_stat_layers();
  net::NetworkWeights weights =
      spec.weights.empty() ? net::random_weights(arch, spec.weight_seed) : net::load_weights(spec.weights, arch);
  return {net::Network(std::move(arch), std::move(weights)), std::move(layers)};
}

// --- synth ------------------------------------------------------------------------

/// Where a synth run writes its artifacts, all derived from the output path.
struct SynthPaths {
  fs::path output;
  fs::path session;
  fs::path curve;

  fs::path scale_output(int level) const {
    fs::path p = output;
    p.replace_filename(output.stem().string() + ".scale" + std::to_string(level) + output.extension().string());
    return p;
  }

  static SynthPaths from(const fs::path& out) {
    SynthPaths p;
    p.output = out;
    p.session = out;
    p.session.replace_filename(out.stem().string() + ".session.json");
    p.curve = out;
    p.curve.replace_filename(out.stem().string() + ".loss.csv");
    return p;
  }
};

struct SynthRun {
  SynthPaths paths;
  Json session;
  synth::Outcome outcome;
};

inline std::string exemplar_hash(const Image& img) { return sha256_hex(encode_samples(img, BitDepth::k16)); }

/// Runs one synthesis job and writes the output image, coarse-scale images,
/// the session JSON and the loss-curve CSV.
inline SynthRun run_synth(const SynthConfig& cfg) {
  cfg.validate();
  const Image exemplar = read_image(cfg.exemplar);
  const synth::MethodVariant variant = cfg.method();
  check_scale_count(exemplar.height(), exemplar.width(), variant.effective_scales());
  BuiltNetwork built = build_network(cfg.net, exemplar.channels());
  const std::vector<std::string> layers = cfg.layers.empty() ? built.default_layers : cfg.layers;
  if ((variant.terms.gram || variant.terms.autocorr) && layers.empty())
    fail(ErrorCode::InvalidArgument, "custom architectures need an explicit list of statistic layers");
  for (const auto& l : layers) built.network.architecture().index_of(l);

  synth::Settings settings;
  settings.variant = variant;
  settings.layer_weights = synth::uniform_weights(layers, cfg.layer_weight);
  settings.lbfgs = cfg.lbfgs();

  SynthRun run;
  run.paths = SynthPaths::from(cfg.out);
  run.outcome = synth::synth_multiscale(exemplar, settings, built.network, cfg.seed);
  const BitDepth depth = bit_depth_of(cfg.bit_depth);

  Json scales = Json::array();
  std::ostringstream csv;
  csv << "level,iteration,total,gram,spectrum,autocorr\n";
  for (const auto& s : run.outcome.scales) {
    const fs::path path = s.level == 0 ? run.paths.output : run.paths.scale_output(s.level);
    const auto bytes = encode_netpbm(s.output, depth);
    write_file_bytes(path, bytes);
    Json curve = Json::array();
    for (const auto& c : s.curve) {
      curve.push_back(Json{{"iteration", c.iteration}, {"total", c.total}, {"gram", c.gram},
                           {"spectrum", c.spectrum}, {"autocorr", c.autocorr}});
      csv << s.level << ',' << c.iteration << ',' << format_real(c.total) << ',' << format_real(c.gram) << ','
          << format_real(c.spectrum) << ',' << format_real(c.autocorr) << '\n';
    }
    scales.push_back(Json{{"level", s.level},
                          {"height", s.output.height()},
                          {"width", s.output.width()},
                          {"layers", s.layers},
                          {"dropped_layers", s.dropped},
                          {"iterations", s.trace.iterations()},
                          {"evaluations", s.trace.evaluations},
                          {"termination", optim::to_string(s.trace.reason)},
                          {"output", path.string()},
                          {"output_sha256", sha256_hex(bytes)},
                          {"loss_curve", std::move(curve)}});
  }
  const std::string curve_text = csv.str();
  write_file_bytes(run.paths.curve, std::vector<std::uint8_t>(curve_text.begin(), curve_text.end()));

  Json& j = run.session;
  j["format"] = "texsynth-session";
  j["version"] = 1;
  j["config"] = cfg.to_json();
  j["exemplar"] = Json{{"path", cfg.exemplar},
                       {"sha256", exemplar_hash(exemplar)},
                       {"height", exemplar.height()},
                       {"width", exemplar.width()},
                       {"channels", exemplar.channels()}};
  j["variant"] = variant.name();
  j["seed"] = cfg.seed;
  j["network"] = Json{{"architecture", net::to_json(built.network.architecture())},
                      {"weights", built.network.weights().provenance}};
  j["scales"] = std::move(scales);
  j["output"] = run.paths.output.string();
  j["output_sha256"] = run.session["scales"].back()["output_sha256"];
  j["loss_curve_csv"] = run.paths.curve.string();
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(run.paths.session, std::vector<std::uint8_t>(text.begin(), text.end()));
  return run;
}

/// Re-runs the configuration stored in a session file and reports whether the
/// output and exemplar hashes match the recorded ones.
struct ReplayCheck {
  bool exemplar_matches = false;
  bool output_matches = false;
  SynthRun run;
};

inline SynthConfig config_from_session(const nlohmann::json& session) {
  if (!session.is_object() || session.value("format", "") != "texsynth-session" || !session.contains("config"))
    fail(ErrorCode::MalformedFile, "not a texsynth session file");
  return SynthConfig::from_json(session.at("config"));
}

inline ReplayCheck replay_session(const nlohmann::json& session, const SynthConfig& cfg) {
  ReplayCheck check;
  check.run = run_synth(cfg);
  check.exemplar_matches = session.at("exemplar").at("sha256") == check.run.session["exemplar"]["sha256"];
  check.output_matches = session.at("output_sha256") == check.run.session["output_sha256"];
  return check;
}

// --- evaluation ----------------------------------------------------------------------

struct MetricRow {
  std::string image_id;
  std::string method;
  std::string metric;
  double value = 0.0;
};

inline std::string to_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "image_id,method,metric,value\n";
  for (const auto& r : rows) out << r.image_id << ',' << r.method << ',' << r.metric << ',' << format_real(r.value) << '\n';
  return out.str();
}

struct SynthEntry {
  std::string method;
  std::string path;
};

inline SynthEntry parse_synth_entry(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
  if (eq == 0 || eq + 1 == spec.size()) fail(ErrorCode::InvalidArgument, "bad synth entry '" + spec + "'");
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

/// Runs body(i) for every entry with at most `jobs` concurrent workers and
/// returns the results in input order.
template <typename Result, typename Body>
std::vector<Result> for_each_image(std::size_t n, int jobs, Body body) {
  std::vector<Result> out(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      out[i] = body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(1, jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) work(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<MetricRow> run_eval_ds(const EvalConfig& cfg) {
  cfg.validate();
  const Image exemplar = read_image(cfg.exemplar);
  const std::string id = cfg.resolved_image_id();
  return for_each_image<MetricRow>(cfg.synth.size(), cfg.jobs, [&](std::size_t i) {
    const SynthEntry e = parse_synth_entry(cfg.synth[i]);
    const auto map = eval::displacement_map(read_image(e.path), exemplar, cfg.patch);
    if (!cfg.map_dir.empty()) {
      fs::create_directories(cfg.map_dir);
      write_file_bytes(fs::path(cfg.map_dir) / (id + "_" + e.method + ".ds.ppm"),
                       eval::displacement_ppm(map, exemplar.height(), exemplar.width()));
    }
    return MetricRow{id, e.method, "ds", eval::ds_score(map)};
  });
}

inline std::vector<MetricRow> run_eval_klw(const EvalConfig& cfg) {
  cfg.validate();
  const Image exemplar = read_image(cfg.exemplar);
  const std::string id = cfg.resolved_image_id();
  return for_each_image<MetricRow>(cfg.synth.size(), cfg.jobs, [&](std::size_t i) {
    const SynthEntry e = parse_synth_entry(cfg.synth[i]);
    const auto r = eval::texture_distance_klw(exemplar, read_image(e.path), cfg.scales);
    return MetricRow{id, e.method, "log_klw", r.log_score};
  });
}

// --- Bradley-Terry ------------------------------------------------------------------

struct BtTables {
  std::string strengths;  // method_i,method_j,beta_i,beta_j,delta,sigma,verdict
  std::string winning;    // method,beta,W,Sigma
  eval::BtFit fit;
};

inline std::vector<eval::Duel> filter_duels(std::vector<eval::Duel> duels, const BtConfig& cfg) {
  std::map<std::string, std::string> classes;
  bool classes_loaded = false;
  for (const auto& f : cfg.filters) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "filter must be key=value, got '" + f + "'");
    const std::string key = f.substr(0, eq), value = f.substr(eq + 1);
    std::vector<eval::Duel> kept;
    if (key == "scale") {
      if (value != "global" && value != "local") fail(ErrorCode::InvalidArgument, "scale filter must be global or local");
      for (auto& d : duels)
        if (d.scale == value) kept.push_back(std::move(d));
    } else if (key == "image-class") {
      if (!classes_loaded) {
        if (cfg.classes.empty()) fail(ErrorCode::InvalidArgument, "image-class filter needs a classes file");
        std::ifstream in(cfg.classes);
        if (!in) fail(ErrorCode::IoFailure, "cannot open " + cfg.classes);
        classes = eval::parse_image_classes(in);
        classes_loaded = true;
      }
      for (auto& d : duels) {
        const auto it = classes.find(d.image_id);
        if (it != classes.end() && it->second == value) kept.push_back(std::move(d));
      }
    } else {
      fail(ErrorCode::InvalidArgument, "unknown filter key '" + key + "'");
    }
    duels = std::move(kept);
  }
  return duels;
}

inline BtTables run_bt(const BtConfig& cfg) {
  cfg.validate();
  std::ifstream in(cfg.duels);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + cfg.duels);
  const auto duels = filter_duels(eval::parse_duel_csv(in), cfg);
  BtTables t;
  t.fit = eval::bt_fit(eval::aggregate_duels(duels));
  const auto& fit = t.fit;
  const auto verdicts = eval::bt_significance(fit);
  std::ostringstream s;
  s << "method_i,method_j,beta_i,beta_j,delta,sigma,verdict\n";
  for (int i = 0; i < fit.size(); ++i)
    for (int j = 0; j < fit.size(); ++j) {
      if (i == j) continue;
      s << fit.methods[i] << ',' << fit.methods[j] << ',' << format_real(fit.strength(i)) << ','
        << format_real(fit.strength(j)) << ',' << format_real(fit.strength(i) - fit.strength(j)) << ','
        << format_real(fit.sigma(i, j)) << ',' << eval::to_string(verdicts[i][j]) << '\n';
    }
  t.strengths = s.str();
  std::ostringstream w;
  w << "method,beta,W,Sigma\n";
  const auto wp = eval::bt_winning_prob(fit);
  for (int i = 0; i < fit.size(); ++i)
    w << fit.methods[i] << ',' << format_real(fit.strength(i)) << ',' << format_real(wp[i].w) << ','
      << format_real(wp[i].sigma) << '\n';
  t.winning = w.str();
  return t;
}

// --- projection --------------------------------------------------------------------

inline void run_project(const ProjectConfig& cfg) {
  cfg.validate();
  const Image exemplar = read_image(cfg.exemplar);
  const Image input = read_image(cfg.input);
  write_image(losses::spectrum_project(input, losses::make_spectrum_target(exemplar)), cfg.out,
              bit_depth_of(cfg.bit_depth));
}

}  // namespace texsynth::app
