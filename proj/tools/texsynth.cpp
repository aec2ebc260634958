#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "texsynth/app/commands.hpp"
#include "texsynth/app/selftest.hpp"

using namespace texsynth;
using namespace texsynth::app;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

void report_error(const std::string& code, const std::string& message) {
  std::cerr << Json{{"error", code}, {"message", message}}.dump() << std::endl;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Flag values are copied over the configuration only when given.
template <typename T>
void override_if(const CLI::Option* opt, T& field, const T& value) {
  if (opt->count() > 0) field = value;
}

struct SynthFlags {
  std::string config, replay;
  SynthConfig v;
  std::string layers;
  bool print_config = false;
};

struct EvalFlags {
  std::string config;
  EvalConfig v;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture synthesis by matching deep feature statistics and Fourier spectra"};
  app.require_subcommand(1);

  // synth
  SynthFlags sf;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize a texture from an exemplar");
  synth_cmd->add_option("--config", sf.config, "JSON run configuration");
  synth_cmd->add_option("--replay", sf.replay, "Re-run the configuration stored in a session file");
  auto* o_ex = synth_cmd->add_option("--exemplar", sf.v.exemplar, "Exemplar image (PPM/PGM)");
  auto* o_out = synth_cmd->add_option("--out", sf.v.out, "Output image path");
  auto* o_var = synth_cmd->add_option("--variant", sf.v.variant, "Statistics to match, e.g. gram+spectrum+msinit");
  auto* o_beta = synth_cmd->add_option("--beta", sf.v.beta, "Spectrum weight");
  auto* o_k = synth_cmd->add_option("--K", sf.v.K, "Number of coarser scales");
  auto* o_seed = synth_cmd->add_option("--seed", sf.v.seed, "Noise seed");
  auto* o_lw = synth_cmd->add_option("--layer-weight", sf.v.layer_weight, "Weight of every statistic layer");
  auto* o_layers = synth_cmd->add_option("--layers", sf.layers, "Comma-separated statistic layers");
  auto* o_iter = synth_cmd->add_option("--max-iter", sf.v.max_iter, "L-BFGS iterations per scale");
  auto* o_hist = synth_cmd->add_option("--history", sf.v.history, "L-BFGS memory");
  auto* o_gtol = synth_cmd->add_option("--grad-tol", sf.v.grad_tol, "Gradient max-norm tolerance");
  auto* o_arch = synth_cmd->add_option("--arch", sf.v.net.architecture, "vgg-mini or an architecture JSON file");
  auto* o_pool = synth_cmd->add_option("--pool", sf.v.net.pool, "average or max (vgg-mini only)");
  auto* o_w = synth_cmd->add_option("--weights", sf.v.net.weights, "Network weight file");
  auto* o_ws = synth_cmd->add_option("--weight-seed", sf.v.net.weight_seed, "Seed for random network weights");
  auto* o_bits = synth_cmd->add_option("--bit-depth", sf.v.bit_depth, "8 or 16 bits per sample");
  synth_cmd->add_flag("--print-config", sf.print_config, "Print the canonical configuration and exit");

  // eval-ds and eval-klw
  EvalFlags ds, klw;
  auto add_eval = [&](const char* name, const char* help, EvalFlags& f) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", f.config, "JSON configuration");
    cmd->add_option("--exemplar", f.v.exemplar, "Exemplar image");
    cmd->add_option("--synth", f.v.synth, "Synthesized image, as path or method=path (repeatable)");
    cmd->add_option("--image-id", f.v.image_id, "Image identifier for the CSV rows");
    cmd->add_option("--jobs", f.v.jobs, "Images evaluated in parallel");
    return cmd;
  };
  auto* ds_cmd = add_eval("eval-ds", "Displacement-map DS score", ds);
  ds_cmd->add_option("--patch", ds.v.patch, "Odd patch size");
  ds_cmd->add_option("--map-dir", ds.v.map_dir, "Write red/blue displacement maps here");
  auto* klw_cmd = add_eval("eval-klw", "Wavelet generalized-Gaussian KL distance", klw);
  klw_cmd->add_option("--scales", klw.v.scales, "Wavelet scales");

  // bt-fit
  std::string bt_config;
  BtConfig bt;
  auto* bt_cmd = app.add_subcommand("bt-fit", "Bradley-Terry analysis of duel outcomes");
  bt_cmd->add_option("--config", bt_config, "JSON configuration");
  auto* o_duels = bt_cmd->add_option("--duels", bt.duels, "Duel CSV");
  auto* o_filter = bt_cmd->add_option("--filter", bt.filters, "scale=global|local or image-class=<class>");
  auto* o_classes = bt_cmd->add_option("--classes", bt.classes, "image_id,class CSV");
  auto* o_btout = bt_cmd->add_option("--out", bt.out, "Output prefix (default: stdout)");

  // project-spectrum
  std::string pj_config;
  ProjectConfig pj;
  auto* pj_cmd = app.add_subcommand("project-spectrum", "Apply the spectrum projection once");
  pj_cmd->add_option("--config", pj_config, "JSON configuration");
  auto* o_pex = pj_cmd->add_option("--exemplar", pj.exemplar, "Exemplar image");
  auto* o_pin = pj_cmd->add_option("--input", pj.input, "Image to project");
  auto* o_pout = pj_cmd->add_option("--out", pj.out, "Output image");
  auto* o_pbits = pj_cmd->add_option("--bit-depth", pj.bit_depth, "8 or 16");

  auto* self_cmd = app.add_subcommand("selftest", "Run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("InvalidArgument", e.what());
    return kExitInput;
  }

  try {
    if (synth_cmd->parsed()) {
      SynthConfig cfg;
      nlohmann::json session;
      if (!sf.replay.empty()) {
        session = read_json_file(sf.replay);
        cfg = config_from_session(session);
      } else if (!sf.config.empty()) {
        cfg = SynthConfig::from_json(read_json_file(sf.config));
      }
      override_if(o_ex, cfg.exemplar, sf.v.exemplar);
      override_if(o_out, cfg.out, sf.v.out);
      override_if(o_var, cfg.variant, sf.v.variant);
      override_if(o_beta, cfg.beta, sf.v.beta);
      override_if(o_k, cfg.K, sf.v.K);
      override_if(o_seed, cfg.seed, sf.v.seed);
      override_if(o_lw, cfg.layer_weight, sf.v.layer_weight);
      override_if(o_layers, cfg.layers, split_list(sf.layers));
      override_if(o_iter, cfg.max_iter, sf.v.max_iter);
      override_if(o_hist, cfg.history, sf.v.history);
      override_if(o_gtol, cfg.grad_tol, sf.v.grad_tol);
      override_if(o_arch, cfg.net.architecture, sf.v.net.architecture);
      override_if(o_pool, cfg.net.pool, sf.v.net.pool);
      override_if(o_w, cfg.net.weights, sf.v.net.weights);
      override_if(o_ws, cfg.net.weight_seed, sf.v.net.weight_seed);
      override_if(o_bits, cfg.bit_depth, sf.v.bit_depth);
      if (sf.print_config) {
        std::cout << cfg.to_json().dump(2) << std::endl;
        return kExitOk;
      }
      if (!sf.replay.empty()) {
        const auto check = replay_session(session, cfg);
        std::cout << Json{{"output", check.run.paths.output.string()},
                          {"exemplar_matches", check.exemplar_matches},
                          {"output_matches", check.output_matches}}
                         .dump()
                  << std::endl;
        if (!check.exemplar_matches || !check.output_matches) {
          report_error("ReplayMismatch", "replayed run does not reproduce the recorded hashes");
          return kExitRuntime;
        }
        return kExitOk;
      }
      const auto run = run_synth(cfg);
      std::cout << Json{{"output", run.paths.output.string()},
                        {"session", run.paths.session.string()},
                        {"loss_curve", run.paths.curve.string()},
                        {"output_sha256", run.session["output_sha256"]}}
                       .dump()
                << std::endl;
    } else if (ds_cmd->parsed() || klw_cmd->parsed()) {
      const bool is_ds = ds_cmd->parsed();
      EvalFlags& f = is_ds ? ds : klw;
      CLI::App* cmd = is_ds ? ds_cmd : klw_cmd;
      EvalConfig cfg = f.config.empty() ? EvalConfig{} : EvalConfig::from_json(read_json_file(f.config));
      override_if(cmd->get_option("--exemplar"), cfg.exemplar, f.v.exemplar);
      override_if(cmd->get_option("--synth"), cfg.synth, f.v.synth);
      override_if(cmd->get_option("--image-id"), cfg.image_id, f.v.image_id);
      override_if(cmd->get_option("--jobs"), cfg.jobs, f.v.jobs);
      if (is_ds) {
        override_if(cmd->get_option("--patch"), cfg.patch, f.v.patch);
        override_if(cmd->get_option("--map-dir"), cfg.map_dir, f.v.map_dir);
      } else {
        override_if(cmd->get_option("--scales"), cfg.scales, f.v.scales);
      }
      std::cout << to_csv(is_ds ? run_eval_ds(cfg) : run_eval_klw(cfg));
    } else if (bt_cmd->parsed()) {
      BtConfig cfg = bt_config.empty() ? BtConfig{} : BtConfig::from_json(read_json_file(bt_config));
      override_if(o_duels, cfg.duels, bt.duels);
      override_if(o_filter, cfg.filters, bt.filters);
      override_if(o_classes, cfg.classes, bt.classes);
      override_if(o_btout, cfg.out, bt.out);
      const auto tables = run_bt(cfg);
      if (cfg.out.empty()) {
        std::cout << tables.strengths << '\n' << tables.winning;
      } else {
        write_text(cfg.out + ".strengths.csv", tables.strengths);
        write_text(cfg.out + ".winning.csv", tables.winning);
      }
    } else if (pj_cmd->parsed()) {
      ProjectConfig cfg = pj_config.empty() ? ProjectConfig{} : ProjectConfig::from_json(read_json_file(pj_config));
      override_if(o_pex, cfg.exemplar, pj.exemplar);
      override_if(o_pin, cfg.input, pj.input);
      override_if(o_pout, cfg.out, pj.out);
      override_if(o_pbits, cfg.bit_depth, pj.bit_depth);
      run_project(cfg);
    } else if (self_cmd->parsed()) {
      bool all = true;
      for (const auto& r : run_selftest()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        all = all && r.passed;
      }
      return all ? kExitOk : kExitRuntime;
    }
  } catch (const Error& e) {
    report_error(std::string(to_string(e.code())), e.what());
    return e.is_input_error() ? kExitInput : kExitRuntime;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
