#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "texsynth/check/oracles.hpp"
#include "texsynth/eval/bradley_terry.hpp"
#include "texsynth/eval/wavelet.hpp"
#include "texsynth/fft.hpp"
#include "texsynth/lbfgs.hpp"
#include "texsynth/losses.hpp"

namespace texsynth::app {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline CheckResult gradient_check() {
  const auto arch = check::three_layer_architecture();
  const net::Network network(arch, net::random_weights(arch, 3));
  losses::LayerWeights weights;
  for (const auto& l : check::three_layer_stat_layers()) weights[l] = 1e9;
  const Image ex = check::random_image(8, 8, 3, 1);
  const losses::Terms terms{true, true, true};
  const auto targets = losses::make_targets(ex, network, terms, weights);
  const Image x = check::image_away_from_kinks(network, 8, 8, 3, 40, 1e-4);
  const auto report = losses::total_loss(x, terms, 1e5, targets, network);
  const auto numeric = check::finite_difference_gradient(
      [&](const std::vector<double>& v) { return losses::total_loss(Image(8, 8, 3, v), terms, 1e5, targets, network).total; },
      x.values(), 1e-6);
  const double err = check::relative_error(report.gradient.values(), numeric);
  return {"gradient", err < 1e-4, "relative error " + sci(err)};
}

inline CheckResult wiener_khinchin_check() {
  double worst = 0.0;
  for (int h = 1; h <= 6; ++h)
    for (int w = 1; w <= 6; ++w) {
      const Tensor f = check::random_tensor(1, h, w, std::uint64_t(h * 7 + w));
      const Tensor a = losses::autocorr_of({{"f", f}}).at("f");
      const auto fast = fft::inverse_real_2d({a.data.begin(), a.data.end()}, h, w);
      worst = std::max(worst, check::relative_error(fast, check::brute_force_autocorrelation(f.data, h, w)));
    }
  return {"wiener-khinchin", worst < 1e-10, "worst relative error " + sci(worst)};
}

inline CheckResult projection_check() {
  const Image ex = check::random_image(9, 7, 3, 1);
  const auto target = losses::make_spectrum_target(ex);
  const Image p1 = losses::spectrum_project(check::random_image(9, 7, 3, 2), target);
  const Image p2 = losses::spectrum_project(p1, target);
  const double drift = check::relative_error(p1.values(), p2.values());
  const Image two = losses::spectrum_project(Image(1, 2, 1, std::vector<double>{0.0, 2.0}),
                                             losses::make_spectrum_target(Image(1, 2, 1, std::vector<double>{1.0, 0.0})));
  const bool closed_form = two.at(0, 0, 0) == 0.0 && two.at(0, 1, 0) == 1.0;
  return {"projection", drift < 1e-9 && closed_form,
          "idempotence drift " + sci(drift) + (closed_form ? "" : ", two-point example wrong")};
}

inline CheckResult dwt_check() {
  eval::Plane img(64, 32);
  img.v = check::uniform_values(img.v.size(), 5, -1, 1);
  double worst = 0.0;
  for (int s = 1; s <= 5; ++s) {
    const auto back = eval::idwt2(eval::dwt2(img, s));
    for (std::size_t i = 0; i < img.v.size(); ++i) worst = std::max(worst, std::abs(back.v[i] - img.v[i]));
  }
  return {"dwt-reconstruction", worst < 1e-10, "max error " + sci(worst)};
}

inline CheckResult bradley_terry_check() {
  const auto fit = eval::bt_fit({{"a", "b", 3, 1}});
  const double err = std::abs(fit.strength(0) - fit.strength(1) - std::log(3.0));
  return {"bradley-terry", err < 1e-8, "two-method error " + sci(err)};
}

inline CheckResult lbfgs_check() {
  auto rosenbrock = [](std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const auto r = optim::minimize(rosenbrock, {-1.2, 1.0}, optim::LbfgsConfig{});
  const double err = std::max(std::abs(r.x[0] - 1.0), std::abs(r.x[1] - 1.0));
  return {"lbfgs-rosenbrock", err < 1e-6 && r.trace.iterations() < 200,
          std::to_string(r.trace.iterations()) + " iterations, error " + sci(err)};
}

}  // namespace detail

/// Runs the oracle-backed checks. An exception inside a check marks it failed.
inline std::vector<CheckResult> run_selftest() {
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> checks{
      {"gradient", detail::gradient_check},
      {"wiener-khinchin", detail::wiener_khinchin_check},
      {"projection", detail::projection_check},
      {"dwt-reconstruction", detail::dwt_check},
      {"bradley-terry", detail::bradley_terry_check},
      {"lbfgs-rosenbrock", detail::lbfgs_check},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : checks) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  }
  return out;
}

}  // namespace texsynth::app
