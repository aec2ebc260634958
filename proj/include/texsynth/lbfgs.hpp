#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "texsynth/error.hpp"

// Unconstrained limited-memory BFGS with a strong-Wolfe line search
// (bracketing + cubic-interpolation zoom).

namespace texsynth::optim {

struct LbfgsConfig {
  int history = 10;
  int max_iter = 2000;  // accepted iterations
  double c1 = 1e-4;
  double c2 = 0.9;
  double grad_tol = 1e-8;  // on the max-norm of the gradient
  double initial_step = 1.0;
  int max_line_search_evals = 40;

  void validate() const {
    if (history < 1) fail(ErrorCode::InvalidArgument, "L-BFGS history must be >= 1");
    if (max_iter < 0) fail(ErrorCode::InvalidArgument, "max_iter must be >= 0");
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) fail(ErrorCode::InvalidArgument, "need 0 < c1 < c2 < 1");
    if (!(grad_tol >= 0.0) || !(initial_step > 0.0)) fail(ErrorCode::InvalidArgument, "bad tolerance or step");
  }
};

enum class Termination { MaxIter, GradTol, LineSearchFailure };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxIter: return "max_iter";
    case Termination::GradTol: return "grad_tol";
    case Termination::LineSearchFailure: return "line_search_failure";
  }
  return "?";
}

struct OptTrace {
  std::vector<double> values;  // f(x0), then f after each accepted step
  Termination reason = Termination::MaxIter;
  int evaluations = 0;

  int iterations() const noexcept { return int(values.size()) - 1; }
};

struct OptResult {
  std::vector<double> x;
  OptTrace trace;
};

/// Returns f(x) and writes the gradient into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// Called once per accepted step, right after the objective evaluation at the
/// accepted point.
using IterationCallback = std::function<void(int iteration, std::span<const double> x, double value)>;

/// Raised when the objective returns NaN/Inf; carries the last accepted iterate.
class NonFiniteObjective : public Error {
 public:
  NonFiniteObjective(std::vector<double> last_good, OptTrace trace)
      : Error(ErrorCode::NonFiniteObjective, "objective returned a non-finite value or gradient"),
        last_good_(std::move(last_good)),
        trace_(std::move(trace)) {}

  const std::vector<double>& last_good() const noexcept { return last_good_; }
  const OptTrace& trace() const noexcept { return trace_; }

 private:
  std::vector<double> last_good_;
  OptTrace trace_;
};

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;  // 1 / (y . s)
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// Minimizer of the cubic matching values and slopes at a and b; nullopt-like
// NaN when the cubic has no real minimizer.
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::nan("");
  const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::nan("");
  return b - (b - a) * (db + d2 - d1) / denom;
}

}  // namespace detail

/// H * g via the two-loop recursion over pairs (oldest first), with initial
/// inverse Hessian gamma * I, gamma = s.y / y.y of the newest pair.
inline std::vector<double> two_loop(std::span<const double> g, const std::deque<CurvaturePair>& pairs) {
  std::vector<double> q(g.begin(), g.end());
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    alpha[k] = pairs[k].rho * detail::dot(pairs[k].s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * pairs[k].y[i];
  }
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    const double gamma = detail::dot(last.s, last.y) / detail::dot(last.y, last.y);
    for (double& v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double beta = pairs[k].rho * detail::dot(pairs[k].y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * pairs[k].s[i];
  }
  return q;
}

namespace detail {

struct Point {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const LbfgsConfig& cfg, std::span<const double> x,
             std::span<const double> dir, Point origin, OptTrace& trace,
             const std::vector<double>& last_good)
      : f_(f), cfg_(cfg), x_(x), dir_(dir), origin_(origin), trace_(trace), last_good_(last_good),
        trial_x_(x.size()), trial_g_(x.size()) {}

  // On success, trial_x()/trial_g() hold the accepted point.
  bool run(double alpha0, Point& accepted) {
    Point prev = origin_;
    double alpha = alpha0;
    for (int i = 0; evals_ < cfg_.max_line_search_evals; ++i) {
      const Point cur = eval(alpha);
      if (cur.value > origin_.value + cfg_.c1 * cur.alpha * origin_.slope || (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, accepted);
      }
      if (std::abs(cur.slope) <= -cfg_.c2 * origin_.slope) return accept(cur, accepted);
      if (cur.slope >= 0.0) return zoom(cur, prev, accepted);
      prev = cur;
      alpha *= 2.0;
    }
    return false;
  }

  std::vector<double>& trial_x() { return trial_x_; }
  std::vector<double>& trial_g() { return trial_g_; }

 private:
  Point eval(double alpha) {
    for (std::size_t i = 0; i < x_.size(); ++i) trial_x_[i] = x_[i] + alpha * dir_[i];
    const double v = f_(trial_x_, trial_g_);
    ++evals_;
    ++trace_.evaluations;
    if (!std::isfinite(v) || !all_finite(trial_g_)) throw NonFiniteObjective(last_good_, trace_);
    return {alpha, v, dot(trial_g_, dir_)};
  }

  bool accept(const Point& p, Point& accepted) {
    if (!(p.value < origin_.value)) return false;
    accepted = p;
    return true;
  }

  bool zoom(Point lo, Point hi, Point& accepted) {
    while (evals_ < cfg_.max_line_search_evals) {
      const double a = std::min(lo.alpha, hi.alpha), b = std::max(lo.alpha, hi.alpha);
      const double width = b - a;
      if (width <= 1e-16 * std::max(1.0, b)) return false;
      double alpha = cubic_minimizer(lo.alpha, lo.value, lo.slope, hi.alpha, hi.value, hi.slope);
      if (!std::isfinite(alpha) || alpha < a + 0.1 * width || alpha > b - 0.1 * width) alpha = 0.5 * (a + b);
      const Point cur = eval(alpha);
      if (cur.value > origin_.value + cfg_.c1 * cur.alpha * origin_.slope || cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -cfg_.c2 * origin_.slope) return accept(cur, accepted);
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    return false;
  }

  const Objective& f_;
  const LbfgsConfig& cfg_;
  std::span<const double> x_;
  std::span<const double> dir_;
  Point origin_;
  OptTrace& trace_;
  const std::vector<double>& last_good_;
  std::vector<double> trial_x_;
  std::vector<double> trial_g_;
  int evals_ = 0;
};

}  // namespace detail

/// Minimizes f from x0. The first step (and any steepest-descent restart)
/// tries alpha = min(initial_step, 1/||g||); later steps try initial_step.
/// After a line-search failure the history is dropped and one steepest-descent
/// step is attempted; a second consecutive failure terminates.
inline OptResult minimize(const Objective& f, std::vector<double> x0, const LbfgsConfig& cfg,
                          const IterationCallback& on_step = {}) {
  cfg.validate();
  if (!detail::all_finite(x0)) fail(ErrorCode::InvalidArgument, "initial point is not finite");
  OptResult res;
  res.x = std::move(x0);
  std::vector<double> g(res.x.size());
  double value = f(res.x, g);
  res.trace.evaluations = 1;
  if (!std::isfinite(value) || !detail::all_finite(g)) throw NonFiniteObjective(res.x, res.trace);
  res.trace.values.push_back(value);

  std::deque<CurvaturePair> pairs;
  bool restarted = false;
  std::vector<double> dir(res.x.size());
  for (int iter = 0;;) {
    if (detail::max_abs(g) <= cfg.grad_tol) {
      res.trace.reason = Termination::GradTol;
      break;
    }
    if (iter >= cfg.max_iter) {
      res.trace.reason = Termination::MaxIter;
      break;
    }
    dir = two_loop(g, pairs);
    for (double& d : dir) d = -d;
    double slope = detail::dot(g, dir);
    if (!(slope < 0.0)) {
      pairs.clear();
      for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = -g[i];
      slope = detail::dot(g, dir);
    }
    const double alpha0 = pairs.empty() ? std::min(cfg.initial_step, 1.0 / detail::norm2(g)) : cfg.initial_step;

    detail::LineSearch search(f, cfg, res.x, dir, {0.0, value, slope}, res.trace, res.x);
    detail::Point accepted;
    if (!search.run(alpha0, accepted)) {
      if (pairs.empty() || restarted) {
        res.trace.reason = Termination::LineSearchFailure;
        break;
      }
      pairs.clear();
      restarted = true;
      continue;
    }
    restarted = false;

    CurvaturePair pair;
    pair.s.resize(res.x.size());
    pair.y.resize(res.x.size());
    for (std::size_t i = 0; i < res.x.size(); ++i) {
      pair.s[i] = search.trial_x()[i] - res.x[i];
      pair.y[i] = search.trial_g()[i] - g[i];
    }
    const double sy = detail::dot(pair.s, pair.y);
    if (sy > 1e-10 * detail::norm2(pair.s) * detail::norm2(pair.y)) {
      pair.rho = 1.0 / sy;
      pairs.push_back(std::move(pair));
      if (int(pairs.size()) > cfg.history) pairs.pop_front();
    }
    res.x.swap(search.trial_x());
    g.swap(search.trial_g());
    value = accepted.value;
    res.trace.values.push_back(value);
    ++iter;
    if (on_step) on_step(iter, res.x, value);
  }
  return res;
}

}  // namespace texsynth::optim
