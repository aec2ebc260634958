#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "texsynth/error.hpp"

namespace texsynth::eval {

/// Aggregated outcomes between two methods.
struct DuelRecord {
  std::string method_i;
  std::string method_j;
  long wins_ij = 0;
  long wins_ji = 0;
};

/// One row of a duel CSV.
struct Duel {
  std::string method_a;
  std::string method_b;
  bool a_won = true;
  std::string image_id;
  std::string scale;  // "global" or "local"
};

using DuelDataset = std::vector<DuelRecord>;

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses `method_a,method_b,winner,image_id,scale` rows (header required).
inline std::vector<Duel> parse_duel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::MalformedFile, "duel CSV is empty");
  const std::vector<std::string> expected{"method_a", "method_b", "winner", "image_id", "scale"};
  if (detail::split_csv_line(detail::trim(line)) != expected)
    fail(ErrorCode::MalformedFile, "duel CSV header must be method_a,method_b,winner,image_id,scale");
  std::vector<Duel> out;
  for (int row = 2; std::getline(in, line); ++row) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = "duel CSV line " + std::to_string(row);
    if (f.size() != 5) fail(ErrorCode::MalformedFile, where + ": expected 5 fields");
    if (f[0].empty() || f[1].empty() || f[0] == f[1]) fail(ErrorCode::MalformedFile, where + ": bad method names");
    if (f[2] != "a" && f[2] != "b") fail(ErrorCode::MalformedFile, where + ": winner must be 'a' or 'b'");
    if (f[4] != "global" && f[4] != "local") fail(ErrorCode::MalformedFile, where + ": scale must be global or local");
    out.push_back({f[0], f[1], f[2] == "a", f[3], f[4]});
  }
  return out;
}

/// Parses `image_id,class` rows (header optional) into a lookup table.
inline std::map<std::string, std::string> parse_image_classes(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  for (int row = 1; std::getline(in, line); ++row) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 2) fail(ErrorCode::MalformedFile, "image class line " + std::to_string(row) + ": expected 2 fields");
    if (row == 1 && f[0] == "image_id") continue;
    out[f[0]] = f[1];
  }
  return out;
}

/// Sums individual duels into one record per unordered method pair.
inline DuelDataset aggregate_duels(const std::vector<Duel>& duels) {
  std::map<std::pair<std::string, std::string>, DuelRecord> table;
  for (const auto& d : duels) {
    const bool swap = d.method_b < d.method_a;
    const std::string& i = swap ? d.method_b : d.method_a;
    const std::string& j = swap ? d.method_a : d.method_b;
    auto& rec = table[{i, j}];
    rec.method_i = i;
    rec.method_j = j;
    const bool i_won = d.a_won != swap;
    (i_won ? rec.wins_ij : rec.wins_ji) += 1;
  }
  DuelDataset out;
  for (auto& [_, r] : table) out.push_back(std::move(r));
  return out;
}

inline double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

struct BtFit {
  std::vector<std::string> methods;  // sorted
  Eigen::VectorXd strength;          // sums to zero
  Eigen::MatrixXd covariance;        // pseudo-inverse of the information matrix
  int iterations = 0;

  int size() const noexcept { return int(methods.size()); }
  int index_of(const std::string& m) const {
    const auto it = std::find(methods.begin(), methods.end(), m);
    if (it == methods.end()) fail(ErrorCode::InvalidArgument, "unknown method '" + m + "'");
    return int(it - methods.begin());
  }
  double prob(int i, int j) const { return sigmoid(strength(i) - strength(j)); }
  double sigma(int i, int j) const {
    return std::sqrt(std::max(0.0, covariance(i, i) + covariance(j, j) - 2.0 * covariance(i, j)));
  }
  double standard_error(int i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

inline constexpr double kSeparationNorm = 30.0;

/// Maximum-likelihood strengths under p_ij = sigmoid(b_i - b_j) with sum(b) = 0,
/// by damped Newton iterations until the gradient max-norm drops below 1e-10.
inline BtFit bt_fit(const DuelDataset& data) {
  std::set<std::string> names;
  for (const auto& r : data) {
    if (r.wins_ij < 0 || r.wins_ji < 0) fail(ErrorCode::InvalidArgument, "duel counts must be >= 0");
    if (r.method_i == r.method_j) fail(ErrorCode::InvalidArgument, "a method cannot duel itself");
    if (r.wins_ij + r.wins_ji == 0) continue;
    names.insert(r.method_i);
    names.insert(r.method_j);
  }
  BtFit fit;
  fit.methods.assign(names.begin(), names.end());
  const int n = fit.size();
  if (n < 2) fail(ErrorCode::DisconnectedGraph, "need duels between at least two methods");
  Eigen::MatrixXd wins = Eigen::MatrixXd::Zero(n, n);
  for (const auto& r : data) {
    if (r.wins_ij + r.wins_ji == 0) continue;
    const int i = fit.index_of(r.method_i), j = fit.index_of(r.method_j);
    wins(i, j) += double(r.wins_ij);
    wins(j, i) += double(r.wins_ji);
  }
  const Eigen::MatrixXd games = wins + wins.transpose();

  auto reaches_all = [n](const Eigen::MatrixXd& edges) {
    std::vector<int> stack{0};
    std::vector<bool> seen(n, false);
    seen[0] = true;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j)
        if (!seen[j] && edges(i, j) > 0) {
          seen[j] = true;
          stack.push_back(j);
        }
    }
    return std::find(seen.begin(), seen.end(), false) == seen.end();
  };
  if (!reaches_all(games)) fail(ErrorCode::DisconnectedGraph, "comparison graph is not connected");
  // A finite maximizer exists iff every method beats someone who (transitively)
  // beats it, i.e. the directed win graph is strongly connected.
  if (!reaches_all(wins) || !reaches_all(wins.transpose()))
    fail(ErrorCode::SeparationDivergence, "strengths diverge: some group of methods wins or loses every comparison");

  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (wins(i, j) > 0) ll += wins(i, j) * std::log(sigmoid(b(i) - b(j)));
    return ll;
  };
  // Information matrix (Hessian of the negative log-likelihood), a weighted Laplacian.
  auto information = [&](const Eigen::VectorXd& b) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || games(i, j) == 0) continue;
        const double p = sigmoid(b(i) - b(j));
        h(i, j) = -games(i, j) * p * (1.0 - p);
        h(i, i) += games(i, j) * p * (1.0 - p);
      }
    return h;
  };
  const Eigen::MatrixXd centering = Eigen::MatrixXd::Constant(n, n, 1.0 / n);

  auto gradient = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd grad(n);
    for (int i = 0; i < n; ++i) {
      double g = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) g += wins(i, j) - games(i, j) * sigmoid(b(i) - b(j));
      grad(i) = g;
    }
    return grad;
  };

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  double ll = loglik(b);
  for (int it = 0;; ++it) {
    const Eigen::VectorXd grad = gradient(b);
    fit.iterations = it;
    if (grad.cwiseAbs().maxCoeff() < 1e-10) {
      // Newton converges quadratically here; a couple of undamped steps take
      // the score down to rounding level.
      double gmax = grad.cwiseAbs().maxCoeff();
      for (int polish = 0; polish < 3; ++polish) {
        Eigen::VectorXd next = b + (information(b) + centering).ldlt().solve(gradient(b));
        next.array() -= next.mean();
        const double g = gradient(next).cwiseAbs().maxCoeff();
        if (!(g < gmax)) break;
        b = next;
        gmax = g;
      }
      break;
    }
    if (b.norm() > kSeparationNorm)
      fail(ErrorCode::SeparationDivergence, "strengths diverge: a method wins or loses every comparison");
    if (it >= 500) break;
    // The gradient sums to zero, so the step stays in the sum-zero subspace.
    Eigen::VectorXd step = (information(b) + centering).ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = b + step;
    double next_ll = loglik(next);
    // Close to the optimum the log-likelihood cannot resolve the remaining
    // improvement, so a full step that shrinks the score is taken as is.
    if (next_ll < ll && gradient(next).cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff()) next_ll = ll;
    while (next_ll < ll && t > 1e-12) {
      t *= 0.5;
      next = b + t * step;
      next_ll = loglik(next);
    }
    if (!(next_ll >= ll)) break;  // no further ascent possible in floating point
    b = next;
    b.array() -= b.mean();
    ll = next_ll;
  }
  fit.strength = b;
  fit.covariance = (information(b) + centering).inverse() - centering;
  return fit;
}

enum class Verdict { Wins, Loses, NotSignificant };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Wins: return "wins";
    case Verdict::Loses: return "loses";
    case Verdict::NotSignificant: return "not-significant";
  }
  return "?";
}

inline constexpr double kSignificanceZ = 1.96;

inline Verdict verdict(double delta, double sigma) {
  if (std::abs(delta) > kSignificanceZ * sigma) return delta > 0 ? Verdict::Wins : Verdict::Loses;
  return Verdict::NotSignificant;
}

/// Row i, column j: whether method i beats method j.
inline std::vector<std::vector<Verdict>> bt_significance(const BtFit& fit) {
  const int n = fit.size();
  std::vector<std::vector<Verdict>> out(n, std::vector<Verdict>(n, Verdict::NotSignificant));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) out[i][j] = verdict(fit.strength(i) - fit.strength(j), fit.sigma(i, j));
  return out;
}

struct WinningProb {
  double w = 0.0;      // mean probability of beating another method
  double sigma = 0.0;  // its standard error
};

/// W_i = mean_j p_ij and, treating the p_ij as independent with delta-method
/// errors p(1-p) sigma_ij, Sigma_i = sqrt(sum_j se_ij^2) / (N - 1).
inline std::vector<WinningProb> bt_winning_prob(const BtFit& fit) {
  const int n = fit.size();
  std::vector<WinningProb> out(n);
  for (int i = 0; i < n; ++i) {
    double w = 0.0, var = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double p = fit.prob(i, j);
      w += p;
      const double se = p * (1.0 - p) * fit.sigma(i, j);
      var += se * se;
    }
    out[i] = {w / (n - 1), std::sqrt(var) / (n - 1)};
  }
  return out;
}

}  // namespace texsynth::eval
