#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <numbers>
#include <random>

#include "texsynth/check/oracles.hpp"
#include "texsynth/eval/klw.hpp"

using namespace texsynth;
using namespace texsynth::eval;

namespace {

Plane random_plane(int h, int w, std::uint64_t seed) {
  Plane p(h, w);
  p.v = check::uniform_values(p.v.size(), seed, -1, 1);
  return p;
}

// KL(p || q) by numerical integration; both densities are even in x.
double kl_quadrature(const GgdParams& p, const GgdParams& q) {
  auto log_pdf = [](const GgdParams& g, double x) {
    return std::log(g.beta / (2.0 * g.alpha)) - std::lgamma(1.0 / g.beta) - std::pow(x / g.alpha, g.beta);
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  const auto f = [&](double x) {
    const double lp = log_pdf(p, x);
    const double density = std::exp(lp);
    return density == 0.0 ? 0.0 : density * (lp - log_pdf(q, x));
  };
  return 2.0 * integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
}

}  // namespace

TEST(Db4Filter, OrthonormalWithFourVanishingMoments) {
  const auto& h = kDb4Lowpass;
  const auto g = db4_highpass();
  double sum = 0.0;
  for (double v : h) sum += v;
  EXPECT_NEAR(sum, std::numbers::sqrt2, 1e-14);
  for (int shift = 0; shift < 8; shift += 2) {
    double hh = 0.0, hg = 0.0;
    for (int k = 0; k + shift < 8; ++k) {
      hh += h[k] * h[k + shift];
      hg += h[k] * g[k + shift] + g[k] * h[k + shift];
    }
    EXPECT_NEAR(hh, shift == 0 ? 1.0 : 0.0, 1e-14) << shift;
  }
  for (int m = 0; m < 4; ++m) {
    double moment = 0.0;
    for (int k = 0; k < 8; ++k) moment += std::pow(double(k), m) * g[k];
    EXPECT_NEAR(moment, 0.0, 1e-10) << m;
  }
}

TEST(Dwt2, PerfectReconstructionAtEveryScaleCount) {
  for (int scales = 1; scales <= 5; ++scales) {
    const Plane img = random_plane(64, 32, std::uint64_t(scales));
    const Plane back = idwt2(dwt2(img, scales));
    ASSERT_EQ(back.v.size(), img.v.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < img.v.size(); ++i) worst = std::max(worst, std::abs(back.v[i] - img.v[i]));
    EXPECT_LT(worst, 1e-10) << scales;
  }
}

TEST(Dwt2, EnergyPreserved) {
  const Plane img = random_plane(32, 32, 9);
  const auto w = dwt2(img, 3);
  double e_in = 0.0, e_out = 0.0;
  for (double v : img.v) e_in += v * v;
  for (const auto& d : w.details)
    for (const Plane* p : {&d.lh, &d.hl, &d.hh})
      for (double v : p->v) e_out += v * v;
  for (double v : w.approx.v) e_out += v * v;
  EXPECT_NEAR(e_out, e_in, 1e-12 * e_in);
}

TEST(Dwt2, ConstantImageHasZeroDetails) {
  Plane img(32, 16, 0.37);
  const auto w = dwt2(img, 3);
  for (const auto& d : w.details)
    for (const Plane* p : {&d.lh, &d.hl, &d.hh})
      for (double v : p->v) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(w.approx.height, 4);
  EXPECT_EQ(w.approx.width, 2);
}

TEST(Dwt2, SingleScaleMatchesFilterBank) {
  Plane ramp(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp(y, x) = 0.5 * y + 0.25 * x + 0.1 * x * y;
  const auto& h = kDb4Lowpass;
  const auto g = db4_highpass();
  const auto w = dwt2(ramp, 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double ll = 0, lh = 0, hl = 0, hh = 0;
      for (int k = 0; k < 8; ++k)
        for (int l = 0; l < 8; ++l) {
          const double v = ramp((2 * i + k) % 8, (2 * j + l) % 8);
          ll += h[k] * h[l] * v;
          lh += g[k] * h[l] * v;  // highpass down rows, lowpass across columns
          hl += h[k] * g[l] * v;
          hh += g[k] * g[l] * v;
        }
      EXPECT_NEAR(w.approx(i, j), ll, 1e-12);
      EXPECT_NEAR(w.details[0].lh(i, j), lh, 1e-12);
      EXPECT_NEAR(w.details[0].hl(i, j), hl, 1e-12);
      EXPECT_NEAR(w.details[0].hh(i, j), hh, 1e-12);
    }
}

TEST(Dwt2, RejectsBadSizes) {
  EXPECT_THROW(dwt2(Plane(12, 16), 3), Error);
  EXPECT_THROW(dwt2(Plane(16, 16), 0), Error);
  EXPECT_NO_THROW(dwt2(Plane(16, 16), 4));
}

TEST(Ggd, GaussianSamples) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> dist(0.0, 1.5);
  std::vector<double> s(100000);
  for (double& v : s) v = dist(gen);
  const auto p = fit_ggd(s);
  EXPECT_NEAR(p.beta, 2.0, 0.1);
  EXPECT_NEAR(p.alpha, 1.5 * std::numbers::sqrt2, 0.05 * 1.5 * std::numbers::sqrt2);
  EXPECT_FALSE(p.clamped);
}

TEST(Ggd, LaplaceSamples) {
  std::mt19937_64 gen(2);
  std::exponential_distribution<double> expo(1.0 / 0.7);
  std::vector<double> s(100000);
  for (double& v : s) v = (gen() & 1 ? 1.0 : -1.0) * expo(gen);
  const auto p = fit_ggd(s);
  EXPECT_NEAR(p.beta, 1.0, 0.05);
  EXPECT_NEAR(p.alpha, 0.7, 0.05 * 0.7);
}

TEST(Ggd, ErrorsAndClamping) {
  try {
    fit_ggd(std::vector<double>(64, 3.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSample);
  }
  EXPECT_THROW(fit_ggd(std::vector<double>(31, 1.0)), Error);
  std::vector<double> two_point(64);
  for (std::size_t i = 0; i < two_point.size(); ++i) two_point[i] = i % 2 ? 1.0 : -1.0;
  const auto p = fit_ggd(two_point);
  EXPECT_TRUE(p.clamped);
  EXPECT_EQ(p.beta, kShapeMax);
}

TEST(KlGgd, SelfIsZero) {
  for (double b : {0.3, 1.0, 2.0, 7.5}) EXPECT_EQ(kl_ggd({1.3, b}, {1.3, b}), 0.0);
}

TEST(KlGgd, GaussianClosedForm) {
  for (auto [sp, sq] : {std::pair{1.0, 2.0}, std::pair{0.3, 0.2}, std::pair{5.0, 5.5}}) {
    const double expected = std::log(sq / sp) + sp * sp / (2 * sq * sq) - 0.5;
    EXPECT_NEAR(kl_ggd({sp * std::numbers::sqrt2, 2.0}, {sq * std::numbers::sqrt2, 2.0}), expected, 1e-14);
  }
}

TEST(KlGgd, MatchesQuadratureOnGrid) {
  const double shapes[5] = {0.5, 1.0, 1.7, 3.0, 6.0};
  const std::pair<double, double> others[5] = {{0.5, 0.8}, {1.0, 2.0}, {2.0, 1.2}, {0.7, 4.0}, {3.0, 0.6}};
  for (double bp : shapes)
    for (auto [aq, bq] : others) {
      const GgdParams p{1.0, bp}, q{aq, bq};
      const double closed = kl_ggd(p, q), numeric = kl_quadrature(p, q);
      EXPECT_NEAR(closed, numeric, 1e-6 * std::max(1.0, numeric)) << bp << " " << aq << " " << bq;
    }
}

TEST(KlGgd, NonNegativeOnGrid) {
  for (double bp = 0.3; bp <= 8.0; bp *= 1.5)
    for (double bq = 0.3; bq <= 8.0; bq *= 1.5)
      for (double ratio = 0.1; ratio <= 10.0; ratio *= 1.7) EXPECT_GE(kl_ggd({1.0, bp}, {ratio, bq}), 0.0);
  EXPECT_THROW(kl_ggd({0.0, 1.0}, {1.0, 1.0}), Error);
}

TEST(Klw, IdenticalImagesGiveZero) {
  const Image a = check::wave_texture(128, 128, 1);
  const auto r = texture_distance_klw(a, a, 4);
  EXPECT_EQ(r.aggregate, 0.0);
  EXPECT_EQ(r.log_score, kZeroKlLog);
  EXPECT_EQ(r.subbands.size(), 12u);
  for (const auto& s : r.subbands) EXPECT_EQ(s.kl, 0.0);
}

TEST(Klw, IncreasesWithNoiseAmplitude) {
  const Image a = check::wave_texture(128, 128, 2);
  check::GaussianNoise noise(5);
  std::vector<double> n(a.size());
  for (double& v : n) v = noise();
  double prev = 0.0;
  for (double amp : {0.01, 0.03, 0.1}) {
    std::vector<double> v = a.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += amp * n[i];
    const double d = texture_distance_klw(a, Image(128, 128, 3, v), 4).aggregate;
    EXPECT_GT(d, prev) << amp;
    prev = d;
  }
}

TEST(Klw, Asymmetric) {
  const Image a = check::wave_texture(64, 64, 3);
  const Image b = check::random_image(64, 64, 3, 4);
  EXPECT_NE(texture_distance_klw(a, b, 3).aggregate, texture_distance_klw(b, a, 3).aggregate);
}

TEST(Klw, DefaultScalesSkipTinySubbandsAndCrop) {
  const Image a = check::random_image(260, 270, 1, 1);
  const Image b = check::random_image(256, 256, 1, 2);
  const auto r = texture_distance_klw(a, b);
  // 256 / 2^5 = 8 -> 64 coefficients; deeper levels have at most 16.
  EXPECT_EQ(r.subbands.size(), 15u);
  EXPECT_EQ(r.skipped.size(), 9u);
  EXPECT_GT(r.aggregate, 0.0);
  EXPECT_NEAR(r.log_score, std::log(r.aggregate), 1e-15);
  EXPECT_THROW(texture_distance_klw(check::random_image(100, 300, 1, 1), b), Error);
}

TEST(Klw, ConstantImagesSkipped) {
  const Image flat(32, 32, 3, 0.5);
  const auto r = texture_distance_klw(flat, check::random_image(32, 32, 3, 1), 2);
  EXPECT_TRUE(r.subbands.empty());
  EXPECT_EQ(r.skipped.size(), 6u);
  EXPECT_EQ(r.log_score, kZeroKlLog);
}
