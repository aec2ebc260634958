#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "texsynth/check/oracles.hpp"
#include "texsynth/net.hpp"
#include "texsynth/weights_io.hpp"

using namespace texsynth;
using namespace texsynth::net;

namespace {

Network identity_conv_net(int channels) {
  Architecture arch("identity", channels, {conv("conv1", channels)});
  NetworkWeights w;
  ConvParams p;
  p.kernel.assign(std::size_t(channels) * channels * 9, 0.0);
  for (int c = 0; c < channels; ++c) p.kernel[(std::size_t(c) * channels + c) * 9 + 4] = 1.0;
  p.bias.assign(channels, 0.0);
  w.conv.push_back(p);
  return Network(arch, w);
}

Architecture small_net(PoolMode mode = PoolMode::Average) {
  return Architecture("small", 3,
                      {conv("conv1", 4), relu("relu1"), pool("pool1", mode), conv("conv2", 5), relu("relu2"),
                       pool("pool2", mode)});
}

// Random nonzero biases so that the affine parts are exercised too.
NetworkWeights with_random_bias(NetworkWeights w, std::uint64_t seed) {
  for (auto& p : w.conv) p.bias = check::uniform_values(p.bias.size(), seed++, -0.1, 0.1);
  return w;
}

double inner(const FeatureStack& a, const FeatureStack& b) {
  double s = 0.0;
  for (const auto& [name, t] : a) s += dot(t.data, b.at(name).data);
  return s;
}

FeatureStack random_cotangents(const Network& net, const Image& img, const std::set<std::string>& layers,
                               std::uint64_t seed) {
  FeatureStack out;
  for (auto& [name, f] : net.forward(img, layers)) {
    out[name] = check::random_tensor(f.channels, f.height, f.width, seed++);
  }
  return out;
}

}  // namespace

TEST(Forward, IdentityKernelReproducesInput) {
  const Network net = identity_conv_net(3);
  const Image img = check::random_image(6, 5, 3, 1);
  const auto f = net.forward(img, {"conv1"});
  EXPECT_EQ(to_image(f.at("conv1")), img);
}

TEST(Forward, ReluOfNegativeInputIsZero) {
  Architecture arch("neg", 1, {conv("conv1", 1), relu("relu1")});
  NetworkWeights w = random_weights(arch, 3);
  w.conv[0].kernel.assign(9, 0.0);
  w.conv[0].kernel[4] = -1.0;
  const Network net(arch, w);
  const auto f = net.forward(Image(4, 4, 1, 0.5), {"relu1"});
  for (double v : f.at("relu1").data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, PoolingHalvesSpatialDims) {
  const Network net(small_net(), random_weights(small_net(), 1));
  const auto f = net.forward(check::random_image(8, 8, 3, 2), {"pool1", "pool2"});
  EXPECT_EQ(f.at("pool1").height, 4);
  EXPECT_EQ(f.at("pool1").width, 4);
  EXPECT_EQ(f.at("pool2").height, 2);
  EXPECT_EQ(f.at("pool2").channels, 5);
}

TEST(Forward, PoolingLawOnOddSizes) {
  const Architecture arch = vgg_mini();
  const Network net(arch, random_weights(arch, 1));
  const auto f = net.forward(check::random_image(13, 21, 3, 2), {"pool1", "pool2", "pool3"});
  EXPECT_EQ(f.at("pool1").height, 7);
  EXPECT_EQ(f.at("pool1").width, 11);
  EXPECT_EQ(f.at("pool2").height, 4);
  EXPECT_EQ(f.at("pool3").height, 2);
  EXPECT_EQ(f.at("pool3").width, 3);
  EXPECT_EQ(arch.output_dims(arch.index_of("pool3"), 13, 21), std::pair(2, 3));
}

TEST(Forward, ReturnsExactlyTheWantedLayers) {
  const Network net(small_net(), random_weights(small_net(), 1));
  const auto f = net.forward(check::random_image(8, 8, 3, 2), {"conv1", "pool2"});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_TRUE(f.count("conv1"));
  EXPECT_TRUE(f.count("pool2"));
}

TEST(Forward, Errors) {
  const Network net(small_net(), random_weights(small_net(), 1));
  try {
    net.forward(check::random_image(8, 8, 3, 2), {"conv9"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownLayer);
  }
  try {
    net.forward(check::random_image(8, 8, 1, 2), {"conv1"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Backward, ZeroCotangentsGiveZeroGradient) {
  const Network net(small_net(), random_weights(small_net(), 4));
  const Image img = check::random_image(8, 8, 3, 5);
  FeatureStack cot;
  for (auto& [name, f] : net.forward(img, {"conv1", "pool2"})) cot[name] = Tensor(f.channels, f.height, f.width);
  for (double v : net.backward(img, cot).values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, IdentityKernelPassesCotangentThrough) {
  const Network net = identity_conv_net(3);
  const Image img = check::random_image(5, 6, 3, 1);
  const Tensor g = check::random_tensor(3, 5, 6, 9);
  const Image grad = net.backward(img, {{"conv1", g}});
  EXPECT_EQ(to_planar(grad), g);
}

TEST(Backward, ShapeMismatchIsRejected) {
  const Network net(small_net(), random_weights(small_net(), 4));
  const Image img = check::random_image(8, 8, 3, 5);
  try {
    net.backward(img, {{"pool1", Tensor(4, 3, 4)}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Backward, MatchesCentralDifferences) {
  for (PoolMode mode : {PoolMode::Average, PoolMode::Max}) {
    const Architecture arch = small_net(mode);
    const Network net(arch, with_random_bias(random_weights(arch, 10), 20));
    const std::set<std::string> layers{"conv1", "pool1", "pool2"};
    Image img;
    for (std::uint64_t seed = 100;; ++seed) {
      img = check::random_image(8, 8, 3, seed);
      if (check::kink_margin(net, img) > 1e-4) break;
    }
    const FeatureStack cot = random_cotangents(net, img, layers, 7);
    const Image analytic = net.backward(img, cot);
    auto scalar = [&](const std::vector<double>& x) {
      return inner(net.forward(Image(8, 8, 3, x), layers), cot);
    };
    const auto numeric = check::finite_difference_gradient(scalar, img.values(), 1e-6);
    EXPECT_LT(check::relative_error(analytic.values(), numeric), 1e-5) << "pool mode " << to_string(mode);
  }
}

TEST(Backward, AdjointOfLinearNetwork) {
  const Architecture arch("linear", 3, {conv("conv1", 4), pool("pool1"), conv("conv2", 6), pool("pool2")});
  const Network net(arch, random_weights(arch, 5));
  const std::set<std::string> layers{"conv1", "pool2"};
  const Image dx(10, 9, 3, check::uniform_values(270, 1, -1, 1));
  const FeatureStack y = random_cotangents(net, dx, layers, 50);
  const double lhs = inner(net.forward(dx, layers), y);
  const double rhs = dot(dx.values(), net.backward(dx, y).values());
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Backward, AdjointAwayFromKinks) {
  const Architecture arch = small_net(PoolMode::Max);
  const Network net(arch, with_random_bias(random_weights(arch, 8), 3));
  const std::set<std::string> layers{"relu1", "pool2"};
  Image x;
  for (std::uint64_t seed = 1;; ++seed) {
    x = check::random_image(12, 12, 3, seed);
    if (check::kink_margin(net, x) > 1e-3) break;
  }
  const auto dx = check::uniform_values(x.size(), 77, -1, 1);
  const double t = 1e-7;
  std::vector<double> xp = x.values(), xm = x.values();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    xp[i] += t * dx[i];
    xm[i] -= t * dx[i];
  }
  const FeatureStack y = random_cotangents(net, x, layers, 9);
  const double lhs = (inner(net.forward(Image(12, 12, 3, xp), layers), y) -
                      inner(net.forward(Image(12, 12, 3, xm), layers), y)) / (2 * t);
  const double rhs = dot(dx, net.backward(x, y).values());
  EXPECT_NEAR(lhs, rhs, 1e-6 * std::abs(rhs));
}

TEST(Backward, IndependentOfWorkerCount) {
  const Architecture arch = vgg_mini();
  const Network net(arch, random_weights(arch, 2));
  const Image img = check::random_image(16, 16, 3, 3);
  const FeatureStack y = random_cotangents(net, img, {"conv1_1", "pool3"}, 4);
  setenv("TEXSYNTH_THREADS", "1", 1);
  const Image a = net.backward(img, y);
  const auto fa = net.forward(img, {"pool3"});
  setenv("TEXSYNTH_THREADS", "3", 1);
  const Image b = net.backward(img, y);
  const auto fb = net.forward(img, {"pool3"});
  unsetenv("TEXSYNTH_THREADS");
  EXPECT_EQ(a, b);
  EXPECT_EQ(fa, fb);
}

TEST(RandomWeights, DeterministicInSeed) {
  const Architecture arch = vgg_mini();
  EXPECT_EQ(random_weights(arch, 17), random_weights(arch, 17));
  EXPECT_NE(random_weights(arch, 17).conv[0].kernel, random_weights(arch, 18).conv[0].kernel);
}

TEST(RandomWeights, ActivationScaleIsPreservedAcrossDepth) {
  const Architecture arch("deep5", 3,
                          {conv("c1", 16), relu("r1"), conv("c2", 16), relu("r2"), pool("p1"), conv("c3", 32),
                           relu("r3"), pool("p2"), conv("c4", 32), relu("r4"), pool("p3"), conv("c5", 64)});
  const Network net(arch, random_weights(arch, 12));
  check::GaussianNoise noise(5);
  Image img(64, 64, 3);
  for (double& v : img.values()) v = noise();
  const auto f = net.forward(img, {"c1", "c2", "c3", "c4", "c5"});
  for (const auto& [name, t] : f) {
    double mean = 0.0, sq = 0.0;
    for (double v : t.data) mean += v;
    mean /= double(t.size());
    for (double v : t.data) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / double(t.size()));
    EXPECT_GE(sd, 0.3) << name;
    EXPECT_LE(sd, 3.0) << name;
  }
}

TEST(Architecture, JsonRoundTrip) {
  const Architecture arch = vgg_mini(PoolMode::Max);
  const auto j = to_json(arch);
  EXPECT_EQ(architecture_from_json(nlohmann::json::parse(j.dump())), arch);
}

TEST(Architecture, RejectsUnknownKeysAndDuplicates) {
  auto j = nlohmann::json::parse(to_json(vgg_mini()).dump());
  j["layers"][0]["stride"] = 2;
  EXPECT_THROW(architecture_from_json(j), Error);
  EXPECT_THROW(Architecture("dup", 3, {conv("a", 2), relu("a")}), Error);
}

TEST(WeightsIo, RoundTripIsLossless) {
  const Architecture arch = small_net();
  const NetworkWeights w = with_random_bias(random_weights(arch, 31), 1);
  const auto path = std::filesystem::temp_directory_path() / "texsynth_weights_test.ntwf";
  save_weights(arch, w, path);
  EXPECT_EQ(load_weights(path, arch), w);
  std::filesystem::remove(path);
}

TEST(WeightsIo, DetectsCorruption) {
  const Architecture arch = small_net();
  auto bytes = encode_weights(arch, random_weights(arch, 31));
  bytes[bytes.size() / 2] ^= 0x40;
  try {
    decode_weights(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChecksumMismatch);
  }
  bytes.resize(bytes.size() - 20);
  EXPECT_THROW(decode_weights(bytes), Error);
  EXPECT_THROW(decode_weights({'X', 'Y'}), Error);
}

TEST(WeightsIo, RejectsOtherArchitecture) {
  const Architecture arch = small_net();
  const auto path = std::filesystem::temp_directory_path() / "texsynth_weights_mismatch.ntwf";
  save_weights(arch, random_weights(arch, 1), path);
  try {
    load_weights(path, vgg_mini());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  std::filesystem::remove(path);
}

TEST(WeightsIo, FileStartsWithMagicAndVersion) {
  const Architecture arch = small_net();
  const auto bytes = encode_weights(arch, random_weights(arch, 2));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NTWF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
}
