#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "texsynth/app/commands.hpp"
#include "texsynth/app/selftest.hpp"
#include "texsynth/check/oracles.hpp"

using namespace texsynth;
using namespace texsynth::app;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("texsynth_app_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig small_synth(const TempDir& dir) {
  write_image(check::wave_texture(32, 32, 1), dir / "ex.ppm");
  SynthConfig cfg;
  cfg.exemplar = (dir / "ex.ppm").string();
  cfg.out = (dir / "out.ppm").string();
  cfg.K = 1;
  cfg.max_iter = 8;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Config, CanonicalRoundTrip) {
  SynthConfig c;
  c.exemplar = "a.ppm";
  c.out = "b.ppm";
  c.layers = {"conv1_1", "pool2"};
  c.net.weight_seed = 99;
  const auto text = c.to_json().dump();
  const auto back = SynthConfig::from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.to_json().dump(), text);

  // A sparse file parses to defaults and serializes to the full canonical form.
  const auto sparse = SynthConfig::from_json(nlohmann::json::parse(R"({"seed": 4, "lbfgs": {"max_iter": 7}})"));
  EXPECT_EQ(sparse.seed, 4u);
  EXPECT_EQ(sparse.max_iter, 7);
  EXPECT_EQ(sparse.variant, "gram+spectrum+msinit");
  EXPECT_EQ(SynthConfig::from_json(nlohmann::json::parse(sparse.to_json().dump())).to_json(), sparse.to_json());

  EvalConfig e;
  e.synth = {"x=y.ppm"};
  EXPECT_EQ(EvalConfig::from_json(nlohmann::json::parse(e.to_json().dump())), e);
  BtConfig b;
  b.filters = {"scale=local"};
  EXPECT_EQ(BtConfig::from_json(nlohmann::json::parse(b.to_json().dump())), b);
  ProjectConfig p;
  p.bit_depth = 8;
  EXPECT_EQ(ProjectConfig::from_json(nlohmann::json::parse(p.to_json().dump())), p);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  for (const char* text : {R"({"sed": 1})", R"({"lbfgs": {"c3": 1}})", R"({"net": {"depth": 3}})",
                           R"({"seed": "seven"})", R"({"lbfgs": 3})", R"([1, 2])"}) {
    try {
      SynthConfig::from_json(nlohmann::json::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument) << text;
    }
  }
  EXPECT_THROW(EvalConfig::from_json(nlohmann::json::parse(R"({"patches": 3})")), Error);
  EXPECT_THROW(BtConfig::from_json(nlohmann::json::parse(R"({"filter": []})")), Error);
}

TEST(Config, Validation) {
  SynthConfig c;
  EXPECT_THROW(c.validate(), Error);
  c.exemplar = "a";
  c.out = "b";
  EXPECT_NO_THROW(c.validate());
  c.bit_depth = 12;
  EXPECT_THROW(c.validate(), Error);
  c.bit_depth = 8;
  c.variant = "msinit";
  EXPECT_THROW(c.validate(), Error);
  c.variant = "gram";
  c.net.pool = "median";
  EXPECT_THROW(c.validate(), Error);
}

TEST(Hash, KnownDigests) {
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(FormatReal, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.0, -2.5, 0.0}) EXPECT_EQ(std::strtod(format_real(v).c_str(), nullptr), v);
  EXPECT_EQ(format_real(0.25), "0.25");
}

TEST(SynthJob, WritesArtifactsAndIsByteDeterministic) {
  TempDir dir;
  const SynthConfig cfg = small_synth(dir);
  const auto first = run_synth(cfg);
  const std::string image = slurp(dir / "out.ppm"), session = slurp(dir / "out.session.json"),
                    curve = slurp(dir / "out.loss.csv"), coarse = slurp(dir / "out.scale1.ppm");
  EXPECT_FALSE(image.empty());
  EXPECT_FALSE(coarse.empty());
  run_synth(cfg);
  EXPECT_EQ(slurp(dir / "out.ppm"), image);
  EXPECT_EQ(slurp(dir / "out.session.json"), session);
  EXPECT_EQ(slurp(dir / "out.loss.csv"), curve);

  const auto j = nlohmann::json::parse(session);
  EXPECT_EQ(j["variant"], "gram+spectrum+msinit");
  EXPECT_EQ(j["scales"].size(), 2u);
  EXPECT_EQ(j["scales"][0]["level"], 1);
  EXPECT_EQ(j["scales"][0]["height"], 16);
  EXPECT_EQ(j["network"]["weights"], "random(0)");
  EXPECT_EQ(j["output_sha256"], sha256_hex({reinterpret_cast<const std::uint8_t*>(image.data()), image.size()}));
  EXPECT_EQ(config_from_session(j), cfg);
  for (const auto& s : j["scales"]) {
    const auto& c = s["loss_curve"];
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(c[i]["total"].get<double>(), c[i - 1]["total"].get<double>());
  }
  // 16x16 coarse scale: pool3 would be 2x2 and is kept; every layer survives.
  EXPECT_TRUE(j["scales"][0]["dropped_layers"].empty());
}

TEST(SynthJob, ReplayReproducesHashes) {
  TempDir dir;
  const SynthConfig cfg = small_synth(dir);
  run_synth(cfg);
  const auto session = nlohmann::json::parse(slurp(dir / "out.session.json"));
  const auto check = replay_session(session, config_from_session(session));
  EXPECT_TRUE(check.exemplar_matches);
  EXPECT_TRUE(check.output_matches);
  SynthConfig other = cfg;
  other.seed = 4;
  EXPECT_FALSE(replay_session(session, other).output_matches);
}

TEST(SynthJob, TooManyScalesAndBadLayers) {
  TempDir dir;
  SynthConfig cfg = small_synth(dir);
  cfg.K = 3;
  try {
    run_synth(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyScales);
  }
  cfg.K = 1;
  cfg.layers = {"conv9"};
  EXPECT_THROW(run_synth(cfg), Error);
}

TEST(SynthJob, CustomArchitectureAndWeightFile) {
  TempDir dir;
  SynthConfig cfg = small_synth(dir);
  const auto arch = check::three_layer_architecture();
  {
    std::ofstream out(dir / "arch.json");
    out << net::to_json(arch).dump();
  }
  net::save_weights(arch, net::random_weights(arch, 5), dir / "w.ntw");
  cfg.net.architecture = (dir / "arch.json").string();
  cfg.net.weights = (dir / "w.ntw").string();
  EXPECT_THROW(run_synth(cfg), Error);  // no statistic layers given
  cfg.layers = check::three_layer_stat_layers();
  const auto run = run_synth(cfg);
  EXPECT_EQ(run.session["network"]["architecture"]["name"], "three-layer");
}

TEST(EvalJobs, DsAndKlwRows) {
  TempDir dir;
  const Image ex = check::wave_texture(32, 32, 2);
  write_image(ex, dir / "ex.ppm");
  write_image(check::random_image(32, 32, 3, 1), dir / "noise.ppm");
  EvalConfig cfg;
  cfg.exemplar = (dir / "ex.ppm").string();
  cfg.synth = {"copy=" + (dir / "ex.ppm").string(), (dir / "noise.ppm").string()};
  cfg.map_dir = (dir / "maps").string();
  cfg.jobs = 2;
  const auto rows = run_eval_ds(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].image_id, "ex");
  EXPECT_EQ(rows[0].method, "copy");
  EXPECT_EQ(rows[0].value, 0.0);
  EXPECT_EQ(rows[1].method, "noise");
  EXPECT_GT(rows[1].value, 0.5);
  EXPECT_TRUE(fs::exists(dir / "maps" / "ex_copy.ds.ppm"));
  cfg.jobs = 1;
  const auto serial = run_eval_ds(cfg);
  EXPECT_EQ(serial[1].value, rows[1].value);

  cfg.scales = 2;
  const auto klw = run_eval_klw(cfg);
  EXPECT_EQ(klw[0].value, eval::kZeroKlLog);
  EXPECT_GT(klw[1].value, klw[0].value);
  EXPECT_EQ(to_csv(klw).substr(0, 29), "image_id,method,metric,value\n");
}

TEST(BtJob, FiltersAndTables) {
  TempDir dir;
  {
    std::ofstream out(dir / "duels.csv");
    out << "method_a,method_b,winner,image_id,scale\n";
    const char* rows[] = {"p,q,a,i1,global", "p,q,a,i1,global", "q,p,a,i1,global", "p,q,b,i2,local",
                          "q,p,a,i2,local",  "p,q,a,i2,local",  "p,q,a,i1,local"};
    for (const char* r : rows) out << r << '\n';
    std::ofstream classes(dir / "classes.csv");
    classes << "image_id,class\ni1,regular\ni2,irregular\n";
  }
  BtConfig cfg;
  cfg.duels = (dir / "duels.csv").string();
  auto t = run_bt(cfg);
  EXPECT_NEAR(t.fit.prob(0, 1), 4.0 / 7.0, 1e-12);
  cfg.filters = {"scale=global"};
  t = run_bt(cfg);
  EXPECT_NEAR(t.fit.prob(0, 1), 2.0 / 3.0, 1e-12);
  EXPECT_NE(t.strengths.find("p,q,"), std::string::npos);
  EXPECT_EQ(t.winning.substr(0, 19), "method,beta,W,Sigma");
  cfg.filters = {"image-class=irregular"};
  EXPECT_THROW(run_bt(cfg), Error);  // classes file missing
  cfg.classes = (dir / "classes.csv").string();
  t = run_bt(cfg);
  EXPECT_NEAR(t.fit.prob(0, 1), 1.0 / 3.0, 1e-12);
  cfg.filters = {"colour=red"};
  EXPECT_THROW(run_bt(cfg), Error);
}

TEST(ProjectJob, ExemplarIsFixedPoint) {
  TempDir dir;
  write_image(check::wave_texture(16, 16, 1), dir / "ex.ppm");
  ProjectConfig cfg{(dir / "ex.ppm").string(), (dir / "ex.ppm").string(), (dir / "p.ppm").string(), 16};
  run_project(cfg);
  EXPECT_EQ(slurp(dir / "p.ppm"), slurp(dir / "ex.ppm"));
}

TEST(Selftest, AllChecksPass) {
  for (const auto& r : run_selftest()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}
