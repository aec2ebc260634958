#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "texsynth/check/oracles.hpp"
#include "texsynth/raster_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" TEXSYNTH_CLI "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("texsynth_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    texsynth::write_image(texsynth::check::wave_texture(64, 64, 1), dir_ / "ex.ppm", texsynth::BitDepth::k8);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SynthIsDeterministic) {
  const std::string args = "synth --exemplar ex.ppm --variant gram+spectrum+msinit --K 2 --seed 7 --max-iter 10";
  auto a = run(args + " --out a.ppm", dir_);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_TRUE(fs::exists(dir_ / "a.session.json"));
  auto b = run(args + " --out a.ppm", dir_);
  ASSERT_EQ(b.code, 0) << b.out;
  const std::string img = slurp(dir_ / "a.ppm"), ses = slurp(dir_ / "a.session.json");
  auto c = run(args + " --out a.ppm", dir_);
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(slurp(dir_ / "a.ppm"), img);
  EXPECT_EQ(slurp(dir_ / "a.session.json"), ses);
  EXPECT_EQ(run("synth --replay a.session.json", dir_).code, 0);
}

TEST_F(CliTest, TooManyScalesIsInputError) {
  const auto r = run("synth --exemplar ex.ppm --K 9 --seed 1 --out o.ppm", dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("\"error\":\"TooManyScales\""), std::string::npos) << r.out;
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  {
    std::ofstream cfg(dir_ / "run.json");
    cfg << R"({"exemplar": "ex.ppm", "out": "c.ppm", "K": 5, "seed": 2, "lbfgs": {"max_iter": 3}})";
  }
  // K = 5 would be rejected for a 64x64 exemplar; the flag wins.
  const auto printed = run("synth --config run.json --K 1 --print-config", dir_);
  ASSERT_EQ(printed.code, 0) << printed.out;
  EXPECT_NE(printed.out.find("\"K\": 1"), std::string::npos);
  EXPECT_NE(printed.out.find("\"max_iter\": 3"), std::string::npos);
  EXPECT_EQ(run("synth --config run.json --K 1", dir_).code, 0);
  EXPECT_EQ(run("synth --config run.json", dir_).code, 2);
  {
    std::ofstream cfg(dir_ / "bad.json");
    cfg << R"({"exemplar": "ex.ppm", "typo": 1})";
  }
  EXPECT_EQ(run("synth --config bad.json --out x.ppm", dir_).code, 2);
}

TEST_F(CliTest, ErrorPaths) {
  EXPECT_EQ(run("", dir_).code, 2);
  EXPECT_EQ(run("synth --no-such-flag 1", dir_).code, 2);
  EXPECT_EQ(run("synth --exemplar ex.ppm --out o.ppm --variant cubism", dir_).code, 2);
  const auto missing = run("synth --exemplar nope.ppm --out o.ppm", dir_);
  EXPECT_EQ(missing.code, 1) << missing.out;
  EXPECT_EQ(run("--help", dir_).code, 0);
}

TEST_F(CliTest, EvalAndProjectCommands) {
  const auto ds = run("eval-ds --exemplar ex.ppm --synth copy=ex.ppm --jobs 2", dir_);
  ASSERT_EQ(ds.code, 0) << ds.out;
  EXPECT_EQ(ds.out, "image_id,method,metric,value\nex,copy,ds,0\n");
  const auto klw = run("eval-klw --exemplar ex.ppm --synth ex.ppm --scales 3", dir_);
  ASSERT_EQ(klw.code, 0) << klw.out;
  EXPECT_EQ(klw.out, "image_id,method,metric,value\nex,ex,log_klw,-1e+09\n");
  EXPECT_EQ(run("project-spectrum --exemplar ex.ppm --input ex.ppm --out p.ppm", dir_).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "p.ppm"));
}

TEST_F(CliTest, BtFit) {
  {
    std::ofstream out(dir_ / "duels.csv");
    out << "method_a,method_b,winner,image_id,scale\nx,y,a,i,global\nx,y,a,i,global\nx,y,b,i,global\n"
        << "x,y,a,i,local\n";
  }
  const auto r = run("bt-fit --duels duels.csv --filter scale=global", dir_);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("method,beta,W,Sigma"), std::string::npos);
  EXPECT_EQ(run("bt-fit --duels duels.csv --filter scale=local", dir_).code, 2);  // separation
  EXPECT_EQ(run("bt-fit --duels duels.csv --out res", dir_).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "res.strengths.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "res.winning.csv"));
}

TEST_F(CliTest, Selftest) {
  const auto r = run("selftest", dir_);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
