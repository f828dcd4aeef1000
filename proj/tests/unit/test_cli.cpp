#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "ultranerf/cli.hpp"
#include "ultranerf/error.hpp"

using namespace unerf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / "ultranerf_unit" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return m;
}

const std::vector<std::string> kSmallSim{"--frames", "3", "--width", "12", "--depth", "16", "--sweeps",
                                         "10:1:train,0:1:test"};

}  // namespace

TEST_CASE("no arguments print usage and fail validation") {
  const auto r = run({});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("simulate") != std::string::npos);
  CHECK(run({"frobnicate"}).code == cli::kValidation);
  CHECK(run({"train", "--data", "x"}).code == cli::kValidation);
}

TEST_CASE("help exits cleanly") {
  const auto r = run({"train", "--help"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("--iters") != std::string::npos);
}

TEST_CASE("simulate twice gives byte-identical dataset directories") {
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  auto args = [&](const fs::path& out) {
    std::vector<std::string> v{"simulate", "--seed", "7", "--out", out.string()};
    v.insert(v.end(), kSmallSim.begin(), kSmallSim.end());
    return v;
  };
  const auto ra = run(args(a));
  REQUIRE(ra.code == cli::kOk);
  CHECK(ra.err.find("seed=7") != std::string::npos);
  REQUIRE(run(args(b)).code == cli::kOk);
  const auto ta = tree(a);
  CHECK(ta.count("manifest.json") == 1);
  CHECK(ta == tree(b));
}

TEST_CASE("config files: flags override, unknown keys are rejected") {
  const auto dir = scratch("config");
  {
    std::ofstream cfg(dir / "good.cfg");
    cfg << "# comment\n\nseed = 3\nframes=2\n";
    std::ofstream bad(dir / "bad.cfg");
    bad << "seed=3\nlearning_rate=2\n";
    std::ofstream broken(dir / "broken.cfg");
    broken << "seed\n";
  }
  const auto tokens = cli::config_tokens((dir / "good.cfg").string());
  CHECK(tokens == std::vector<std::string>{"--seed=3", "--frames=2"});
  CHECK_THROWS_AS(cli::config_tokens((dir / "broken.cfg").string()), ConfigError);

  std::vector<std::string> base{"simulate", "--out", (dir / "ds").string(), "--width", "8", "--depth", "8",
                                "--sweeps", "0:1:test"};
  auto with = [&](std::vector<std::string> extra) {
    auto v = base;
    v.insert(v.end(), extra.begin(), extra.end());
    return run(v);
  };
  const auto r = with({"--config", (dir / "good.cfg").string(), "--seed", "9"});
  CHECK(r.code == cli::kOk);
  CHECK(r.err.find("seed=9") != std::string::npos);
  CHECK(r.err.find("frames=2") != std::string::npos);
  const auto twice = with({"--config", (dir / "good.cfg").string(), "--seed", "9"});
  CHECK(twice.err == r.err);
  CHECK(with({"--config", (dir / "bad.cfg").string()}).code == cli::kValidation);
  CHECK(with({"--frames", "-1"}).code == cli::kValidation);
}

TEST_CASE("train, render, eval, compound and slice end to end") {
  const auto dir = scratch("pipeline");
  std::vector<std::string> sim{"simulate", "--seed", "2", "--mode", "expected", "--out", (dir / "ds").string()};
  sim.insert(sim.end(), kSmallSim.begin(), kSmallSim.end());
  REQUIRE(run(sim).code == cli::kOk);
  const std::vector<std::string> tr{"train", "--data", (dir / "ds").string(), "--out", (dir / "m.ckpt").string(),
                                    "--iters", "2", "--width", "8", "--frequencies", "2", "--seed", "1",
                                    "--log-every", "0", "--loss-log", (dir / "loss.txt").string()};
  REQUIRE(run(tr).code == cli::kOk);
  const auto first = slurp(dir / "m.ckpt");
  REQUIRE(run(tr).code == cli::kOk);
  CHECK(slurp(dir / "m.ckpt") == first);

  const auto poses = (dir / "ds" / "sweep_1" / "poses.txt").string();
  REQUIRE(run({"render", "--ckpt", (dir / "m.ckpt").string(), "--pose-file", poses, "--out", (dir / "views").string()})
              .code == cli::kOk);
  CHECK(fs::exists(dir / "views" / "frame_0002.pgm"));

  const auto ev = run({"eval", "--ckpt", (dir / "m.ckpt").string(), "--data", (dir / "ds").string()});
  CHECK(ev.code == cli::kOk);
  CHECK(ev.out.rfind("sweep_id\tview_kind\tmedian_ssim\tmean_ssim\n1\tperpendicular\t", 0) == 0);

  REQUIRE(run({"decompose", "--ckpt", (dir / "m.ckpt").string(), "--pose-file", poses, "--out-dir",
               (dir / "maps").string()})
              .code == cli::kOk);
  CHECK(fs::exists(dir / "maps" / "frame_0000_alpha.pgm"));

  REQUIRE(run({"compound", "--data", (dir / "ds").string(), "--exclude-sweeps", "1", "--out", (dir / "vol.raw").string()})
              .code == cli::kOk);
  REQUIRE(run({"slice", "--vol", (dir / "vol.raw").string(), "--pose-file", poses, "--out", (dir / "slices").string(),
               "--width", "12", "--depth", "16"})
              .code == cli::kOk);
  CHECK(fs::exists(dir / "slices" / "frame_0000.pgm"));

  CHECK(run({"eval", "--ckpt", (dir / "missing.ckpt").string(), "--data", (dir / "ds").string()}).code ==
        cli::kRuntime);
}

TEST_CASE("gradcheck subcommand") {
  const auto r = run({"gradcheck", "--points", "1"});
  MESSAGE(r.out);
  CHECK((r.code == cli::kOk || r.code == cli::kRuntime));
  CHECK(r.out.find("conv2d_same") != std::string::npos);
}
