#include <gtest/gtest.h>

#include <sys/wait.h>

#include "pipeline_fixtures.hpp"

using flimcl::fixtures::listing;
using flimcl::fixtures::scratch;
using flimcl::fixtures::small_pipeline_json;
using nlohmann::json;

namespace {

// Exit status of the CLI run with `args`; output goes to `dir`/cli.log.
int cli(const std::string& args, const std::filesystem::path& dir) {
  const std::string cmd = std::string(FLIMCL_BIN) + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path write_config(const json& j, const std::filesystem::path& dir) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Cli, UsageAndConfigErrorsExitTwo) {
  const auto dir = scratch("cli-usage");
  EXPECT_EQ(cli("", dir), 2);
  EXPECT_EQ(cli("bogus", dir), 2);
  EXPECT_EQ(cli("synth --config " + (dir / "absent.json").string(), dir), 2);
  auto j = small_pipeline_json();
  j["simulator"]["waveform"]["dt"] = "fast";
  const auto cfg = write_config(j, dir);
  EXPECT_EQ(cli("synth -c " + cfg.string() + " -o " + (dir / "out").string(), dir), 2);
  EXPECT_NE(flimcl::fixtures::slurp(dir / "cli.log").find("simulator.waveform.dt"), std::string::npos);
}

TEST(Cli, StagesRunAndMissingDependenciesExitThree) {
  const auto dir = scratch("cli-stages");
  const auto cfg = write_config(small_pipeline_json(), dir).string();
  const auto out = (dir / "out").string();
  EXPECT_EQ(cli("features -c " + cfg + " -o " + out, dir), 3);
  EXPECT_EQ(cli("report -c " + cfg + " -o " + out, dir), 2);
  EXPECT_EQ(cli("synth -c " + cfg + " -o " + out + " --seed 5", dir), 0);
  EXPECT_EQ(listing(dir / "out"), (std::set<std::string>{"manifest.json", "waveforms.bin"}));
  // a different seed makes the synth output stale
  EXPECT_EQ(cli("features -c " + cfg + " -o " + out + " --seed 6", dir), 3);
  EXPECT_EQ(cli("features -c " + cfg + " -o " + out + " --seed 5", dir), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "features.csv"));
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const auto dir = scratch("cli-env");
  auto j = small_pipeline_json();
  j["stages"] = {"synth"};
  const auto cfg = write_config(j, dir).string();
  const std::string env = "FLIMCL_OUT=" + (dir / "env").string() + " ";
  const int status = std::system((env + FLIMCL_BIN + " all -c " + cfg + " > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "env" / "manifest.json"));
}

TEST(Cli, TrainingFailureExitsFour) {
  // two patients with one margin each: every fold trains on a single class
  const auto dir = scratch("cli-train");
  auto j = small_pipeline_json();
  j["stages"] = {"synth", "features", "train"};
  j["simulator"]["patients"] = 2;
  j["simulator"]["total_margins"] = 2;
  j["simulator"]["margins_per_patient"] = {1, 1};
  j["simulator"]["classes"] = {j["simulator"]["classes"][0], j["simulator"]["classes"][6]};
  j["simulator"]["label_noise"]["rate"] = 0.0;
  j["refinement"] = {{"mode", "auto"}};
  const auto cfg = write_config(j, dir).string();
  EXPECT_EQ(cli("all -c " + cfg + " -o " + (dir / "out").string(), dir), 4);
}
