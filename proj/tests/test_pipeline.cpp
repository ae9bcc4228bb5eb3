#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "pipeline_fixtures.hpp"

using namespace flimcl;
using namespace flimcl::pipeline;
using flimcl::fixtures::listing;
using flimcl::fixtures::scratch;
using flimcl::fixtures::slurp;
using flimcl::fixtures::small_pipeline_json;
using nlohmann::json;

namespace {

PipelineConfig small_config() { return config_from_json(small_pipeline_json()); }

// Message of the ConfigError raised by parsing `j`, or "" if none.
std::string config_error(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

void run(const PipelineConfig& cfg, const io::fs::path& dir, const std::vector<std::string>& stages) {
  std::ostringstream log;
  Context ctx(cfg, dir);
  ctx.log = &log;
  run_pipeline(ctx, stages);
}

const std::set<std::string> kFullRunFiles{
    "attribution.csv", "attribution_instances.json", "baseline.json", "confidence_histogram.csv",
    "confidence_histogram_3class.csv", "confidence_histogram_5class.csv", "confidence_histogram_7class.csv",
    "confident_joint.csv", "confusion_3class.csv", "confusion_5class.csv", "confusion_7class.csv",
    "confusion_baseline.csv", "confusion_pruned.csv", "curation_report.json", "features.csv", "manifest.json",
    "margin_status.csv", "metrics.json", "model_final.json", "permutation_importance.csv",
    "posteriors_final.csv", "posteriors_forest.csv", "posteriors_softmax.csv", "refinement.json",
    "scheme_history.csv", "summary.txt", "waveforms.bin"};

}  // namespace

TEST(Config, ErrorsNameTheField) {
  auto j = small_pipeline_json();
  j.erase("simulator");
  EXPECT_NE(config_error(j).find("simulator: required"), std::string::npos);

  j = small_pipeline_json();
  j["simulator"]["waveform"]["bogus"] = 1;
  EXPECT_NE(config_error(j).find("simulator.waveform.bogus: unknown key"), std::string::npos);

  j = small_pipeline_json();
  j["curation"]["issue_threshold"] = 0.2;
  EXPECT_NE(config_error(j).find("curation.issue_threshold"), std::string::npos);

  j = small_pipeline_json();
  j["models"]["hyperparams"]["mlp"] = {{"l2", "large"}};
  EXPECT_NE(config_error(j).find("mlp.l2: wrong type"), std::string::npos);

  j = small_pipeline_json();
  j["simulator"]["patients"] = "thirty";
  EXPECT_NE(config_error(j).find("simulator.patients: wrong type"), std::string::npos);

  j = small_pipeline_json();
  j["stages"] = {"train", "synth"};
  EXPECT_NE(config_error(j).find("stages"), std::string::npos);

  j = small_pipeline_json();
  j["_sources"]["seed"] = "guess";
  EXPECT_NE(config_error(j).find("_sources.seed"), std::string::npos);

  j = small_pipeline_json();
  j["refinement"]["schedule"][0][0]["classes"] = {0, 9};
  EXPECT_NE(config_error(j).find("refinement.schedule"), std::string::npos);

  EXPECT_EQ(config_error(small_pipeline_json()), "");
}

TEST(Config, RoundTripAndHash) {
  const auto a = small_config();
  const auto b = config_from_json(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  EXPECT_EQ(config_hash(a), config_hash(b));

  // where and which stages run do not change the results
  auto c = a;
  c.output_dir = "elsewhere";
  c.stages = {"synth"};
  EXPECT_EQ(config_hash(a), config_hash(c));
  c.seed = a.seed + 1;
  EXPECT_NE(config_hash(a), config_hash(c));
  auto d = a;
  d.noise_rate = 0.2;
  EXPECT_NE(config_hash(a), config_hash(d));
}

TEST(Config, EnvironmentOverridesOutputDir) {
  auto cfg = small_config();
  cfg.output_dir = "from-config";
  ::unsetenv("FLIMCL_OUT");
  EXPECT_EQ(output_root(cfg), io::fs::path("from-config"));
  ::setenv("FLIMCL_OUT", "/tmp/from-env", 1);
  EXPECT_EQ(output_root(cfg), io::fs::path("/tmp/from-env"));
  ::unsetenv("FLIMCL_OUT");
}

TEST(Io, DoublesRoundTripExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(io::parse_double(io::fmt(v)), v);
  }
  EXPECT_TRUE(std::isnan(io::parse_double(io::fmt(std::nan("")))));
  EXPECT_THROW(io::parse_double("1.5x"), InputError);
}

TEST(Io, CsvRejectsDelimitersInCells) {
  io::CsvWriter w({"a", "b"});
  EXPECT_THROW(w.add_row({"1", "x,y"}), InputError);
  EXPECT_THROW(w.add_row({"1"}), InputError);
}

TEST(Io, WaveformsRoundTripBitExact) {
  const auto dir = scratch("waveforms");
  std::vector<io::PointWaveforms> w(3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (auto& pw : w)
    for (int b = 0; b < kBandCount; ++b) {
      pw[static_cast<std::size_t>(b)] = Waveform{std::vector<double>(17), 0.4, static_cast<Band>(b)};
      for (auto& v : pw[static_cast<std::size_t>(b)].samples) v = nd(rng);
    }
  io::write_waveforms(dir / "w.bin", {4, 9, 11}, w, {"abc", 2, "synth"});
  const auto back = io::read_waveforms(dir / "w.bin");
  EXPECT_EQ(back.point_ids, (std::vector<int>{4, 9, 11}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(back.waveforms[i][b].samples, w[i][b].samples);
  EXPECT_EQ(back.header.at("provenance").at("config"), "abc");
}

TEST(Pipeline, SynthStageWritesOnlyManifestAndWaveforms) {
  const auto dir = scratch("synth-only");
  run(small_config(), dir, {"synth"});
  EXPECT_EQ(listing(dir), (std::set<std::string>{"manifest.json", "waveforms.bin"}));
  const auto m = io::read_json(dir / "manifest.json");
  EXPECT_EQ(m.at("provenance").at("stage"), "synth");
  EXPECT_TRUE(m.contains("config"));
  EXPECT_EQ(io::manifest_from_json(m).margins.size(), 42u);
}

TEST(Pipeline, MissingUpstreamArtifactIsDependencyError) {
  const auto dir = scratch("missing");
  const auto cfg = small_config();
  try {
    run(cfg, dir, {"features"});
    FAIL() << "features ran without synth output";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("synth"), std::string::npos);
  }
  EXPECT_THROW(run(cfg, dir, {"curate"}), DependencyError);
  EXPECT_THROW(run(cfg, dir, {"attrib"}), DependencyError);
}

TEST(Pipeline, ArtifactsFromAnotherSeedAreRejected) {
  const auto dir = scratch("stale");
  auto cfg = small_config();
  run(cfg, dir, {"synth"});
  cfg.seed += 1;
  EXPECT_THROW(run(cfg, dir, {"features"}), DependencyError);
}

TEST(Pipeline, ReportWithNothingToReportIsUsageError) {
  const auto dir = scratch("empty-report");
  EXPECT_THROW(run(small_config(), dir, {"report"}), UsageError);
}

TEST(Pipeline, FullRunIsCompleteDeterministicAndStageable) {
  const auto cfg = small_config();
  const auto a = scratch("full-a"), b = scratch("full-b"), c = scratch("full-c");
  run(cfg, a, all_stages());
  EXPECT_EQ(listing(a), kFullRunFiles);

  const std::string summary = slurp(a / "summary.txt");
  for (const char* section : {"Baseline selection", "Confident learning", "scheme history:", "Pruning",
                              "test data never filtered", "Label-issue audit", "re-scoring", "Feature attribution"})
    EXPECT_NE(summary.find(section), std::string::npos) << section;
  const auto ref = io::read_json(a / "refinement.json");
  EXPECT_FALSE(ref.at("pruning").at("test_filtered").get<bool>());
  EXPECT_EQ(io::read_csv(a / "features.csv").header.size(), 4u + 38u);

  // a second run and a stage-by-stage run reproduce every byte
  run(cfg, b, all_stages());
  for (const auto& s : all_stages()) run(cfg, c, {s});
  for (const auto& name : kFullRunFiles) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(c / name)) << name;
  }

  // report before attribution exists says so instead of failing
  io::fs::remove(c / "attribution.csv");
  run(cfg, c, {"report"});
  EXPECT_NE(slurp(c / "summary.txt").find("not available: stage 'attrib'"), std::string::npos);
}

TEST(Pipeline, SeedChangesTheData) {
  auto cfg = small_config();
  const auto a = scratch("seed-a"), b = scratch("seed-b");
  run(cfg, a, {"synth"});
  cfg.seed = 99;
  run(cfg, b, {"synth"});
  EXPECT_NE(slurp(a / "waveforms.bin"), slurp(b / "waveforms.bin"));
}
