// flimcl: synthetic FLIm data, confident-learning curation, class refinement
// and attribution, one subcommand per pipeline stage.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flimcl/pipeline/report.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDependency = 3, kNumerical = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--seed", o.seed, "master seed; overrides the config");
  cmd->add_option("-o,--out", o.out, "output directory; overrides FLIMCL_OUT and the config");
}

int run(const Options& o, const std::string& command) {
  using namespace flimcl;
  try {
    auto cfg = pipeline::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    const auto dir = o.out ? io::fs::path(*o.out) : pipeline::output_root(cfg);
    pipeline::Context ctx(cfg, dir);
    if (command == "all") {
      pipeline::run_pipeline(ctx, cfg.stages);
    } else {
      pipeline::run_pipeline(ctx, {command});
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kDependency;
  } catch (const InputError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kDependency;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const TrainingError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ThresholdUndefinedError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flimcl: confident-learning curation of synthetic FLIm margin data"};
  app.require_subcommand(1);
  Options opts;
  std::string command;
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "simulate waveforms and a labeled manifest with injected label noise"},
      {"features", "extract lifetime, Laguerre and phasor features"},
      {"train", "select the baseline model under leave-one-patient-out"},
      {"curate", "confident joint, low-confidence points and margin label issues"},
      {"refine", "merge classes, prune low-confidence training points, re-score"},
      {"attrib", "Shapley attribution and permutation importance"},
      {"report", "write summary.txt and the CSV bundle"},
      {"all", "run the config's stage list in order"},
  };
  for (const auto& [name, help] : commands) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, opts);
    cmd->callback([&command, n = std::string(name)] { command = n; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  return run(opts, command);
}
