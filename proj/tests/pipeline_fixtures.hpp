#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "flimcl/pipeline/report.hpp"

namespace flimcl::fixtures {

// The demo config shrunk to run end to end in a few seconds.
inline nlohmann::json small_pipeline_json() {
  std::ifstream in(FLIMCL_DEMO_CONFIG);
  auto j = nlohmann::json::parse(in);
  j["output_dir"] = "unused";
  auto& s = j["simulator"];
  s["patients"] = 8;
  s["total_margins"] = 42;
  s["margins_per_patient"] = {3, 8};
  s["points_per_margin"] = {5, 8};
  j["models"]["candidates"] = {"softmax", "forest"};
  j["models"]["hyperparams"]["softmax"] = {{"iterations", 150}};
  j["models"]["hyperparams"]["forest"] = {{"trees", 15}};
  j["refinement"]["inner_folds"] = 2;
  j["attribution"]["background"] = 20;
  j["attribution"]["explain_per_class"] = 2;
  j["attribution"]["permutations"] = 16;
  j["attribution"]["importance_repeats"] = 1;
  return j;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::set<std::string> listing(const std::filesystem::path& dir) {
  std::set<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("flimcl-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace flimcl::fixtures
