#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flimcl/attribution/importance.hpp"
#include "flimcl/attribution/shapley.hpp"
#include "flimcl/curation/refine.hpp"
#include "flimcl/eval/rescoring.hpp"
#include "flimcl/features/extract.hpp"
#include "flimcl/io/files.hpp"
#include "flimcl/models/model.hpp"
#include "flimcl/sim/decay_sim.hpp"

namespace flimcl::pipeline {

using nlohmann::json;

inline const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> s{"synth", "features", "train", "curate", "refine", "attrib", "report"};
  return s;
}

struct AttributionSettings {
  std::size_t background = 100;       // stratified training points
  std::size_t explain_per_class = 20;  // explained points per class
  int permutations = 200;
  attribution::Scale scale = attribution::Scale::Probability;
  std::size_t top_k = 10;  // instances written with full attributions
  int importance_repeats = 5;
  attribution::ImportanceMetric importance_metric = attribution::ImportanceMetric::Accuracy;
};

struct PipelineConfig {
  std::vector<std::string> stages = all_stages();
  std::uint64_t seed = 1;
  std::string output_dir = "flimcl-out";
  sim::SimConfig simulator;
  double noise_rate = 0.10;
  sim::NoiseMode noise_mode = sim::NoiseMode::Adjacent;
  features::FeatureSchema schema;
  features::BasisConfig basis;
  std::vector<models::ModelKind> candidates{models::ModelKind::Softmax, models::ModelKind::Mlp,
                                            models::ModelKind::Forest};
  models::Hyperparams hyperparams;
  curation::RefineOptions refinement;
  eval::RescoringOptions rescoring;
  AttributionSettings attribution;

  /// Stage-local seeds, all derived from the master seed.
  std::uint64_t simulator_seed() const { return derive_seed(seed, 0x73796e74); }
  std::uint64_t noise_seed() const { return derive_seed(seed, 0x6e6f6973); }
  std::uint64_t model_seed() const { return derive_seed(seed, 0x6d6f646c); }
  std::uint64_t rescoring_seed() const { return derive_seed(seed, 0x72657363); }
  std::uint64_t attribution_seed() const { return derive_seed(seed, 0x61747472); }
};

namespace detail {

/// Cursor into the config document that remembers its path for messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *j_; }
  bool has(const char* key) const { return j_->contains(key); }

  std::string at_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(at_path(key) + ": " + what);
  }

  Node object(const char* key) const {
    const json& v = j_->at(key);
    if (!v.is_object()) fail(key, "expected an object");
    return Node(v, at_path(key));
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!j_->is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
    for (const auto& item : j_->items()) {
      if (item.key() == "_sources" && path_.empty()) continue;
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }))
        fail(item.key(), "unknown key");
    }
  }

  template <typename T>
  void get(const char* key, T& dst) const {
    if (!has(key)) return;
    try {
      dst = j_->at(key).template get<T>();
    } catch (const json::exception&) {
      fail(key, "wrong type");
    }
  }

  template <typename T>
  T require(const char* key) const {
    if (!has(key)) fail(key, "required");
    T v{};
    get(key, v);
    return v;
  }

 private:
  const json* j_;
  std::string path_;
};

inline void check(bool ok, const Node& n, const char* key, const std::string& what) {
  if (!ok) n.fail(key, what);
}

inline json band_to_json(const sim::BandDecay& b) {
  return {{"tau1", b.tau1}, {"tau2", b.tau2}, {"fraction_mean", b.fraction_mean}, {"fraction_sd", b.fraction_sd}};
}

inline sim::BandDecay band_from(const Node& n) {
  n.allow({"tau1", "tau2", "fraction_mean", "fraction_sd"});
  sim::BandDecay b;
  b.tau1 = n.require<double>("tau1");
  b.tau2 = n.require<double>("tau2");
  b.fraction_mean = n.require<double>("fraction_mean");
  n.get("fraction_sd", b.fraction_sd);
  return b;
}

inline void parse_simulator(const Node& n, PipelineConfig& c) {
  n.allow({"patients", "total_margins", "margins_per_patient", "points_per_margin", "classes", "class_proportions",
           "waveform", "variability", "confounders", "grey_matter_direction", "label_noise"});
  auto& s = c.simulator;
  n.get("patients", s.patients);
  n.get("total_margins", s.total_margins);
  n.get("margins_per_patient", s.margins_per_patient);
  n.get("points_per_margin", s.points_per_margin);
  n.get("class_proportions", s.class_proportions);
  n.get("grey_matter_direction", s.grey_matter_direction);

  if (!n.has("classes")) n.fail("classes", "required");
  const json& classes = n.raw().at("classes");
  if (!classes.is_array() || classes.size() < 2) n.fail("classes", "expected an array of at least two classes");
  s.classes.clear();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const Node cn(classes[i], n.at_path("classes[" + std::to_string(i) + "]"));
    cn.allow({"name", "bandA", "bandB", "amplitude_mean"});
    sim::ClassDecayModel m;
    m.class_index = static_cast<int>(i);
    m.name = cn.require<std::string>("name");
    m.bands[0] = band_from(cn.object("bandA"));
    m.bands[1] = band_from(cn.object("bandB"));
    cn.get("amplitude_mean", m.amplitude_mean);
    try {
      m.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(cn.path() + ": " + e.what());
    }
    s.classes.push_back(std::move(m));
  }

  if (n.has("waveform")) {
    const Node w = n.object("waveform");
    w.allow({"dt", "samples", "irf_fwhm", "irf_center"});
    w.get("dt", s.waveform.dt);
    w.get("samples", s.waveform.samples);
    w.get("irf_fwhm", s.waveform.irf_fwhm);
    w.get("irf_center", s.waveform.irf_center);
    check(s.waveform.dt > 0, w, "dt", "must be positive");
    check(s.waveform.irf_fwhm >= 0, w, "irf_fwhm", "must be nonnegative");
  }
  if (n.has("variability")) {
    const Node v = n.object("variability");
    v.allow({"patient_fraction_sd", "margin_fraction_sd", "tau_jitter", "amplitude_log_sd", "snr_db", "snr_db_sd"});
    auto& var = s.variability;
    v.get("patient_fraction_sd", var.patient_fraction_sd);
    v.get("margin_fraction_sd", var.margin_fraction_sd);
    v.get("tau_jitter", var.tau_jitter);
    v.get("amplitude_log_sd", var.amplitude_log_sd);
    v.get("snr_db", var.snr_db);
    v.get("snr_db_sd", var.snr_db_sd);
  }
  if (n.has("confounders")) {
    const json& arr = n.raw().at("confounders");
    if (!arr.is_array()) n.fail("confounders", "expected an array");
    s.confounders.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const Node cn(arr[i], n.at_path("confounders[" + std::to_string(i) + "]"));
      cn.allow({"kind", "margin_probability", "magnitude", "affected_fraction"});
      sim::ConfounderRate r;
      try {
        r.spec.kind = sim::parse_confounder_kind(cn.require<std::string>("kind"));
      } catch (const ParameterError& e) {
        cn.fail("kind", e.what());
      }
      cn.get("margin_probability", r.margin_probability);
      cn.get("magnitude", r.spec.magnitude);
      cn.get("affected_fraction", r.spec.affected_fraction);
      check(r.margin_probability >= 0 && r.margin_probability <= 1, cn, "margin_probability", "outside [0,1]");
      check(r.spec.magnitude >= 0 && r.spec.magnitude <= 1, cn, "magnitude", "outside [0,1]");
      check(r.spec.affected_fraction >= 0 && r.spec.affected_fraction <= 1, cn, "affected_fraction",
            "outside [0,1]");
      s.confounders.push_back(r);
    }
  }
  if (n.has("label_noise")) {
    const Node ln = n.object("label_noise");
    ln.allow({"rate", "mode"});
    ln.get("rate", c.noise_rate);
    check(c.noise_rate >= 0 && c.noise_rate < 1, ln, "rate", "must lie in [0,1)");
    if (ln.has("mode")) {
      try {
        c.noise_mode = sim::parse_noise_mode(ln.require<std::string>("mode"));
      } catch (const ConfigError& e) {
        ln.fail("mode", e.what());
      }
    }
  }
  try {
    sim::validate(s);
  } catch (const ConfigError& e) {
    throw ConfigError(n.path() + ": " + e.what());
  }
}

inline void parse_features(const Node& n, PipelineConfig& c) {
  n.allow({"laguerre_order", "alpha", "harmonics", "intensity_ratio", "phasor_source", "constraint", "ridge"});
  n.get("laguerre_order", c.schema.laguerre_order);
  n.get("alpha", c.basis.alpha);
  n.get("harmonics", c.schema.harmonics);
  n.get("intensity_ratio", c.schema.intensity_ratio);
  n.get("ridge", c.basis.deconvolution.ridge);
  check(c.schema.laguerre_order >= 1, n, "laguerre_order", "must be >= 1");
  check(c.basis.alpha > 0 && c.basis.alpha < 1, n, "alpha", "must lie in (0,1)");
  check(c.schema.harmonics >= 1, n, "harmonics", "must be >= 1");
  check(c.basis.deconvolution.ridge >= 0, n, "ridge", "must be >= 0");
  if (n.has("phasor_source")) {
    const auto s = n.require<std::string>("phasor_source");
    if (s == "decay")
      c.basis.phasor_source = features::PhasorSource::Decay;
    else if (s == "raw")
      c.basis.phasor_source = features::PhasorSource::RawWaveform;
    else
      n.fail("phasor_source", "expected decay or raw");
  }
  if (n.has("constraint")) {
    const auto s = n.require<std::string>("constraint");
    using features::DecayConstraint;
    if (s == "nonnegative")
      c.basis.deconvolution.constraint = DecayConstraint::Nonnegative;
    else if (s == "monotone")
      c.basis.deconvolution.constraint = DecayConstraint::Monotone;
    else if (s == "full")
      c.basis.deconvolution.constraint = DecayConstraint::Full;
    else
      n.fail("constraint", "expected nonnegative, monotone or full");
  }
}

inline void parse_models(const Node& n, PipelineConfig& c) {
  n.allow({"candidates", "hyperparams"});
  if (n.has("candidates")) {
    const auto names = n.require<std::vector<std::string>>("candidates");
    if (names.empty()) n.fail("candidates", "must list at least one model kind");
    c.candidates.clear();
    for (const auto& k : names) {
      try {
        c.candidates.push_back(models::parse_kind(k));
      } catch (const ConfigError& e) {
        n.fail("candidates", e.what());
      }
    }
  }
  if (n.has("hyperparams")) {
    try {
      c.hyperparams = models::hyperparams_from_json(n.raw().at("hyperparams"));
    } catch (const ConfigError& e) {
      throw ConfigError(n.at_path("hyperparams") + "." + e.what());
    }
  }
}

inline void parse_curation(const Node& n, PipelineConfig& c) {
  n.allow({"issue_threshold", "control_threshold", "threshold_mode"});
  auto& t = c.refinement.issue;
  n.get("issue_threshold", t.issue);
  n.get("control_threshold", t.control);
  if (!(0.0 <= t.control && t.control < t.issue && t.issue <= 1.0))
    n.fail("issue_threshold", "thresholds must satisfy 0 <= control < issue <= 1");
  if (n.has("threshold_mode")) {
    const auto s = n.require<std::string>("threshold_mode");
    if (s == "self_confidence")
      c.refinement.threshold_mode = curation::ThresholdMode::SelfConfidence;
    else if (s == "all_points")
      c.refinement.threshold_mode = curation::ThresholdMode::AllPoints;
    else
      n.fail("threshold_mode", "expected self_confidence or all_points");
  }
}

inline void parse_refinement(const Node& n, PipelineConfig& c) {
  n.allow({"mode", "schedule", "epsilon", "prune", "prune_flags", "inner_folds"});
  auto& r = c.refinement;
  if (n.has("mode")) {
    const auto s = n.require<std::string>("mode");
    if (s == "auto")
      r.mode = curation::RefineMode::Auto;
    else if (s == "schedule")
      r.mode = curation::RefineMode::Schedule;
    else
      n.fail("mode", "expected auto or schedule");
  }
  n.get("epsilon", r.epsilon);
  check(r.epsilon >= 0, n, "epsilon", "must be >= 0");
  n.get("prune", r.prune);
  n.get("inner_folds", r.inner_folds);
  check(r.inner_folds >= 2, n, "inner_folds", "must be >= 2");
  if (n.has("prune_flags")) {
    const auto s = n.require<std::string>("prune_flags");
    if (s == "nested")
      r.prune_source = curation::PruneFlagSource::Nested;
    else if (s == "pooled")
      r.prune_source = curation::PruneFlagSource::Pooled;
    else
      n.fail("prune_flags", "expected nested or pooled");
  }
  if (n.has("schedule")) {
    const json& steps = n.raw().at("schedule");
    if (!steps.is_array()) n.fail("schedule", "expected an array of merge steps");
    r.schedule.clear();
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::string sp = n.at_path("schedule[" + std::to_string(i) + "]");
      if (!steps[i].is_array()) throw ConfigError(sp + ": expected an array of merge groups");
      std::vector<curation::MergeGroup> groups;
      for (std::size_t g = 0; g < steps[i].size(); ++g) {
        const Node gn(steps[i][g], sp + "[" + std::to_string(g) + "]");
        gn.allow({"classes", "name"});
        curation::MergeGroup mg;
        mg.classes = gn.require<std::vector<Label>>("classes");
        gn.get("name", mg.name);
        groups.push_back(std::move(mg));
      }
      r.schedule.push_back(std::move(groups));
    }
  }
  if (r.mode == curation::RefineMode::Schedule && r.schedule.empty())
    n.fail("schedule", "schedule mode needs at least one merge step");
}

inline void parse_rescoring(const Node& n, PipelineConfig& c) {
  n.allow({"policy", "reliability"});
  if (n.has("policy")) {
    try {
      c.rescoring.policy = eval::parse_relabel_policy(n.require<std::string>("policy"));
    } catch (const ConfigError& e) {
      n.fail("policy", e.what());
    }
  }
  n.get("reliability", c.rescoring.reliability);
  check(c.rescoring.reliability >= 0 && c.rescoring.reliability <= 1, n, "reliability", "outside [0,1]");
}

inline void parse_attribution(const Node& n, PipelineConfig& c) {
  n.allow({"background", "explain_per_class", "permutations", "scale", "top_k", "importance_repeats",
           "importance_metric"});
  auto& a = c.attribution;
  n.get("background", a.background);
  n.get("explain_per_class", a.explain_per_class);
  n.get("permutations", a.permutations);
  n.get("top_k", a.top_k);
  n.get("importance_repeats", a.importance_repeats);
  check(a.background >= 1, n, "background", "must be >= 1");
  check(a.permutations >= 1, n, "permutations", "must be >= 1");
  check(a.importance_repeats >= 1, n, "importance_repeats", "must be >= 1");
  if (n.has("scale")) {
    const auto s = n.require<std::string>("scale");
    if (s == "probability")
      a.scale = attribution::Scale::Probability;
    else if (s == "log_odds")
      a.scale = attribution::Scale::LogOdds;
    else
      n.fail("scale", "expected probability or log_odds");
  }
  if (n.has("importance_metric")) {
    try {
      a.importance_metric = attribution::parse_importance_metric(n.require<std::string>("importance_metric"));
    } catch (const Error& e) {
      n.fail("importance_metric", e.what());
    }
  }
}

}  // namespace detail

/// Parses and validates a config document. Every error names the field path.
inline PipelineConfig config_from_json(const json& doc) {
  using detail::Node;
  PipelineConfig c;
  const Node root(doc, "");
  root.allow({"stages", "seed", "output_dir", "simulator", "features", "models", "curation", "refinement",
              "rescoring", "attribution"});
  if (root.has("stages")) {
    c.stages = root.require<std::vector<std::string>>("stages");
    if (c.stages.empty()) root.fail("stages", "must list at least one stage");
    std::size_t last = 0;
    for (std::size_t i = 0; i < c.stages.size(); ++i) {
      const auto it = std::find(all_stages().begin(), all_stages().end(), c.stages[i]);
      if (it == all_stages().end()) root.fail("stages", "unknown stage '" + c.stages[i] + "'");
      const auto pos = static_cast<std::size_t>(it - all_stages().begin());
      if (i > 0 && pos <= last) root.fail("stages", "stages must be listed once, in pipeline order");
      last = pos;
    }
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  if (!root.has("simulator")) root.fail("simulator", "required");
  detail::parse_simulator(root.object("simulator"), c);
  if (root.has("features")) detail::parse_features(root.object("features"), c);
  if (root.has("models")) detail::parse_models(root.object("models"), c);
  if (root.has("curation")) detail::parse_curation(root.object("curation"), c);
  if (root.has("refinement")) detail::parse_refinement(root.object("refinement"), c);
  if (root.has("rescoring")) detail::parse_rescoring(root.object("rescoring"), c);
  if (root.has("attribution")) detail::parse_attribution(root.object("attribution"), c);
  if (c.refinement.mode == curation::RefineMode::Schedule) {
    // replay the schedule against the simulated roster
    int classes = static_cast<int>(c.simulator.classes.size());
    for (std::size_t i = 0; i < c.refinement.schedule.size(); ++i) {
      try {
        const auto step = curation::merge_map(classes, c.refinement.schedule[i]);
        classes = step.empty() ? 0 : step.back() + 1;
      } catch (const std::exception& e) {
        throw ConfigError("refinement.schedule[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  if (doc.contains("_sources")) {
    const json& src = doc.at("_sources");
    if (!src.is_object()) throw ConfigError("_sources: expected an object");
    for (const auto& item : src.items())
      if (item.value() != "paper" && item.value() != "decision")
        throw ConfigError("_sources." + item.key() + ": expected paper or decision");
  }
  return c;
}

/// Canonical, fully resolved form. Excludes the output directory so the
/// digest depends only on what determines the results.
inline json config_to_json(const PipelineConfig& c) {
  json classes = json::array();
  for (const auto& m : c.simulator.classes)
    classes.push_back({{"name", m.name},
                       {"bandA", detail::band_to_json(m.bands[0])},
                       {"bandB", detail::band_to_json(m.bands[1])},
                       {"amplitude_mean", m.amplitude_mean}});
  json confounders = json::array();
  for (const auto& r : c.simulator.confounders)
    confounders.push_back({{"kind", sim::confounder_name(r.spec.kind)},
                           {"margin_probability", r.margin_probability},
                           {"magnitude", r.spec.magnitude},
                           {"affected_fraction", r.spec.affected_fraction}});
  const auto& s = c.simulator;
  const auto& v = s.variability;
  json schedule = json::array();
  for (const auto& step : c.refinement.schedule) {
    json groups = json::array();
    for (const auto& g : step) groups.push_back({{"classes", g.classes}, {"name", g.name}});
    schedule.push_back(groups);
  }
  std::vector<std::string> candidates;
  for (auto k : c.candidates) candidates.push_back(models::kind_name(k));
  const char* constraint = c.basis.deconvolution.constraint == features::DecayConstraint::Full       ? "full"
                           : c.basis.deconvolution.constraint == features::DecayConstraint::Monotone ? "monotone"
                                                                                                     : "nonnegative";
  return {
      {"stages", c.stages},
      {"seed", c.seed},
      {"simulator",
       {{"patients", s.patients},
        {"total_margins", s.total_margins},
        {"margins_per_patient", s.margins_per_patient},
        {"points_per_margin", s.points_per_margin},
        {"classes", classes},
        {"class_proportions", s.class_proportions},
        {"waveform",
         {{"dt", s.waveform.dt},
          {"samples", s.waveform.samples},
          {"irf_fwhm", s.waveform.irf_fwhm},
          {"irf_center", s.waveform.irf_center}}},
        {"variability",
         {{"patient_fraction_sd", v.patient_fraction_sd},
          {"margin_fraction_sd", v.margin_fraction_sd},
          {"tau_jitter", v.tau_jitter},
          {"amplitude_log_sd", v.amplitude_log_sd},
          {"snr_db", v.snr_db},
          {"snr_db_sd", v.snr_db_sd}}},
        {"confounders", confounders},
        {"grey_matter_direction", s.grey_matter_direction},
        {"label_noise",
         {{"rate", c.noise_rate}, {"mode", c.noise_mode == sim::NoiseMode::Adjacent ? "adjacent" : "uniform"}}}}},
      {"features",
       {{"laguerre_order", c.schema.laguerre_order},
        {"alpha", c.basis.alpha},
        {"harmonics", c.schema.harmonics},
        {"intensity_ratio", c.schema.intensity_ratio},
        {"phasor_source", c.basis.phasor_source == features::PhasorSource::Decay ? "decay" : "raw"},
        {"constraint", constraint},
        {"ridge", c.basis.deconvolution.ridge}}},
      {"models", {{"candidates", candidates}, {"hyperparams", models::hyperparams_to_json(c.hyperparams)}}},
      {"curation",
       {{"issue_threshold", c.refinement.issue.issue},
        {"control_threshold", c.refinement.issue.control},
        {"threshold_mode", c.refinement.threshold_mode == curation::ThresholdMode::SelfConfidence
                               ? "self_confidence"
                               : "all_points"}}},
      {"refinement",
       {{"mode", c.refinement.mode == curation::RefineMode::Auto ? "auto" : "schedule"},
        {"schedule", schedule},
        {"epsilon", c.refinement.epsilon},
        {"prune", c.refinement.prune},
        {"prune_flags", c.refinement.prune_source == curation::PruneFlagSource::Nested ? "nested" : "pooled"},
        {"inner_folds", c.refinement.inner_folds}}},
      {"rescoring",
       {{"policy", c.rescoring.policy == eval::RelabelPolicy::Oracle ? "oracle" : "noisy-oracle"},
        {"reliability", c.rescoring.reliability}}},
      {"attribution",
       {{"background", c.attribution.background},
        {"explain_per_class", c.attribution.explain_per_class},
        {"permutations", c.attribution.permutations},
        {"scale", c.attribution.scale == attribution::Scale::Probability ? "probability" : "log_odds"},
        {"top_k", c.attribution.top_k},
        {"importance_repeats", c.attribution.importance_repeats},
        {"importance_metric",
         c.attribution.importance_metric == attribution::ImportanceMetric::Accuracy ? "accuracy" : "mean_auc"}}},
  };
}

/// Digest of the resolved config; the stage list is excluded too, so
/// running stages one at a time or via `all` yields identical artifacts.
inline std::string config_hash(const PipelineConfig& c) {
  json j = config_to_json(c);
  j.erase("stages");
  return hex64(fnv1a(j.dump()));
}

inline PipelineConfig load_config(const io::fs::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(doc);
}

/// Output root: FLIMCL_OUT overrides the config's output_dir.
inline io::fs::path output_root(const PipelineConfig& c) {
  if (const char* env = std::getenv("FLIMCL_OUT"); env != nullptr && *env != '\0') return env;
  return c.output_dir;
}

}  // namespace flimcl::pipeline
