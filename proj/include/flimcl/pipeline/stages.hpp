#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "flimcl/attribution/importance.hpp"
#include "flimcl/attribution/summary.hpp"
#include "flimcl/curation/refine.hpp"
#include "flimcl/eval/lopo.hpp"
#include "flimcl/eval/metrics.hpp"
#include "flimcl/eval/rescoring.hpp"
#include "flimcl/features/extract.hpp"
#include "flimcl/io/artifacts.hpp"
#include "flimcl/pipeline/config.hpp"
#include "flimcl/sim/decay_sim.hpp"

namespace flimcl::pipeline {

/// Bad invocation rather than a bad config (e.g. report with nothing to report).
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kWaveforms = "waveforms.bin";
inline constexpr const char* kFeatures = "features.csv";
inline constexpr const char* kBaseline = "baseline.json";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kBaselineConfusion = "confusion_baseline.csv";
inline constexpr const char* kCuration = "curation_report.json";
inline constexpr const char* kJoint = "confident_joint.csv";
inline constexpr const char* kHistogram = "confidence_histogram.csv";
inline constexpr const char* kRefinement = "refinement.json";
inline constexpr const char* kFinalPosteriors = "posteriors_final.csv";
inline constexpr const char* kPrunedConfusion = "confusion_pruned.csv";
inline constexpr const char* kAttribution = "attribution.csv";
inline constexpr const char* kInstances = "attribution_instances.json";
inline constexpr const char* kImportance = "permutation_importance.csv";
inline constexpr const char* kFinalModel = "model_final.json";
inline constexpr const char* kSummary = "summary.txt";
inline constexpr const char* kHistory = "scheme_history.csv";
inline constexpr const char* kMarginStatus = "margin_status.csv";

inline std::string posteriors(const std::string& kind) { return "posteriors_" + kind + ".csv"; }
inline std::string scheme_confusion(int classes) { return "confusion_" + std::to_string(classes) + "class.csv"; }
inline std::string scheme_histogram(int classes) {
  return "confidence_histogram_" + std::to_string(classes) + "class.csv";
}
}  // namespace files

struct Context {
  PipelineConfig config;
  io::fs::path out;
  std::string hash;
  std::ostream* log = &std::cerr;

  Context(PipelineConfig c, io::fs::path dir) : config(std::move(c)), out(std::move(dir)), hash(config_hash(config)) {}

  io::Provenance provenance(const std::string& stage) const { return {hash, config.seed, stage}; }
  io::fs::path path(const std::string& name) const { return out / name; }

  /// Fails unless `name` exists and was produced under this config and seed.
  void require(const std::string& name, const std::string& producer, const std::string& consumer) const {
    const auto p = path(name);
    if (!io::fs::exists(p))
      throw DependencyError("stage '" + consumer + "' needs " + name + "; run stage '" + producer + "' first");
    std::string tag;
    if (p.extension() == ".json") {
      const auto j = io::read_json(p);
      if (j.contains("provenance")) tag = j["provenance"].value("config", "") + "/" +
                                          std::to_string(j["provenance"].value("seed", std::uint64_t{0}));
    } else if (p.extension() == ".csv") {
      std::ifstream in(p);
      std::string line;
      std::getline(in, line);
      const auto c = line.find("config="), s = line.find(" seed="), e = line.find(" stage=");
      if (c != std::string::npos && s != std::string::npos && e != std::string::npos)
        tag = line.substr(c + 7, s - c - 7) + "/" + line.substr(s + 6, e - s - 6);
    } else {
      std::ifstream in(p, std::ios::binary);
      std::string magic, header;
      std::getline(in, magic);
      std::getline(in, header);
      try {
        const auto j = json::parse(header);
        tag = j.at("provenance").value("config", "") + "/" +
              std::to_string(j.at("provenance").value("seed", std::uint64_t{0}));
      } catch (const json::exception&) {
      }
    }
    if (tag != hash + "/" + std::to_string(config.seed))
      throw DependencyError("stage '" + consumer + "': " + name +
                            " was produced by a different config or seed; rerun stage '" + producer + "'");
  }
};

// ---------------------------------------------------------------------------
// Shared helpers

inline DatasetManifest load_manifest(const Context& ctx, const std::string& consumer) {
  ctx.require(files::kManifest, "synth", consumer);
  return io::manifest_from_json(io::read_json(ctx.path(files::kManifest)));
}

inline io::FeatureFile load_features(const Context& ctx, const DatasetManifest& m, const std::string& consumer) {
  ctx.require(files::kFeatures, "features", consumer);
  auto f = io::read_features(ctx.path(files::kFeatures), m.num_classes());
  if (f.table.size() != m.points.size()) throw DependencyError("features.csv does not match manifest.json");
  for (std::size_t i = 0; i < m.points.size(); ++i)
    if (f.table.point_id[i] != m.points[i].point_id || f.table.labels[i] != m.points[i].label)
      throw DependencyError("features.csv does not match manifest.json; rerun stage 'features'");
  return f;
}

inline eval::FoldPlan patient_plan(const PointTable& t) {
  std::vector<int> ids(t.patient);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return eval::lopo_splits(ids);
}

inline json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json doubles(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(nan_to_null(x));
  return out;
}

inline json int_matrix(const Eigen::MatrixXi& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<int> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

/// Mean CS of the points observed-labeled with each class.
inline std::vector<double> class_mean_cs(const curation::SchemeAnalysis& a) {
  std::vector<double> sum(a.scheme.names.size(), 0.0), n(a.scheme.names.size(), 0.0);
  for (std::size_t k = 0; k < a.labels.size(); ++k) {
    sum[static_cast<std::size_t>(a.labels[k])] += a.cs[k];
    n[static_cast<std::size_t>(a.labels[k])] += 1.0;
  }
  for (std::size_t c = 0; c < sum.size(); ++c) sum[c] = n[c] > 0 ? sum[c] / n[c] : std::nan("");
  return sum;
}

inline json status_counts(const curation::SchemeAnalysis& a) {
  int issue = 0, control = 0, indeterminate = 0;
  for (auto s : a.margin_flags.status) {
    issue += s == curation::MarginStatus::Issue;
    control += s == curation::MarginStatus::Control;
    indeterminate += s == curation::MarginStatus::Indeterminate;
  }
  return {{"issue", issue}, {"indeterminate", indeterminate}, {"control", control}};
}

inline json audit_json(const eval::FlagAudit& f) {
  return {{"margins", f.margins},
          {"corrupted", f.corrupted},
          {"issue", f.issue},
          {"issue_corrupted", f.issue_corrupted},
          {"indeterminate", f.indeterminate},
          {"indeterminate_corrupted", f.indeterminate_corrupted},
          {"control", f.control},
          {"control_corrupted", f.control_corrupted},
          {"base_rate", f.base_rate()},
          {"enrichment", nan_to_null(f.enrichment())},
          {"recall", nan_to_null(f.recall())}};
}

/// Scheme-level summary shared by the curation and refinement reports.
inline json analysis_json(const curation::SchemeAnalysis& a) {
  return {{"classes", a.scheme.num_classes()},
          {"class_names", a.scheme.names},
          {"map", a.scheme.map},
          {"accuracy", a.accuracy()},
          {"lc_fraction", a.lc_fraction()},
          {"mean_auc", nan_to_null(a.metrics.mean_auc)},
          {"auc", doubles(a.metrics.auc)},
          {"recall", doubles(a.confusion.recall())},
          {"mean_cs", doubles(class_mean_cs(a))},
          {"thresholds", doubles(a.tau)},
          {"confident_joint", int_matrix(a.joint.counts)},
          {"confusion", int_matrix(a.confusion.counts)},
          {"margin_status", status_counts(a)}};
}

inline json margins_json(const curation::SchemeAnalysis& a, const PointTable& t) {
  json out = json::array();
  for (std::size_t m = 0; m < a.margins.ids.size(); ++m) {
    const auto first = a.margins.members[m].front();
    out.push_back({{"margin_id", a.margins.ids[m]},
                   {"patient_id", t.patient[first]},
                   {"label", a.labels[first]},
                   {"points", a.margins.members[m].size()},
                   {"lc_count", a.margin_flags.lc_count[m]},
                   {"lc_fraction", a.margin_flags.lc_fraction[m]},
                   {"mcs", a.mcs[m]},
                   {"status", curation::status_name(a.margin_flags.status[m])}});
  }
  return out;
}

/// CS histogram over [0,1] in 20 bins, counts split by observed class.
inline void write_histogram(const io::fs::path& path, const curation::SchemeAnalysis& a, const io::Provenance& prov) {
  constexpr int kBins = 20;
  const auto classes = a.scheme.names.size();
  std::vector<std::vector<int>> counts(kBins, std::vector<int>(classes, 0));
  for (std::size_t k = 0; k < a.cs.size(); ++k) {
    const int b = std::clamp(static_cast<int>(a.cs[k] * kBins), 0, kBins - 1);
    counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(a.labels[k])]++;
  }
  std::vector<std::string> header{"bin_lo", "bin_hi"};
  header.insert(header.end(), a.scheme.names.begin(), a.scheme.names.end());
  io::CsvWriter csv(header);
  for (int b = 0; b < kBins; ++b) {
    std::vector<std::string> row{io::fmt(b / static_cast<double>(kBins)), io::fmt((b + 1) / static_cast<double>(kBins))};
    for (int c : counts[static_cast<std::size_t>(b)]) row.push_back(std::to_string(c));
    csv.add_row(row);
  }
  csv.write(path, prov);
}

// ---------------------------------------------------------------------------
// Stages

inline void stage_synth(const Context& ctx) {
  const auto& cfg = ctx.config;
  sim::SimConfig sc = cfg.simulator;
  sc.seed = cfg.simulator_seed();
  auto syn = sim::synth_dataset(sc);
  auto [manifest, log] = sim::inject_label_noise(std::move(syn.manifest), cfg.noise_rate, cfg.noise_mode,
                                                 cfg.noise_seed());
  (void)log;
  const auto prov = ctx.provenance("synth");
  json doc = io::manifest_to_json(manifest);
  json resolved = config_to_json(cfg);
  resolved.erase("stages");
  doc["config"] = resolved;
  io::write_json(ctx.path(files::kManifest), doc, prov);
  std::vector<int> ids;
  for (const auto& p : manifest.points) ids.push_back(p.point_id);
  io::write_waveforms(ctx.path(files::kWaveforms), ids, syn.waveforms, prov);
  *ctx.log << "synth: " << manifest.patients.size() << " patients, " << manifest.margins.size() << " margins, "
           << manifest.points.size() << " points, " << manifest.corruption.entries.size() << " corrupted margins\n";
}

inline void stage_features(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(ctx, "features");
  ctx.require(files::kWaveforms, "synth", "features");
  const auto wf = io::read_waveforms(ctx.path(files::kWaveforms));
  if (wf.point_ids.size() != manifest.points.size())
    throw DependencyError("waveforms.bin does not match manifest.json; rerun stage 'synth'");
  const features::FeatureExtractor fx(cfg.schema, sim::make_irf(cfg.simulator.waveform), cfg.simulator.waveform.samples,
                                      cfg.basis);
  PointTable t;
  t.num_classes = manifest.num_classes();
  t.features.resize(static_cast<Eigen::Index>(manifest.points.size()),
                    static_cast<Eigen::Index>(cfg.schema.dimension()));
  parallel_for(manifest.points.size(), [&](std::size_t i) {
    const auto f = fx.extract(wf.waveforms[i]);
    for (std::size_t k = 0; k < f.size(); ++k)
      t.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f[k];
  });
  for (const auto& p : manifest.points) {
    t.labels.push_back(p.label);
    t.patient.push_back(p.patient_id);
    t.margin.push_back(p.margin_id);
    t.point_id.push_back(p.point_id);
  }
  io::write_features(ctx.path(files::kFeatures), t, cfg.schema.names(), ctx.provenance("features"));
  *ctx.log << "features: " << t.size() << " x " << t.features.cols() << "\n";
}

inline void stage_train(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(ctx, "train");
  const auto ff = load_features(ctx, manifest, "train");
  const auto& t = ff.table;
  const auto plan = patient_plan(t);
  const auto prov = ctx.provenance("train");

  std::vector<eval::Candidate> candidates;
  std::map<std::string, Matrix> posteriors;
  json cand = json::array();
  for (auto kind : cfg.candidates) {
    const auto cv = eval::cross_val_predict(t, kind, cfg.hyperparams, plan,
                                            curation::refine_step_seed(cfg.model_seed(), 0));
    const auto m = eval::model_metrics(cv.posteriors, t.labels);
    candidates.push_back({models::kind_name(kind), m});
    posteriors[models::kind_name(kind)] = cv.posteriors;
    io::write_posteriors(ctx.path(files::posteriors(models::kind_name(kind))), t.point_id, cv.posteriors,
                         manifest.class_names, prov);
    cand.push_back({{"kind", models::kind_name(kind)},
                    {"accuracy", m.accuracy},
                    {"mean_auc", nan_to_null(m.mean_auc)},
                    {"auc", doubles(m.auc)},
                    {"selection_score", m.selection_score}});
    *ctx.log << "train: " << models::kind_name(kind) << " accuracy " << m.accuracy << " mean AUC " << m.mean_auc
             << "\n";
  }
  const std::string selected = eval::select_baseline(candidates);
  io::write_json(ctx.path(files::kBaseline),
                 {{"rule", "argmax (accuracy + mean one-vs-rest AUC) / 2 under leave-one-patient-out"},
                  {"candidates", cand},
                  {"selected", selected},
                  {"class_names", manifest.class_names}},
                 prov);

  // Metrics report for the selected baseline.
  const Matrix& p = posteriors.at(selected);
  const auto pred = curation::predicted_labels(p);
  const auto m = eval::model_metrics(p, t.labels);
  const auto cm = eval::confusion_matrix(pred, t.labels, t.num_classes);
  json folds = json::array();
  for (const auto& f : plan.folds) {
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.patient[i] == f.test_patient) {
        ++n;
        hit += pred[i] == t.labels[i];
      }
    folds.push_back({{"test_patient", f.test_patient},
                     {"points", n},
                     {"accuracy", n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0}});
  }
  io::write_json(ctx.path(files::kMetrics),
                 {{"model", selected},
                  {"class_names", manifest.class_names},
                  {"pooled_accuracy", m.accuracy},
                  {"mean_auc", nan_to_null(m.mean_auc)},
                  {"auc", doubles(m.auc)},
                  {"recall", doubles(cm.recall())},
                  {"confusion", int_matrix(cm.counts)},
                  {"folds", folds}},
                 prov);
  io::write_count_matrix(ctx.path(files::kBaselineConfusion), cm.counts, manifest.class_names, "observed\\predicted",
                         prov);
  *ctx.log << "train: selected " << selected << "\n";
}

struct BaselineArtifacts {
  std::string selected;
  models::ModelKind kind;
  Matrix posteriors;
};

inline BaselineArtifacts load_baseline(const Context& ctx, const PointTable& t, const std::string& consumer) {
  ctx.require(files::kBaseline, "train", consumer);
  const auto j = io::read_json(ctx.path(files::kBaseline));
  BaselineArtifacts b;
  b.selected = j.at("selected").get<std::string>();
  b.kind = models::parse_kind(b.selected);
  ctx.require(files::posteriors(b.selected), "train", consumer);
  b.posteriors = io::read_posteriors(ctx.path(files::posteriors(b.selected)), t.point_id);
  return b;
}

inline void stage_curate(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(ctx, "curate");
  const auto ff = load_features(ctx, manifest, "curate");
  const auto& t = ff.table;
  const auto base = load_baseline(ctx, t, "curate");
  const auto scheme = curation::ClassScheme::identity(manifest.class_names);
  const auto a = curation::analyze(scheme, t.labels, base.posteriors, t.margin, cfg.refinement);
  const auto prov = ctx.provenance("curate");

  json points = json::array();
  for (std::size_t k = 0; k < t.size(); ++k)
    points.push_back({{"point_id", t.point_id[k]},
                      {"label", a.labels[k]},
                      {"predicted", a.predictions[k]},
                      {"cs", a.cs[k]},
                      {"low_confidence", a.lc[k] != 0}});
  io::write_json(ctx.path(files::kCuration),
                 {{"model", base.selected},
                  {"threshold_mode", cfg.refinement.threshold_mode == curation::ThresholdMode::SelfConfidence
                                         ? "self_confidence"
                                         : "all_points"},
                  {"issue_threshold", cfg.refinement.issue.issue},
                  {"control_threshold", cfg.refinement.issue.control},
                  {"scheme", analysis_json(a)},
                  {"scheme_history", json::array({a.scheme.num_classes()})},
                  {"margins", margins_json(a, t)},
                  {"points", points}},
                 prov);
  io::write_count_matrix(ctx.path(files::kJoint), a.joint.counts, a.scheme.names, "observed\\predicted", prov);
  write_histogram(ctx.path(files::kHistogram), a, prov);
  *ctx.log << "curate: " << a.lc_fraction() * 100 << "% low-confidence points\n";
}

/// Accuracy over the points not flagged LC. Reference only: scoring on a
/// test set filtered by its own flags is not the pruning protocol.
inline double lc_excluded_accuracy(const curation::SchemeAnalysis& a) {
  std::vector<Label> pred, truth;
  for (std::size_t k = 0; k < a.labels.size(); ++k)
    if (!a.lc[k]) {
      pred.push_back(a.predictions[k]);
      truth.push_back(a.labels[k]);
    }
  return pred.empty() ? std::nan("") : eval::accuracy(pred, truth);
}

inline void stage_refine(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(ctx, "refine");
  const auto ff = load_features(ctx, manifest, "refine");
  const auto& t = ff.table;
  const auto base = load_baseline(ctx, t, "refine");
  ctx.require(files::kCuration, "curate", "refine");
  const auto prov = ctx.provenance("refine");

  const auto r = curation::refine(t, manifest.class_names, base.kind, cfg.hyperparams, cfg.model_seed(),
                                  cfg.refinement, &base.posteriors);
  json steps = json::array();
  std::vector<int> history;
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& st = r.steps[i];
    json merge = json::array();
    for (const auto& g : st.merge) merge.push_back({{"classes", g.classes}, {"name", g.name}});
    json s = analysis_json(st.analysis);
    s["merge"] = merge;
    s["accepted"] = st.accepted;
    s["gain"] = st.gain;
    s["regrouped_accuracy"] = st.regrouped_accuracy;
    s["flag_audit"] = audit_json(eval::flag_audit(st.analysis, manifest.corruption));
    steps.push_back(s);
    if (st.accepted) history.push_back(st.analysis.scheme.num_classes());
    io::write_count_matrix(ctx.path(files::scheme_confusion(st.analysis.scheme.num_classes())),
                           st.analysis.confusion.counts, st.analysis.scheme.names, "observed\\predicted", prov);
    write_histogram(ctx.path(files::scheme_histogram(st.analysis.scheme.num_classes())), st.analysis, prov);
  }
  const auto& fin = r.final_analysis();
  io::write_posteriors(ctx.path(files::kFinalPosteriors), t.point_id, fin.posteriors, fin.scheme.names, prov);

  json doc = {{"model", base.selected},
              {"mode", cfg.refinement.mode == curation::RefineMode::Auto ? "auto" : "schedule"},
              {"epsilon", cfg.refinement.epsilon},
              {"steps", steps},
              {"final_step", r.final_step},
              {"scheme_history", history},
              {"final_margins", margins_json(fin, t)}};
  if (r.pruning) {
    const auto& pr = *r.pruning;
    io::write_count_matrix(ctx.path(files::kPrunedConfusion), pr.after.confusion.counts, fin.scheme.names,
                           "observed\\predicted", prov);
    doc["pruning"] = {
        {"flag_source", cfg.refinement.prune_source == curation::PruneFlagSource::Nested ? "nested" : "pooled"},
        {"test_filtered", false},
        {"removed_fraction", pr.removed_fraction},
        {"removed_per_fold", pr.removed_per_fold},
        {"train_size_per_fold", pr.train_size_per_fold},
        {"accuracy_before", pr.accuracy_before},
        {"accuracy_after", pr.accuracy_after},
        {"gain", pr.accuracy_after - pr.accuracy_before},
        {"accuracy_excluding_lc_test_points", nan_to_null(lc_excluded_accuracy(fin))},
        {"after", analysis_json(pr.after)}};
  }
  eval::RescoringOptions ro = cfg.rescoring;
  ro.seed = cfg.rescoring_seed();
  const auto rs = eval::rescoring_study(fin, manifest.corruption, ro);
  json groups = json::array();
  for (const auto& g : rs.groups)
    groups.push_back({{"group", g.group},
                      {"margins", g.margins},
                      {"points", g.points},
                      {"corrupted_margins", g.corrupted_margins},
                      {"relabeled_margins", g.relabeled_margins},
                      {"accuracy_before", g.accuracy_before},
                      {"accuracy_after", g.accuracy_after}});
  doc["rescoring"] = {{"policy", ro.policy == eval::RelabelPolicy::Oracle ? "oracle" : "noisy-oracle"},
                      {"reliability", ro.reliability},
                      {"groups", groups},
                      {"warnings", rs.warnings}};
  io::write_json(ctx.path(files::kRefinement), doc, prov);
  *ctx.log << "refine: final scheme has " << fin.scheme.num_classes() << " classes, accuracy " << fin.accuracy()
           << "\n";
}

inline void stage_attrib(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(ctx, "attrib");
  const auto ff = load_features(ctx, manifest, "attrib");
  ctx.require(files::kRefinement, "refine", "attrib");
  ctx.require(files::kFinalPosteriors, "refine", "attrib");
  const auto ref = io::read_json(ctx.path(files::kRefinement));
  const auto& fin_json = ref.at("steps").at(ref.at("final_step").get<std::size_t>());
  curation::ClassScheme scheme;
  scheme.names = fin_json.at("class_names").get<std::vector<std::string>>();
  scheme.map = fin_json.at("map").get<std::vector<Label>>();
  scheme.original = manifest.class_names;
  scheme.validate();
  const auto kind = models::parse_kind(ref.at("model").get<std::string>());

  PointTable t = ff.table;
  t.labels = scheme.apply(t.labels);
  t.num_classes = scheme.num_classes();
  const Matrix p = io::read_posteriors(ctx.path(files::kFinalPosteriors), t.point_id);

  // Deployment model: all patients, minus low-confidence points when pruning.
  std::vector<std::size_t> rows(t.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (cfg.refinement.prune) {
    const auto tau = curation::class_thresholds(p, t.labels, cfg.refinement.threshold_mode, scheme.names);
    rows = curation::prune_training_set(rows, curation::flag_low_confidence(p, t.labels, tau), t.labels, scheme.names)
               .kept;
  }
  const PointTable train = t.subset(rows);
  const std::uint64_t seed = cfg.attribution_seed();
  const auto model = models::train(kind, train.features, train.labels, t.num_classes, cfg.hyperparams,
                                   derive_seed(seed, 1), train.patient);
  auto trained = model;
  trained.class_names = scheme.names;
  const auto prov = ctx.provenance("attrib");
  auto model_doc = models::model_to_json(trained);
  io::write_json(ctx.path(files::kFinalModel), model_doc, prov);

  const attribution::BatchModel f = [&](const Matrix& x) { return models::predict_proba(model, x); };
  const auto bg_rows = attribution::stratified_sample(train.labels, cfg.attribution.background, derive_seed(seed, 2));
  Matrix background(static_cast<Eigen::Index>(bg_rows.size()), t.features.cols());
  for (std::size_t i = 0; i < bg_rows.size(); ++i)
    background.row(static_cast<Eigen::Index>(i)) = train.features.row(static_cast<Eigen::Index>(bg_rows[i]));

  const auto ex_rows = attribution::stratified_sample(
      t.labels, cfg.attribution.explain_per_class * static_cast<std::size_t>(t.num_classes), derive_seed(seed, 3));
  const PointTable explained = t.subset(ex_rows);
  attribution::ShapleyOptions so;
  so.permutations = cfg.attribution.permutations;
  so.scale = cfg.attribution.scale;
  so.seed = derive_seed(seed, 4);
  const auto res =
      attribution::attribute(f, background, explained.features, explained.labels, scheme.names, ff.names, so);

  io::CsvWriter csv({"class", "feature", "mean_abs_attribution", "rank"});
  for (const auto& ca : res.classes) {
    std::vector<std::size_t> order(ff.names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ca.rank[a] < ca.rank[b]; });
    for (auto k : order)
      csv.add_row({ca.class_name, ff.names[k], io::fmt(ca.mean_abs(static_cast<Eigen::Index>(k))),
                   std::to_string(ca.rank[k])});
  }
  csv.write(ctx.path(files::kAttribution), prov);

  // Full attributions for the top-k most confident explained points per class.
  json instances = json::array();
  for (int c = 0; c < t.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < res.instances.size(); ++i)
      if (res.instances[i].class_index == c) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return res.instances[a].shapley.prediction > res.instances[b].shapley.prediction;
    });
    if (idx.size() > cfg.attribution.top_k) idx.resize(cfg.attribution.top_k);
    for (auto i : idx) {
      const auto& s = res.instances[i].shapley;
      json values = json::object(), se = json::object();
      for (std::size_t k = 0; k < ff.names.size(); ++k) {
        values[ff.names[k]] = s.values(static_cast<Eigen::Index>(k));
        se[ff.names[k]] = s.std_error(static_cast<Eigen::Index>(k));
      }
      instances.push_back({{"point_id", explained.point_id[i]},
                           {"class", scheme.names[static_cast<std::size_t>(c)]},
                           {"prediction", s.prediction},
                           {"baseline", s.baseline},
                           {"attributions", values},
                           {"std_error", se}});
    }
  }
  io::write_json(ctx.path(files::kInstances),
                 {{"scale", cfg.attribution.scale == attribution::Scale::Probability ? "probability" : "log_odds"},
                  {"background_rows", bg_rows.size()},
                  {"permutations", cfg.attribution.permutations},
                  {"instances", instances}},
                 prov);

  // Permutation importance is in-sample: the deployment model has no held-out patients.
  const auto imp = attribution::permutation_importance(f, train.features, train.labels,
                                                       cfg.attribution.importance_metric,
                                                       cfg.attribution.importance_repeats, derive_seed(seed, 5));
  const auto imp_rank = attribution::ranks_descending(imp);
  io::CsvWriter pcsv({"feature", "importance", "rank"});
  for (std::size_t k = 0; k < ff.names.size(); ++k)
    pcsv.add_row({ff.names[k], io::fmt(imp(static_cast<Eigen::Index>(k))), std::to_string(imp_rank[k])});
  pcsv.write(ctx.path(files::kImportance), prov);
  *ctx.log << "attrib: " << res.instances.size() << " points explained\n";
}

}  // namespace flimcl::pipeline
