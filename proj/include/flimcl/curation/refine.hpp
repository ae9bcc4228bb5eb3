#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "flimcl/curation/confident.hpp"
#include "flimcl/curation/prune.hpp"
#include "flimcl/curation/scheme.hpp"
#include "flimcl/eval/lopo.hpp"
#include "flimcl/eval/metrics.hpp"
#include "flimcl/models/model.hpp"

namespace flimcl::curation {

enum class RefineMode {
  Auto,      // merge the most confused adjacent pair until accuracy stops improving
  Schedule,  // apply a fixed list of merge steps
};

enum class PruneFlagSource {
  Nested,  // flags from inner patient folds inside each outer training split
  Pooled,  // flags from the pooled out-of-fold posteriors (leaks across folds)
};

struct RefineOptions {
  RefineMode mode = RefineMode::Auto;
  std::vector<std::vector<MergeGroup>> schedule;
  double epsilon = 0.005;  // minimum accuracy gain (fraction) to accept a merge
  ThresholdMode threshold_mode = ThresholdMode::SelfConfidence;
  IssueThresholds issue;
  bool prune = true;
  PruneFlagSource prune_source = PruneFlagSource::Nested;
  int inner_folds = 3;
};

/// Everything confident learning derives from one set of out-of-fold
/// posteriors in one class scheme.
struct SchemeAnalysis {
  ClassScheme scheme;
  std::vector<Label> labels;  // observed labels in this scheme
  Matrix posteriors;
  std::vector<Label> predictions;
  std::vector<double> cs;
  std::vector<double> tau;
  ConfidentJoint joint;
  std::vector<char> lc;
  Grouping margins;
  std::vector<double> mcs;
  MarginFlags margin_flags;
  eval::ModelMetrics metrics;
  eval::ConfusionMatrix confusion;

  double accuracy() const { return metrics.accuracy; }
  double lc_fraction() const {
    std::size_t n = 0;
    for (char f : lc) n += f ? 1 : 0;
    return lc.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(lc.size());
  }
};

inline SchemeAnalysis analyze(const ClassScheme& scheme, const std::vector<Label>& labels, const Matrix& posteriors,
                              const std::vector<int>& margin_of_point, const RefineOptions& opt) {
  SchemeAnalysis a;
  a.scheme = scheme;
  a.labels = labels;
  a.posteriors = posteriors;
  a.predictions = predicted_labels(posteriors);
  a.cs = confidence_scores(posteriors);
  a.tau = class_thresholds(posteriors, labels, opt.threshold_mode, scheme.names);
  a.joint = confident_joint(posteriors, labels, a.tau);
  a.lc = flag_low_confidence(posteriors, labels, a.tau);
  a.margins = Grouping::from_keys(margin_of_point);
  a.mcs = margin_confidence(a.cs, a.margins);
  a.margin_flags = flag_label_issues(a.lc, a.margins, opt.issue);
  a.metrics = eval::model_metrics(posteriors, labels);
  a.confusion = eval::confusion_matrix(a.predictions, labels, scheme.num_classes());
  return a;
}

struct MergeChoice {
  Label lower = -1;  // merge classes (lower, lower + 1)
  double confusion = 0.0;
  double mean_cs = 0.0;
};

/// Adjacent pair maximizing C[c][c+1]/n_c + C[c+1][c]/n_{c+1}; ties go to the
/// pair with lower mean CS over its labeled points, then the lower index.
inline MergeChoice select_merge_pair(const ConfidentJoint& joint, const std::vector<Label>& labels,
                                     const std::vector<double>& cs) {
  const auto classes = joint.counts.rows();
  if (classes < 2) throw InputError("need at least two classes to merge");
  std::vector<double> n(static_cast<std::size_t>(classes), 0.0), cs_sum(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    n[static_cast<std::size_t>(labels[k])] += 1.0;
    cs_sum[static_cast<std::size_t>(labels[k])] += cs[k];
  }
  MergeChoice best;
  for (Eigen::Index c = 0; c + 1 < classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    MergeChoice m;
    m.lower = static_cast<Label>(c);
    m.confusion = (n[i] > 0 ? joint.counts(c, c + 1) / n[i] : 0.0) +
                  (n[i + 1] > 0 ? joint.counts(c + 1, c) / n[i + 1] : 0.0);
    const double pair_n = n[i] + n[i + 1];
    m.mean_cs = pair_n > 0 ? (cs_sum[i] + cs_sum[i + 1]) / pair_n : 1.0;
    if (best.lower < 0 || m.confusion > best.confusion ||
        (m.confusion == best.confusion && m.mean_cs < best.mean_cs))
      best = m;
  }
  return best;
}

struct RefineStep {
  std::vector<MergeGroup> merge;  // empty for the starting scheme
  SchemeAnalysis analysis;
  double regrouped_accuracy = 0.0;  // starting predictions mapped into this scheme, no retraining
  double gain = 0.0;                // accuracy change against the previous accepted step
  bool accepted = true;
};

struct PruneReport {
  std::vector<std::size_t> removed_per_fold;
  std::vector<std::size_t> train_size_per_fold;
  double removed_fraction = 0.0;  // removed / training rows, summed over folds
  SchemeAnalysis after;           // out-of-fold analysis of the pruned-training models
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
};

struct RefineResult {
  std::vector<RefineStep> steps;
  std::size_t final_step = 0;
  std::optional<PruneReport> pruning;

  const SchemeAnalysis& final_analysis() const { return steps.at(final_step).analysis; }

  std::vector<std::size_t> accepted_steps() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (steps[i].accepted) out.push_back(i);
    return out;
  }
};

/// Thresholds over the classes present in `labels`; absent classes get a
/// threshold above 1 so nothing predicted into them is flagged.
inline std::vector<double> thresholds_present(const Matrix& p, const std::vector<Label>& labels, ThresholdMode mode) {
  const auto classes = static_cast<std::size_t>(p.cols());
  std::vector<double> sum(classes, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto y = static_cast<std::size_t>(labels[k]);
    count[y]++;
    sum[y] += p(static_cast<Eigen::Index>(k), labels[k]);
  }
  std::vector<double> tau(classes);
  for (std::size_t j = 0; j < classes; ++j)
    tau[j] = count[j] == 0 ? std::numeric_limits<double>::infinity()
                           : (mode == ThresholdMode::SelfConfidence ? sum[j] / static_cast<double>(count[j])
                                                                    : p.col(static_cast<Eigen::Index>(j)).mean());
  return tau;
}

/// LC flags for the given training rows computed only from those rows:
/// patients are dealt into `folds` groups and each group is scored by a
/// model trained on the others.
inline std::vector<char> nested_flags(const PointTable& table, const std::vector<std::size_t>& rows,
                                      models::ModelKind kind, const models::Hyperparams& hp, int folds,
                                      ThresholdMode mode, std::uint64_t seed) {
  std::vector<int> patients;
  for (auto r : rows) patients.push_back(table.patient[r]);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  if (folds < 2 || patients.size() < 2) throw ParameterError("nested pruning needs >= 2 folds and patients");
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(folds), patients.size());
  auto group_of = [&](int patient) {
    const auto it = std::lower_bound(patients.begin(), patients.end(), patient);
    return static_cast<std::size_t>(it - patients.begin()) % k;
  };

  const PointTable sub = table.subset(rows);
  Matrix p(static_cast<Eigen::Index>(rows.size()), table.num_classes);
  for (std::size_t g = 0; g < k; ++g) {
    std::vector<std::size_t> fit, held;
    for (std::size_t i = 0; i < rows.size(); ++i) (group_of(sub.patient[i]) == g ? held : fit).push_back(i);
    const PointTable tr = sub.subset(fit);
    const auto model = models::train(kind, tr.features, tr.labels, table.num_classes, hp,
                                      derive_seed(seed, 0x6e657374, g), tr.patient);
    const Matrix ph = models::predict_proba(model, sub.subset(held).features);
    for (std::size_t i = 0; i < held.size(); ++i) p.row(static_cast<Eigen::Index>(held[i])) = ph.row(static_cast<Eigen::Index>(i));
  }
  const auto tau = thresholds_present(p, sub.labels, mode);
  const auto local = flag_low_confidence(p, sub.labels, tau);
  std::vector<char> flags(table.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) flags[rows[i]] = local[i];
  return flags;
}

/// Fold-model seed of refinement step `step`; the pruned retrain reuses the
/// final step's seed so the before/after comparison isolates pruning.
inline std::uint64_t refine_step_seed(std::uint64_t seed, std::size_t step) {
  return derive_seed(seed, 0x72656669, step);
}

/// Iterative class merging under LOPO, then one pruned retrain.
/// `table.labels` are observed labels in the original roster.
/// `initial_posteriors`, when given, are reused as the starting scheme's
/// out-of-fold posteriors (e.g. from baseline selection run with
/// refine_step_seed(seed, 0)).
inline RefineResult refine(const PointTable& table, const std::vector<std::string>& roster, models::ModelKind kind,
                           const models::Hyperparams& hp, std::uint64_t seed, const RefineOptions& opt,
                           const Matrix* initial_posteriors = nullptr) {
  opt.issue.validate();
  if (table.num_classes < 2) throw TrainingError("refinement needs at least two classes");
  const auto plan = eval::lopo_splits([&] {
    std::vector<int> ids(table.patient);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }());

  auto evaluate = [&](const ClassScheme& scheme, std::size_t step_index) {
    PointTable t = table;
    t.labels = scheme.apply(table.labels);
    t.num_classes = scheme.num_classes();
    Matrix p;
    if (step_index == 0 && initial_posteriors != nullptr) {
      p = *initial_posteriors;
    } else {
      p = eval::cross_val_predict(t, kind, hp, plan, refine_step_seed(seed, step_index)).posteriors;
    }
    return analyze(scheme, t.labels, p, table.margin, opt);
  };

  RefineResult result;
  RefineStep start;
  start.analysis = evaluate(ClassScheme::identity(roster), 0);
  start.regrouped_accuracy = start.analysis.accuracy();
  result.steps.push_back(std::move(start));
  const ClassScheme origin_scheme = result.steps.front().analysis.scheme;
  const std::vector<Label> origin_predictions = result.steps.front().analysis.predictions;
  const std::vector<Label> origin_labels = result.steps.front().analysis.labels;

  auto regrouped = [&](const ClassScheme& scheme) {
    const auto map = transition_map(origin_scheme, scheme);
    const auto r = regroup_predictions(origin_predictions, origin_labels, map);
    return eval::accuracy(r.predictions, r.labels);
  };

  if (opt.mode == RefineMode::Schedule) {
    for (const auto& groups : opt.schedule) {
      const SchemeAnalysis& prev = result.steps[result.final_step].analysis;
      RefineStep step;
      step.merge = groups;
      step.analysis = evaluate(merge_classes(prev.scheme, groups), result.steps.size());
      step.regrouped_accuracy = regrouped(step.analysis.scheme);
      step.gain = step.analysis.accuracy() - prev.accuracy();
      result.steps.push_back(std::move(step));
      result.final_step = result.steps.size() - 1;
    }
  } else {
    while (result.steps[result.final_step].analysis.scheme.num_classes() > 2) {
      const auto& prev = result.steps[result.final_step].analysis;
      const auto choice = select_merge_pair(prev.joint, prev.labels, prev.cs);
      RefineStep step;
      step.merge = {MergeGroup{{choice.lower, choice.lower + 1}, ""}};
      step.analysis = evaluate(merge_classes(prev.scheme, step.merge), result.steps.size());
      step.regrouped_accuracy = regrouped(step.analysis.scheme);
      step.gain = step.analysis.accuracy() - prev.accuracy();
      step.accepted = step.gain >= opt.epsilon;
      result.steps.push_back(std::move(step));
      if (!result.steps.back().accepted) break;
      result.final_step = result.steps.size() - 1;
    }
  }

  if (!opt.prune) return result;
  const auto& fin = result.final_analysis();
  PointTable t = table;
  t.labels = fin.labels;
  t.num_classes = fin.scheme.num_classes();
  const std::uint64_t prune_seed = derive_seed(seed, 0x7072756e);
  eval::TrainFilter filter = [&](std::size_t f, const std::vector<std::size_t>& train_rows) {
    const auto flags = opt.prune_source == PruneFlagSource::Pooled
                           ? fin.lc
                           : nested_flags(t, train_rows, kind, hp, opt.inner_folds, opt.threshold_mode,
                                          derive_seed(prune_seed, plan.folds[f].test_patient));
    return prune_training_set(train_rows, flags, t.labels, fin.scheme.names).kept;
  };
  const auto cv = eval::cross_val_predict(t, kind, hp, plan, refine_step_seed(seed, result.final_step), filter);
  PruneReport pr;
  pr.removed_per_fold = cv.removed;
  pr.train_size_per_fold = cv.train_sizes;
  std::size_t removed = 0, total = 0;
  for (std::size_t f = 0; f < cv.removed.size(); ++f) {
    removed += cv.removed[f];
    total += cv.removed[f] + cv.train_sizes[f];
  }
  pr.removed_fraction = total == 0 ? 0.0 : static_cast<double>(removed) / static_cast<double>(total);
  pr.after = analyze(fin.scheme, fin.labels, cv.posteriors, table.margin, opt);
  pr.accuracy_before = fin.accuracy();
  pr.accuracy_after = pr.after.accuracy();
  result.pruning = std::move(pr);
  return result;
}

}  // namespace flimcl::curation
