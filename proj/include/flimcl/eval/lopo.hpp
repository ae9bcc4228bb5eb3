#pragma once

#include <functional>
#include <map>
#include <set>
#include <vector>

#include "flimcl/dataset.hpp"
#include "flimcl/models/model.hpp"

namespace flimcl::eval {

struct Fold {
  std::vector<int> train_patients;
  int test_patient = 0;
};

struct FoldPlan {
  std::vector<Fold> folds;

  /// Row indices of (train, test) for fold `f` given per-row patient ids.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> rows(
      std::size_t f, const std::vector<int>& patient_of_row) const {
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    const int test = folds.at(f).test_patient;
    for (std::size_t i = 0; i < patient_of_row.size(); ++i)
      (patient_of_row[i] == test ? out.second : out.first).push_back(i);
    return out;
  }
};

/// One fold per patient, in ascending patient-id order.
inline FoldPlan lopo_splits(const std::vector<int>& patient_ids) {
  std::set<int> seen;
  for (int p : patient_ids)
    if (!seen.insert(p).second) throw InputError("duplicate patient id " + std::to_string(p));
  if (seen.size() < 2) throw InputError("leave-one-patient-out needs at least two patients");
  FoldPlan plan;
  for (int test : seen) {
    Fold f;
    f.test_patient = test;
    for (int p : seen)
      if (p != test) f.train_patients.push_back(p);
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

inline FoldPlan lopo_splits(const DatasetManifest& manifest) {
  std::vector<int> ids;
  for (const auto& p : manifest.patients) ids.push_back(p.patient_id);
  return lopo_splits(ids);
}

/// Training-side hook: maps (fold, training rows) to the rows actually used
/// for fitting, e.g. after pruning. Never sees test rows.
using TrainFilter = std::function<std::vector<std::size_t>(std::size_t, const std::vector<std::size_t>&)>;

struct CrossValResult {
  Matrix posteriors;  // out-of-fold, row-aligned with the table
  std::vector<std::size_t> train_sizes;
  std::vector<std::size_t> removed;  // rows dropped by the filter, per fold
};

/// Out-of-fold posteriors under the plan. Each fold's model sees only the
/// training patients' rows (after the optional filter); standardization is
/// fitted inside train() on those rows.
inline CrossValResult cross_val_predict(const PointTable& table, models::ModelKind kind,
                                        const models::Hyperparams& hp, const FoldPlan& plan,
                                        std::uint64_t seed, const TrainFilter& filter = {}) {
  CrossValResult out;
  out.posteriors = Matrix::Zero(static_cast<Eigen::Index>(table.size()), table.num_classes);
  out.train_sizes.assign(plan.folds.size(), 0);
  out.removed.assign(plan.folds.size(), 0);
  std::vector<char> covered(table.size(), 0);
  parallel_for(plan.folds.size(), [&](std::size_t f) {
    auto [train_rows, test_rows] = plan.rows(f, table.patient);
    if (test_rows.empty()) return;
    std::vector<std::size_t> used = filter ? filter(f, train_rows) : train_rows;
    out.removed[f] = train_rows.size() - used.size();
    out.train_sizes[f] = used.size();
    const PointTable tr = table.subset(used);
    const PointTable te = table.subset(test_rows);
    const auto model = models::train(kind, tr.features, tr.labels, table.num_classes, hp,
                                     derive_seed(seed, 0x666f6c64, plan.folds[f].test_patient),
                                     tr.patient);
    const Matrix p = models::predict_proba(model, te.features);
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      out.posteriors.row(static_cast<Eigen::Index>(test_rows[i])) = p.row(static_cast<Eigen::Index>(i));
      covered[test_rows[i]] = 1;
    }
  });
  for (char c : covered)
    if (!c) throw InputError("fold plan does not cover every row");
  return out;
}

}  // namespace flimcl::eval
