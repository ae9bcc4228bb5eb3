#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl {

struct PointRecord {
  int point_id = 0;
  int patient_id = 0;
  int margin_id = 0;
  Label label = 0;       // observed, inherited from the margin
  Label true_label = 0;  // pre-corruption margin label
  std::vector<std::string> confounders;
};

struct MarginRecord {
  int margin_id = 0;
  int patient_id = 0;
  Label label = 0;
  Label true_label = 0;
  std::vector<std::size_t> points;  // indices into DatasetManifest::points
};

struct PatientRecord {
  int patient_id = 0;
  std::vector<std::size_t> margins;  // indices into DatasetManifest::margins
};

struct CorruptionEntry {
  int margin_id = 0;
  Label true_label = 0;
  Label corrupted_label = 0;
};

struct CorruptionLog {
  std::vector<CorruptionEntry> entries;

  bool contains(int margin_id) const {
    for (const auto& e : entries)
      if (e.margin_id == margin_id) return true;
    return false;
  }
};

/// Patients -> margins -> points with observed labels, pre-corruption
/// labels, and the corruption log.
struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<PatientRecord> patients;
  std::vector<MarginRecord> margins;
  std::vector<PointRecord> points;
  CorruptionLog corruption;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  std::size_t margin_index(int margin_id) const {
    for (std::size_t i = 0; i < margins.size(); ++i)
      if (margins[i].margin_id == margin_id) return i;
    throw InputError("unknown margin id " + std::to_string(margin_id));
  }

  std::vector<Label> observed_labels() const {
    std::vector<Label> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.label);
    return out;
  }

  std::vector<int> margin_of_points() const {
    std::vector<int> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.margin_id);
    return out;
  }

  std::vector<int> patient_of_points() const {
    std::vector<int> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.patient_id);
    return out;
  }

  std::vector<int> margin_class_counts() const {
    std::vector<int> counts(class_names.size(), 0);
    for (const auto& m : margins) counts.at(static_cast<std::size_t>(m.label))++;
    return counts;
  }

  /// Writes a margin's label through to its points (label inheritance).
  void set_margin_label(std::size_t margin_index, Label label) {
    auto& m = margins.at(margin_index);
    m.label = label;
    for (auto idx : m.points) points.at(idx).label = label;
  }

  /// Structural checks: unique ids, inheritance, index consistency.
  void validate() const {
    if (class_names.empty()) throw InputError("manifest has no classes");
    std::set<int> patient_ids, margin_ids, point_ids;
    for (const auto& p : patients)
      if (!patient_ids.insert(p.patient_id).second)
        throw InputError("duplicate patient id " + std::to_string(p.patient_id));
    for (const auto& m : margins) {
      if (!margin_ids.insert(m.margin_id).second)
        throw InputError("duplicate margin id " + std::to_string(m.margin_id));
      if (!patient_ids.count(m.patient_id))
        throw InputError("margin references unknown patient");
      if (m.label < 0 || m.label >= num_classes())
        throw InputError("margin label out of range");
      for (auto idx : m.points) {
        const auto& pt = points.at(idx);
        if (pt.margin_id != m.margin_id || pt.patient_id != m.patient_id)
          throw InputError("point/margin cross reference mismatch");
        if (pt.label != m.label) throw InputError("point label differs from its margin label");
      }
    }
    for (const auto& p : points)
      if (!point_ids.insert(p.point_id).second)
        throw InputError("duplicate point id " + std::to_string(p.point_id));
  }
};

/// Feature matrix aligned with manifest points (row i <-> points[i]).
struct PointTable {
  Matrix features;
  std::vector<Label> labels;
  std::vector<int> patient;
  std::vector<int> margin;
  std::vector<int> point_id;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }

  PointTable subset(const std::vector<std::size_t>& rows) const {
    PointTable out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) =
          features.row(static_cast<Eigen::Index>(rows[i]));
      out.labels.push_back(labels[rows[i]]);
      out.patient.push_back(patient[rows[i]]);
      out.margin.push_back(margin[rows[i]]);
      out.point_id.push_back(point_id[rows[i]]);
    }
    return out;
  }
};

}  // namespace flimcl
