#pragma once

#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::curation {

/// Ordered class roster plus the order-preserving surjective map from the
/// original class indices onto the current ones.
struct ClassScheme {
  std::vector<std::string> names;     // current classes
  std::vector<Label> map;             // original index -> current index
  std::vector<std::string> original;  // original roster

  static ClassScheme identity(const std::vector<std::string>& roster) {
    ClassScheme s;
    s.names = roster;
    s.original = roster;
    for (std::size_t i = 0; i < roster.size(); ++i) s.map.push_back(static_cast<Label>(i));
    return s;
  }

  int num_classes() const { return static_cast<int>(names.size()); }

  Label apply(Label original_label) const {
    if (original_label < 0 || static_cast<std::size_t>(original_label) >= map.size())
      throw InputError("label " + std::to_string(original_label) + " outside the original roster");
    return map[static_cast<std::size_t>(original_label)];
  }

  std::vector<Label> apply(const std::vector<Label>& labels) const {
    std::vector<Label> out;
    out.reserve(labels.size());
    for (Label v : labels) out.push_back(apply(v));
    return out;
  }

  /// Current-class groups, each listing the original members.
  std::vector<std::vector<Label>> members() const {
    std::vector<std::vector<Label>> out(names.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[static_cast<std::size_t>(map[i])].push_back(static_cast<Label>(i));
    return out;
  }

  void validate() const {
    if (map.size() != original.size()) throw InputError("scheme map does not cover the roster");
    for (std::size_t i = 0; i < map.size(); ++i) {
      const Label prev = i == 0 ? -1 : map[i - 1];
      if (map[i] != prev && map[i] != prev + 1) throw InputError("scheme map is not monotone and gap free");
    }
    if (!map.empty() && static_cast<std::size_t>(map.back()) + 1 != names.size())
      throw InputError("scheme map image does not match the class count");
  }
};

/// A group of adjacent current classes to collapse into one.
struct MergeGroup {
  std::vector<Label> classes;
  std::string name;  // empty -> members joined with '/'
};

/// Map from the current classes of `scheme` onto the merged classes.
inline std::vector<Label> merge_map(int num_classes, const std::vector<MergeGroup>& groups) {
  std::vector<int> owner(static_cast<std::size_t>(num_classes), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto cls = groups[g].classes;
    if (cls.empty()) throw InputError("empty merge group");
    std::sort(cls.begin(), cls.end());
    for (std::size_t k = 0; k < cls.size(); ++k) {
      if (cls[k] < 0 || cls[k] >= num_classes) throw InputError("merge group references an unknown class");
      if (k > 0 && cls[k] != cls[k - 1] + 1) throw InputError("merge group is not contiguous in class order");
      if (owner[static_cast<std::size_t>(cls[k])] >= 0) throw InputError("class appears in two merge groups");
      owner[static_cast<std::size_t>(cls[k])] = static_cast<int>(g);
    }
  }
  std::vector<Label> out(static_cast<std::size_t>(num_classes));
  Label next = -1;
  for (int c = 0; c < num_classes; ++c) {
    const int g = owner[static_cast<std::size_t>(c)];
    if (!(g >= 0 && c > 0 && owner[static_cast<std::size_t>(c - 1)] == g)) ++next;
    out[static_cast<std::size_t>(c)] = next;
  }
  return out;
}

/// Collapses each contiguous group into one class. Returns the new scheme;
/// labels expressed in the old scheme map through `merge_map`.
inline ClassScheme merge_classes(const ClassScheme& scheme, const std::vector<MergeGroup>& groups) {
  const auto step = merge_map(scheme.num_classes(), groups);
  ClassScheme out;
  out.original = scheme.original;
  for (Label m : scheme.map) out.map.push_back(step[static_cast<std::size_t>(m)]);
  out.names.assign(static_cast<std::size_t>(step.empty() ? 0 : step.back() + 1), "");
  for (int c = 0; c < scheme.num_classes(); ++c) {
    auto& name = out.names[static_cast<std::size_t>(step[static_cast<std::size_t>(c)])];
    name = name.empty() ? scheme.names[static_cast<std::size_t>(c)] : name + "/" + scheme.names[static_cast<std::size_t>(c)];
  }
  for (const auto& g : groups)
    if (!g.name.empty()) out.names[static_cast<std::size_t>(step[static_cast<std::size_t>(g.classes.front())])] = g.name;
  return out;
}

/// Pushes predictions and labels (both in `from`'s current classes) through
/// the map taking `from` to `to` (no retraining).
struct Regrouped {
  std::vector<Label> predictions;
  std::vector<Label> labels;
};

inline std::vector<Label> transition_map(const ClassScheme& from, const ClassScheme& to) {
  if (from.original != to.original) throw InputError("schemes do not share an original roster");
  std::vector<Label> step(static_cast<std::size_t>(from.num_classes()), -1);
  for (std::size_t i = 0; i < from.map.size(); ++i) {
    auto& s = step[static_cast<std::size_t>(from.map[i])];
    if (s >= 0 && s != to.map[i]) throw InputError("target scheme is not a coarsening of the source");
    s = to.map[i];
  }
  return step;
}

inline Regrouped regroup_predictions(const std::vector<Label>& predictions, const std::vector<Label>& labels,
                                     const std::vector<Label>& map) {
  if (predictions.size() != labels.size()) throw InputError("prediction and label vectors differ in length");
  Regrouped out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out.predictions.push_back(map.at(static_cast<std::size_t>(predictions[k])));
    out.labels.push_back(map.at(static_cast<std::size_t>(labels[k])));
  }
  return out;
}

/// Posterior columns summed over each merged group.
inline Matrix regroup_posteriors(const Matrix& p, const std::vector<Label>& map) {
  if (static_cast<std::size_t>(p.cols()) != map.size()) throw InputError("posterior width does not match the map");
  const Label c = map.empty() ? 0 : *std::max_element(map.begin(), map.end()) + 1;
  Matrix out = Matrix::Zero(p.rows(), c);
  for (std::size_t j = 0; j < map.size(); ++j) out.col(map[j]) += p.col(static_cast<Eigen::Index>(j));
  return out;
}

}  // namespace flimcl::curation
