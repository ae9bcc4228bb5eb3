#pragma once

#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::curation {

enum class ThresholdMode {
  SelfConfidence,  // mean p_{k,j} over points labeled j
  AllPoints,       // mean p_{k,j} over every point
};

enum class MarginStatus { Issue, Control, Indeterminate };

inline std::string status_name(MarginStatus s) {
  switch (s) {
    case MarginStatus::Issue: return "issue";
    case MarginStatus::Control: return "control";
    case MarginStatus::Indeterminate: return "indeterminate";
  }
  return "?";
}

struct IssueThresholds {
  double issue = 0.70;    // LC fraction strictly above -> issue
  double control = 0.30;  // strictly below -> control

  void validate() const {
    if (!(0.0 <= control && control < issue && issue <= 1.0))
      throw ConfigError("label-issue thresholds must satisfy 0 <= control < issue <= 1");
  }
};

inline void check_posteriors(const Matrix& p) {
  if (p.rows() == 0 || p.cols() == 0) throw InputError("empty posterior matrix");
  if (!p.allFinite() || p.minCoeff() < 0) throw InputError("posterior entries must be finite and nonnegative");
  if ((p.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-6) throw InputError("posterior rows must sum to 1");
}

/// First-index argmax per row.
inline std::vector<Label> predicted_labels(const Matrix& p) {
  std::vector<Label> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index j;
    p.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<Label>(j);
  }
  return out;
}

/// CS_k = max_c p_{k,c}.
inline std::vector<double> confidence_scores(const Matrix& p) {
  check_posteriors(p);
  std::vector<double> cs(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) cs[static_cast<std::size_t>(i)] = p.row(i).maxCoeff();
  return cs;
}

/// Contiguous groups of point indices keyed by margin, in first-seen order.
struct Grouping {
  std::vector<int> ids;                          // margin id per group
  std::vector<std::vector<std::size_t>> members;  // point indices per group

  static Grouping from_keys(const std::vector<int>& key_of_point) {
    Grouping g;
    std::vector<std::pair<int, std::size_t>> sorted;
    for (std::size_t k = 0; k < key_of_point.size(); ++k) sorted.emplace_back(key_of_point[k], k);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (const auto& [key, idx] : sorted) {
      if (g.ids.empty() || g.ids.back() != key) {
        g.ids.push_back(key);
        g.members.emplace_back();
      }
      g.members.back().push_back(idx);
    }
    return g;
  }
};

/// MCS_i = mean CS over margin i's points.
inline std::vector<double> margin_confidence(const std::vector<double>& cs, const Grouping& margins) {
  std::vector<double> out;
  for (const auto& m : margins.members) {
    if (m.empty()) throw InputError("margin without points");
    double s = 0.0;
    for (auto k : m) s += cs.at(k);
    out.push_back(s / static_cast<double>(m.size()));
  }
  return out;
}

inline std::vector<double> class_thresholds(const Matrix& p, const std::vector<Label>& labels,
                                            ThresholdMode mode = ThresholdMode::SelfConfidence,
                                            const std::vector<std::string>& names = {}) {
  check_posteriors(p);
  if (static_cast<std::size_t>(p.rows()) != labels.size()) throw InputError("posterior rows and labels differ in length");
  const auto classes = static_cast<std::size_t>(p.cols());
  std::vector<double> sum(classes, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Label y = labels[k];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw InputError("label out of range");
    count[static_cast<std::size_t>(y)]++;
    if (mode == ThresholdMode::SelfConfidence)
      sum[static_cast<std::size_t>(y)] += p(static_cast<Eigen::Index>(k), y);
  }
  std::vector<double> tau(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    if (count[j] == 0) throw ThresholdUndefinedError(static_cast<int>(j), j < names.size() ? names[j] : "");
    tau[j] = mode == ThresholdMode::SelfConfidence ? sum[j] / static_cast<double>(count[j])
                                                   : p.col(static_cast<Eigen::Index>(j)).mean();
  }
  return tau;
}

struct ConfidentJoint {
  Eigen::MatrixXi counts;  // rows observed label, cols predicted
  std::vector<double> thresholds;
};

/// C[i][j] = #{k : y_k = i, argmax_k = j, CS_k >= tau_j}.
inline ConfidentJoint confident_joint(const Matrix& p, const std::vector<Label>& labels,
                                      const std::vector<double>& tau) {
  check_posteriors(p);
  const auto classes = p.cols();
  if (static_cast<Eigen::Index>(tau.size()) != classes) throw InputError("threshold vector has the wrong length");
  ConfidentJoint cj{Eigen::MatrixXi::Zero(classes, classes), tau};
  const auto pred = predicted_labels(p);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double cs = p.row(static_cast<Eigen::Index>(k)).maxCoeff();
    if (cs >= tau[static_cast<std::size_t>(pred[k])]) cj.counts(labels[k], pred[k])++;
  }
  return cj;
}

/// LC_k = [argmax_k != y_k and CS_k >= tau_{argmax_k}].
inline std::vector<char> flag_low_confidence(const Matrix& p, const std::vector<Label>& labels,
                                             const std::vector<double>& tau) {
  check_posteriors(p);
  if (static_cast<std::size_t>(p.rows()) != labels.size()) throw InputError("posterior rows and labels differ in length");
  const auto pred = predicted_labels(p);
  std::vector<char> lc(labels.size(), 0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double cs = p.row(static_cast<Eigen::Index>(k)).maxCoeff();
    lc[k] = pred[k] != labels[k] && cs >= tau.at(static_cast<std::size_t>(pred[k]));
  }
  return lc;
}

struct MarginFlags {
  std::vector<double> lc_fraction;
  std::vector<int> lc_count;
  std::vector<MarginStatus> status;
};

inline MarginStatus classify_fraction(double fraction, const IssueThresholds& t) {
  if (fraction > t.issue) return MarginStatus::Issue;
  if (fraction < t.control) return MarginStatus::Control;
  return MarginStatus::Indeterminate;
}

inline MarginFlags flag_label_issues(const std::vector<char>& lc, const Grouping& margins,
                                     const IssueThresholds& t = {}) {
  t.validate();
  MarginFlags out;
  for (const auto& m : margins.members) {
    if (m.empty()) throw InputError("margin without points");
    int n = 0;
    for (auto k : m) n += lc.at(k) ? 1 : 0;
    const double f = static_cast<double>(n) / static_cast<double>(m.size());
    out.lc_count.push_back(n);
    out.lc_fraction.push_back(f);
    out.status.push_back(classify_fraction(f, t));
  }
  return out;
}

}  // namespace flimcl::curation
