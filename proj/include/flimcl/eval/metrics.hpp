#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::eval {

struct ConfusionMatrix {
  Eigen::MatrixXi counts;  // rows true, cols predicted

  int num_classes() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.cast<long>().sum(); }

  double accuracy() const {
    const long n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts.trace()) / static_cast<double>(n);
  }

  /// Per-class recall; NaN for classes without true examples.
  std::vector<double> recall() const {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
      const long row = counts.row(i).cast<long>().sum();
      out.push_back(row == 0 ? std::nan("") : static_cast<double>(counts(i, i)) / static_cast<double>(row));
    }
    return out;
  }
};

inline ConfusionMatrix confusion_matrix(const std::vector<Label>& predicted,
                                        const std::vector<Label>& truth, int num_classes) {
  if (predicted.size() != truth.size()) throw InputError("prediction and label vectors differ in length");
  ConfusionMatrix cm{Eigen::MatrixXi::Zero(num_classes, num_classes)};
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] < 0 || truth[k] >= num_classes || predicted[k] < 0 || predicted[k] >= num_classes)
      throw InputError("label out of range in confusion matrix");
    cm.counts(truth[k], predicted[k])++;
  }
  return cm;
}

inline double accuracy(const std::vector<Label>& predicted, const std::vector<Label>& truth) {
  if (predicted.size() != truth.size()) throw InputError("prediction and label vectors differ in length");
  if (truth.empty()) throw InputError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) hit += predicted[k] == truth[k];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// One-vs-rest AUC via the rank-sum statistic with midranks for ties.
inline double auc_one_vs_rest(const std::vector<double>& scores, const std::vector<Label>& labels, Label c) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == c) {
        pos_rank_sum += midrank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0)
    throw InputError("AUC undefined for class " + std::to_string(c) + ": needs positives and negatives");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1) / 2) / (p * q);
}

struct ModelMetrics {
  double accuracy = 0.0;
  std::vector<double> auc;  // NaN where a class has no positives
  double mean_auc = 0.0;    // over defined entries
  double selection_score = 0.0;
};

inline ModelMetrics model_metrics(const Matrix& posteriors, const std::vector<Label>& labels) {
  const auto n = static_cast<std::size_t>(posteriors.rows());
  if (n != labels.size()) throw InputError("posterior rows and labels differ in length");
  ModelMetrics m;
  std::vector<Label> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index j;
    posteriors.row(static_cast<Eigen::Index>(i)).maxCoeff(&j);
    pred[i] = static_cast<Label>(j);
  }
  m.accuracy = accuracy(pred, labels);
  double sum = 0.0;
  int defined = 0;
  for (Eigen::Index c = 0; c < posteriors.cols(); ++c) {
    std::vector<double> col(posteriors.col(c).data(), posteriors.col(c).data() + n);
    try {
      m.auc.push_back(auc_one_vs_rest(col, labels, static_cast<Label>(c)));
      sum += m.auc.back();
      ++defined;
    } catch (const InputError&) {
      m.auc.push_back(std::nan(""));
    }
  }
  if (defined == 0) throw InputError("no class has a defined AUC");
  m.mean_auc = sum / defined;
  m.selection_score = 0.5 * (m.accuracy + m.mean_auc);
  return m;
}

struct Candidate {
  std::string kind;
  ModelMetrics metrics;
};

/// argmax of (accuracy + mean AUC) / 2; ties (within 1e-12, so that sums
/// differing only by rounding count as equal) -> higher accuracy, then the
/// lexicographically smaller kind name.
inline std::string select_baseline(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw InputError("no candidate models to select from");
  const Candidate* best = &candidates.front();
  for (const auto& c : candidates) {
    const double s = 0.5 * (c.metrics.accuracy + c.metrics.mean_auc);
    const double b = 0.5 * (best->metrics.accuracy + best->metrics.mean_auc);
    const bool tie = std::abs(s - b) <= 1e-12;
    if ((!tie && s > b) || (tie && (c.metrics.accuracy > best->metrics.accuracy ||
                             (c.metrics.accuracy == best->metrics.accuracy && c.kind < best->kind))))
      best = &c;
  }
  return best->kind;
}

/// Most frequent vote; ties -> larger summed posterior, then lower index.
inline Label majority_vote(const std::vector<Label>& votes, const Matrix& posteriors) {
  if (votes.empty()) throw InputError("majority vote over an empty margin");
  const auto classes = static_cast<std::size_t>(posteriors.cols());
  std::vector<int> count(classes, 0);
  for (Label v : votes) count.at(static_cast<std::size_t>(v))++;
  const Vector mass = posteriors.colwise().sum().transpose();
  Label best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    const auto b = static_cast<std::size_t>(best);
    if (count[c] > count[b] || (count[c] == count[b] && mass(static_cast<Eigen::Index>(c)) > mass(best)))
      best = static_cast<Label>(c);
  }
  return best;
}

}  // namespace flimcl::eval
