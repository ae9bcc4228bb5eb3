#pragma once

#include <numeric>
#include <vector>

#include "flimcl/models/common.hpp"

namespace flimcl::models {

struct ForestOptions {
  int trees = 60;
  int max_depth = 10;
  int min_leaf = 3;
  int max_features = 0;  // 0 -> round(sqrt(d))
  bool bootstrap = true;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf = -1;  // row of Tree::leaves
};

struct Tree {
  std::vector<TreeNode> nodes;
  Matrix leaves;  // leaf x C class distributions

  int leaf_of(const double* row) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].leaf;
  }
};

struct RandomForest {
  std::vector<Tree> trees;
  int num_classes = 0;

  Matrix predict_proba(const Matrix& x) const {
    Matrix p = Matrix::Zero(x.rows(), num_classes);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = x;
    for (const auto& t : trees)
      for (Eigen::Index i = 0; i < x.rows(); ++i) p.row(i) += t.leaves.row(t.leaf_of(xr.row(i).data()));
    p /= static_cast<double>(trees.size());
    // leaf rows sum to one; renormalize to remove accumulated rounding
    p.array().colwise() /= p.rowwise().sum().eval().array();
    return p;
  }
};

namespace detail {

inline double gini(const std::vector<double>& totals, double w) {
  if (w <= 0) return 0.0;
  double s = 0.0;
  for (double t : totals) s += t * t;
  return 1.0 - s / (w * w);
}

struct TreeBuilder {
  const Matrix& x;
  const std::vector<Label>& y;
  const std::vector<double>& w;  // per-row weight including bootstrap multiplicity
  const std::vector<int>& mult;
  int num_classes;
  const ForestOptions& opt;
  int mtry;
  Rng& rng;
  Tree tree;
  std::vector<double> leaf_rows;

  int make_leaf(const std::vector<double>& totals, double wsum) {
    TreeNode nd;
    nd.leaf = static_cast<int>(leaf_rows.size() / static_cast<std::size_t>(num_classes));
    for (double t : totals) leaf_rows.push_back(t / wsum);
    tree.nodes.push_back(nd);
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  int build(std::vector<std::size_t>& rows, int depth) {
    std::vector<double> totals(static_cast<std::size_t>(num_classes), 0.0);
    double wsum = 0.0;
    int count = 0;
    for (auto r : rows) {
      totals[static_cast<std::size_t>(y[r])] += w[r];
      wsum += w[r];
      count += mult[r];
    }
    int nonzero = 0;
    for (double t : totals) nonzero += t > 0 ? 1 : 0;
    if (depth >= opt.max_depth || count < 2 * opt.min_leaf || nonzero <= 1)
      return make_leaf(totals, wsum);

    const double parent = gini(totals, wsum);
    std::vector<int> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < mtry; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(features.size()) - 1);
      std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(pick(rng))]);
    }

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> sorted(rows.size());
    std::vector<double> left(static_cast<std::size_t>(num_classes));
    std::vector<double> right(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < mtry; ++k) {
      const int f = features[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < rows.size(); ++i) sorted[i] = {x(static_cast<Eigen::Index>(rows[i]), f), rows[i]};
      std::sort(sorted.begin(), sorted.end());
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0.0;
      int cl = 0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto r = sorted[i].second;
        left[static_cast<std::size_t>(y[r])] += w[r];
        wl += w[r];
        cl += mult[r];
        if (sorted[i].first == sorted[i + 1].first) continue;
        if (cl < opt.min_leaf || count - cl < opt.min_leaf) continue;
        const double wr = wsum - wl;
        for (std::size_t c = 0; c < right.size(); ++c) right[c] = totals[c] - left[c];
        const double gain = parent - (wl * gini(left, wl) + wr * gini(right, wr)) / wsum;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf(totals, wsum);

    std::vector<std::size_t> lo, hi;
    for (auto r : rows) (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? lo : hi).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{best_feature, best_threshold, -1, -1, -1});
    const int l = build(lo, depth + 1);
    const int h = build(hi, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = h;
    return id;
  }
};

}  // namespace detail

/// Random forest of weighted-Gini CART trees; each tree gets its own
/// sub-seed so the ensemble does not depend on training order.
inline RandomForest train_forest(const Matrix& x, const std::vector<Label>& y,
                                 const std::vector<double>& weights, int num_classes,
                                 const ForestOptions& opt, std::uint64_t seed) {
  if (opt.trees <= 0 || opt.max_depth < 0 || opt.min_leaf < 1)
    throw ParameterError("invalid forest settings");
  const auto n = static_cast<std::size_t>(x.rows());
  const int d = static_cast<int>(x.cols());
  const int mtry = opt.max_features > 0
                       ? std::min(opt.max_features, d)
                       : std::max(1, static_cast<int>(std::lround(std::sqrt(double(d)))));
  RandomForest forest;
  forest.num_classes = num_classes;
  for (int t = 0; t < opt.trees; ++t) {
    Rng rng(derive_seed(seed, 0x72666f, t));
    std::vector<int> mult(n, opt.bootstrap ? 0 : 1);
    if (opt.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) mult[pick(rng)]++;
    }
    std::vector<double> w(n);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = weights[i] * mult[i];
      if (mult[i] > 0 && weights[i] > 0) rows.push_back(i);
    }
    if (rows.empty()) throw TrainingError("bootstrap sample has no weighted rows");
    detail::TreeBuilder b{x, y, w, mult, num_classes, opt, mtry, rng, {}, {}};
    b.build(rows, 0);
    const auto leaves = static_cast<Eigen::Index>(b.leaf_rows.size() / static_cast<std::size_t>(num_classes));
    b.tree.leaves = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        b.leaf_rows.data(), leaves, num_classes);
    forest.trees.push_back(std::move(b.tree));
  }
  return forest;
}

}  // namespace flimcl::models
