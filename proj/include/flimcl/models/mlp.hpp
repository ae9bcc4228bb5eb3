#pragma once

#include <limits>
#include <numeric>
#include <vector>

#include "flimcl/models/common.hpp"

namespace flimcl::models {

struct MlpOptions {
  std::vector<int> hidden{64, 32};
  double learning_rate = 0.01;
  double momentum = 0.9;
  double l2 = 1e-4;
  int batch_size = 64;
  int max_epochs = 60;
  int patience = 8;
  double validation_fraction = 0.1;  // of training patients
};

/// Fully connected ReLU network with a softmax head. Layer l maps rows
/// A_{l-1} (batch x in) to A_{l-1} W_l + b_l.
struct Mlp {
  std::vector<Matrix> weights;  // in x out
  std::vector<Vector> biases;

  static Mlp init(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng) {
    Mlp net;
    int prev = inputs;
    std::vector<int> sizes(hidden);
    sizes.push_back(outputs);
    for (int width : sizes) {
      if (width <= 0) throw ParameterError("layer widths must be positive");
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / prev));
      Matrix w(prev, width);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = nd(rng);
      net.weights.push_back(std::move(w));
      net.biases.push_back(Vector::Zero(width));
      prev = width;
    }
    return net;
  }

  int inputs() const { return static_cast<int>(weights.front().rows()); }
  int outputs() const { return static_cast<int>(weights.back().cols()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  Vector flatten() const {
    Vector out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.segment(k, weights[l].size()) = weights[l].reshaped();
      k += weights[l].size();
      out.segment(k, biases[l].size()) = biases[l];
      k += biases[l].size();
    }
    return out;
  }

  void unflatten(const Vector& theta) {
    if (theta.size() != static_cast<Eigen::Index>(parameter_count()))
      throw InputError("parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l].reshaped() = theta.segment(k, weights[l].size());
      k += weights[l].size();
      biases[l] = theta.segment(k, biases[l].size());
      k += biases[l].size();
    }
  }

  Matrix predict_proba(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix z = (a * weights[l]).rowwise() + biases[l].transpose();
      a = l + 1 < weights.size() ? Matrix(z.cwiseMax(0.0)) : softmax_rows(z);
    }
    return a;
  }

  /// Weighted mean cross-entropy  sum_i w_i (-log p_{i,y_i}) / sum_i w_i
  /// plus (l2/2) sum ||W||^2 (biases unpenalized). Fills `grad` (same layout
  /// as flatten()) when non-null.
  double loss(const Matrix& x, const std::vector<Label>& y, const std::vector<double>& w,
              double l2, Vector* grad = nullptr) const {
    const std::size_t layers = weights.size();
    std::vector<Matrix> acts{x};
    std::vector<Matrix> pre;
    for (std::size_t l = 0; l < layers; ++l) {
      pre.push_back((acts.back() * weights[l]).rowwise() + biases[l].transpose());
      acts.push_back(l + 1 < layers ? Matrix(pre.back().cwiseMax(0.0)) : softmax_rows(pre.back()));
    }
    const Matrix& p = acts.back();
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(wsum > 0)) throw TrainingError("sample weights sum to zero");

    double value = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      value -= w[static_cast<std::size_t>(i)] *
               std::log(std::max(p(i, y[static_cast<std::size_t>(i)]), 1e-300));
    value /= wsum;
    for (const auto& wl : weights) value += 0.5 * l2 * wl.squaredNorm();
    if (grad == nullptr) return value;

    Matrix delta = p;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      delta.row(i) *= w[static_cast<std::size_t>(i)] / wsum;
    }
    std::vector<Matrix> gw(layers);
    std::vector<Vector> gb(layers);
    for (std::size_t l = layers; l-- > 0;) {
      gw[l] = acts[l].transpose() * delta + l2 * weights[l];
      gb[l] = delta.colwise().sum().transpose();
      if (l > 0) {
        delta = delta * weights[l].transpose();
        delta.array() *= (pre[l - 1].array() > 0.0).cast<double>();
      }
    }
    grad->resize(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      grad->segment(k, gw[l].size()) = gw[l].reshaped();
      k += gw[l].size();
      grad->segment(k, gb[l].size()) = gb[l];
      k += gb[l].size();
    }
    return value;
  }
};

namespace detail {

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace detail

/// Mini-batch SGD with momentum. `x` is already standardized; `weights` are
/// per-sample loss weights (class weighting folded in by the caller).
/// When `groups` has at least two distinct values, a slice of whole groups
/// (patients) is held in for early stopping; otherwise all epochs run.
inline Mlp train_mlp(const Matrix& x, const std::vector<Label>& y, const std::vector<double>& weights,
                     int num_classes, const std::vector<int>& groups, const MlpOptions& opt,
                     std::uint64_t seed) {
  if (opt.batch_size <= 0 || opt.max_epochs <= 0 || !(opt.learning_rate > 0))
    throw ParameterError("invalid MLP optimizer settings");
  Rng rng(derive_seed(seed, 0x6d6c70));
  Mlp net = Mlp::init(static_cast<int>(x.cols()), opt.hidden, num_classes, rng);

  std::vector<std::size_t> fit_rows, val_rows;
  std::vector<int> distinct(groups.begin(), groups.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (groups.size() == y.size() && distinct.size() >= 2 && opt.validation_fraction > 0) {
    std::shuffle(distinct.begin(), distinct.end(), rng);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(opt.validation_fraction * distinct.size())));
    std::vector<int> held(distinct.begin(), distinct.begin() + static_cast<long>(n_val));
    for (std::size_t i = 0; i < y.size(); ++i)
      (std::find(held.begin(), held.end(), groups[i]) != held.end() ? val_rows : fit_rows)
          .push_back(i);
    // a validation slice that leaves a class without training data is not usable
    std::vector<char> seen(static_cast<std::size_t>(num_classes), 0);
    for (auto r : fit_rows) seen[static_cast<std::size_t>(y[r])] = 1;
    for (Label v : y)
      if (!seen[static_cast<std::size_t>(v)]) {
        val_rows.clear();
        break;
      }
  }
  if (val_rows.empty()) {
    fit_rows.resize(y.size());
    std::iota(fit_rows.begin(), fit_rows.end(), std::size_t{0});
  }

  const Matrix xv = detail::gather_rows(x, val_rows);
  const auto yv = detail::gather(y, val_rows);
  const auto wv = detail::gather(weights, val_rows);

  Vector theta = net.flatten();
  Vector velocity = Vector::Zero(theta.size());
  Vector best = theta;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::vector<std::size_t> order(fit_rows);
  Vector grad;
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                     order.begin() + static_cast<long>(stop));
      const auto wb = detail::gather(weights, batch);
      if (std::accumulate(wb.begin(), wb.end(), 0.0) <= 0) continue;
      net.loss(detail::gather_rows(x, batch), detail::gather(y, batch), wb, opt.l2, &grad);
      velocity = opt.momentum * velocity - opt.learning_rate * grad;
      theta += velocity;
      net.unflatten(theta);
    }
    if (!theta.allFinite()) throw NumericalError("MLP training diverged");
    if (val_rows.empty()) continue;
    const double v = net.loss(xv, yv, wv, 0.0);
    if (v < best_loss - 1e-9) {
      best_loss = v;
      best = theta;
      stale = 0;
    } else if (++stale >= opt.patience) {
      break;
    }
  }
  if (!val_rows.empty()) net.unflatten(best);
  return net;
}

}  // namespace flimcl::models
