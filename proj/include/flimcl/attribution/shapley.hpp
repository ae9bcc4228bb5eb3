#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::attribution {

/// Batch model: rows in, posterior rows out.
using BatchModel = std::function<Matrix(const Matrix&)>;

enum class Scale { Probability, LogOdds };

inline double transform(double p, Scale s) {
  if (s == Scale::Probability) return p;
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(q / (1.0 - q));
}

struct ShapleyOptions {
  int permutations = 200;
  Scale scale = Scale::Probability;
  std::uint64_t seed = 0;
  int chunk = 32;  // permutations evaluated per model call
};

struct ShapleyResult {
  Vector values;
  Vector std_error;
  double prediction = 0.0;  // f(x) on the chosen scale
  double baseline = 0.0;    // mean of f over the sampled background rows
};

inline void check_inputs(const Matrix& background, const Vector& x) {
  if (background.rows() == 0) throw InputError("empty background set");
  if (background.cols() != x.size()) throw InputError("instance and background dimensions differ");
}

/// Permutation-sampling estimate: each sample draws an ordering and one
/// background row; features join in order and each one's marginal
/// contribution to f_c is recorded. Background rows are visited in shuffled
/// cycles (stratified), so every row is used equally often and an additive
/// model carries no background sampling error. Deterministic given the seed,
/// and independent of the chunking.
inline ShapleyResult shapley_values(const BatchModel& model, const Matrix& background, const Vector& x, int c,
                                    const ShapleyOptions& opt) {
  check_inputs(background, x);
  if (opt.permutations < 1) throw ParameterError("need at least one permutation");
  const Eigen::Index d = x.size();
  const int chunk = std::max(1, opt.chunk);
  Vector sum = Vector::Zero(d), sumsq = Vector::Zero(d);
  double base = 0.0;
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(background.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  {
    Rng rng(derive_seed(opt.seed, 0x62676f72));
    std::shuffle(rows.begin(), rows.end(), rng);
  }
  for (int start = 0; start < opt.permutations; start += chunk) {
    const int count = std::min(chunk, opt.permutations - start);
    Matrix z(count * (d + 1), d);
    std::vector<std::vector<Eigen::Index>> orders(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
      Rng rng(derive_seed(opt.seed, start + s));
      auto& order = orders[static_cast<std::size_t>(s)];
      order.resize(static_cast<std::size_t>(d));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      const auto b = rows[static_cast<std::size_t>(start + s) % rows.size()];
      Vector cur = background.row(b).transpose();
      z.row(s * (d + 1)) = cur.transpose();
      for (Eigen::Index k = 0; k < d; ++k) {
        cur(order[static_cast<std::size_t>(k)]) = x(order[static_cast<std::size_t>(k)]);
        z.row(s * (d + 1) + k + 1) = cur.transpose();
      }
    }
    const Matrix p = model(z);
    for (int s = 0; s < count; ++s) {
      double prev = transform(p(s * (d + 1), c), opt.scale);
      base += prev;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double cur = transform(p(s * (d + 1) + k + 1, c), opt.scale);
        const auto j = orders[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)];
        sum(j) += cur - prev;
        sumsq(j) += (cur - prev) * (cur - prev);
        prev = cur;
      }
    }
  }
  const double n = opt.permutations;
  ShapleyResult r;
  r.values = sum / n;
  r.std_error = Vector::Zero(d);
  if (n > 1)
    for (Eigen::Index j = 0; j < d; ++j)
      r.std_error(j) = std::sqrt(std::max(0.0, (sumsq(j) / n - r.values(j) * r.values(j)) * n / (n - 1)) / n);
  r.baseline = base / n;
  Matrix xm = x.transpose();
  r.prediction = transform(model(xm)(0, c), opt.scale);
  return r;
}

/// Exact Shapley values of v(S) = mean_b f_c(x_S, b_rest) by enumerating all
/// 2^d coalitions; exponential, meant as a test oracle for small d.
inline Vector exact_shapley(const BatchModel& model, const Matrix& background, const Vector& x, int c,
                            Scale scale = Scale::Probability) {
  check_inputs(background, x);
  const Eigen::Index d = x.size();
  if (d > 16) throw ParameterError("exact enumeration limited to 16 features");
  const std::size_t subsets = std::size_t{1} << d;
  Matrix z(static_cast<Eigen::Index>(subsets) * background.rows(), d);
  for (std::size_t s = 0; s < subsets; ++s)
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      const auto row = static_cast<Eigen::Index>(s) * background.rows() + b;
      for (Eigen::Index j = 0; j < d; ++j) z(row, j) = (s >> j) & 1 ? x(j) : background(b, j);
    }
  const Matrix p = model(z);
  std::vector<double> v(subsets, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    for (Eigen::Index b = 0; b < background.rows(); ++b)
      v[s] += transform(p(static_cast<Eigen::Index>(s) * background.rows() + b, c), scale);
    v[s] /= static_cast<double>(background.rows());
  }
  std::vector<double> fact(static_cast<std::size_t>(d) + 1, 1.0);
  for (std::size_t k = 1; k < fact.size(); ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  Vector phi = Vector::Zero(d);
  for (std::size_t s = 0; s < subsets; ++s) {
    const auto size = static_cast<std::size_t>(__builtin_popcountll(s));
    const auto dd = static_cast<std::size_t>(d);
    if (size == dd) continue;
    const double w = fact[size] * fact[dd - size - 1] / fact[dd];
    for (Eigen::Index j = 0; j < d; ++j)
      if (!((s >> j) & 1)) phi(j) += w * (v[s | (std::size_t{1} << j)] - v[s]);
  }
  return phi;
}

}  // namespace flimcl::attribution
