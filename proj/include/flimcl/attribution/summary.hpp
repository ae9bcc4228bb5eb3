#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "flimcl/attribution/shapley.hpp"

namespace flimcl::attribution {

/// Row indices sampled per class in proportion to class frequency
/// (largest remainder), at most `n` in total.
inline std::vector<std::size_t> stratified_sample(const std::vector<Label>& labels, std::size_t n,
                                                  std::uint64_t seed) {
  if (labels.size() <= n) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  Label classes = 0;
  for (Label y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) / static_cast<double>(labels.size());
    quota[c] = static_cast<std::size_t>(exact);
    given += quota[c];
    rem.emplace_back(-(exact - static_cast<double>(quota[c])), c);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t k = 0; given < n && k < rem.size(); ++k, ++given) quota[rem[k].second]++;
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng(derive_seed(seed, 0x7374, c));
    auto rows = by_class[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    out.insert(out.end(), rows.begin(), rows.begin() + static_cast<long>(std::min(quota[c], rows.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ClassAttribution {
  int class_index = 0;
  std::string class_name;
  Vector mean_abs;        // per feature
  std::vector<int> rank;  // 1 = most important, per feature
};

struct InstanceAttribution {
  std::size_t row = 0;
  int class_index = 0;
  ShapleyResult shapley;
};

struct AttributionResult {
  Scale scale = Scale::Probability;
  std::vector<std::string> feature_names;
  std::vector<ClassAttribution> classes;
  std::vector<InstanceAttribution> instances;
};

inline std::vector<int> ranks_descending(const Vector& v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v(a) > v(b); });
  std::vector<int> rank(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) rank[static_cast<std::size_t>(order[k])] = static_cast<int>(k) + 1;
  return rank;
}

/// Mean |Shapley| per feature for each class, over the explained rows whose
/// reference label is that class.
inline AttributionResult attribute(const BatchModel& model, const Matrix& background, const Matrix& x,
                                   const std::vector<Label>& labels, const std::vector<std::string>& class_names,
                                   const std::vector<std::string>& feature_names, const ShapleyOptions& opt) {
  AttributionResult res;
  res.scale = opt.scale;
  res.feature_names = feature_names;
  const auto classes = static_cast<int>(class_names.size());
  std::vector<Vector> acc(static_cast<std::size_t>(classes), Vector::Zero(x.cols()));
  std::vector<int> count(static_cast<std::size_t>(classes), 0);
  res.instances.resize(static_cast<std::size_t>(x.rows()));
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t i) {
    ShapleyOptions o = opt;
    o.seed = derive_seed(opt.seed, i);
    const int c = labels[i];
    res.instances[i] = {i, c, shapley_values(model, background, x.row(static_cast<Eigen::Index>(i)).transpose(), c, o)};
  });
  for (const auto& inst : res.instances) {
    acc[static_cast<std::size_t>(inst.class_index)] += inst.shapley.values.cwiseAbs();
    count[static_cast<std::size_t>(inst.class_index)]++;
  }
  for (int c = 0; c < classes; ++c) {
    ClassAttribution ca;
    ca.class_index = c;
    ca.class_name = class_names[static_cast<std::size_t>(c)];
    ca.mean_abs = count[static_cast<std::size_t>(c)] > 0 ? Vector(acc[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)])
                                                          : Vector(Vector::Zero(x.cols()));
    ca.rank = ranks_descending(ca.mean_abs);
    res.classes.push_back(std::move(ca));
  }
  return res;
}

}  // namespace flimcl::attribution
