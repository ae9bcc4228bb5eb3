#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "flimcl/models/common.hpp"
#include "flimcl/models/forest.hpp"
#include "flimcl/models/mlp.hpp"
#include "flimcl/models/softmax.hpp"
#include "flimcl/models/standardizer.hpp"

namespace flimcl::models {

enum class ModelKind { Softmax, Mlp, Forest };

inline std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Softmax: return "softmax";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Forest: return "forest";
  }
  return "?";
}

inline ModelKind parse_kind(const std::string& s) {
  if (s == "softmax") return ModelKind::Softmax;
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "forest") return ModelKind::Forest;
  throw ConfigError("unknown model kind '" + s + "' (expected softmax, mlp or forest)");
}

struct Hyperparams {
  SoftmaxOptions softmax;
  MlpOptions mlp;
  ForestOptions forest;
  bool class_weighting = true;
};

/// Immutable after training; safe to share between threads.
struct TrainedModel {
  ModelKind kind = ModelKind::Softmax;
  int num_classes = 0;
  std::vector<std::string> class_names;
  Standardizer standardizer;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;
  std::variant<SoftmaxRegression, Mlp, RandomForest> params;

  int dimension() const { return static_cast<int>(standardizer.dimension()); }
};

/// Trains one model. `groups` (patient ids per row) is only used by the MLP
/// to hold out whole patients for early stopping; pass {} to disable.
/// `sample_weights` multiply the class weights; pass {} for all ones.
inline TrainedModel train(ModelKind kind, const Matrix& x, const std::vector<Label>& y,
                          int num_classes, const Hyperparams& hp, std::uint64_t seed,
                          const std::vector<int>& groups = {},
                          const std::vector<double>& sample_weights = {}) {
  check_training_input(x, y, num_classes);
  if (!sample_weights.empty() && sample_weights.size() != y.size())
    throw InputError("sample weights and labels differ in length");

  TrainedModel m;
  m.kind = kind;
  m.num_classes = num_classes;
  m.hyperparams = hp;
  m.seed = seed;
  m.standardizer = Standardizer::fit(x);
  const Matrix z = m.standardizer.transform(x);

  std::vector<double> w(y.size(), 1.0);
  const auto cw = balanced_class_weights(y, num_classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (hp.class_weighting) w[i] = cw[static_cast<std::size_t>(y[i])];
    if (!sample_weights.empty()) w[i] *= sample_weights[i];
  }

  switch (kind) {
    case ModelKind::Softmax: m.params = train_softmax(z, y, w, num_classes, hp.softmax); break;
    case ModelKind::Mlp: m.params = train_mlp(z, y, w, num_classes, groups, hp.mlp, seed); break;
    case ModelKind::Forest: m.params = train_forest(z, y, w, num_classes, hp.forest, seed); break;
  }
  return m;
}

inline Matrix predict_proba(const TrainedModel& m, const Matrix& x) {
  const Matrix z = m.standardizer.transform(x);
  return std::visit([&](const auto& p) { return p.predict_proba(z); }, m.params);
}

inline std::vector<Label> argmax_rows(const Matrix& p) {
  std::vector<Label> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index j;
    p.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<Label>(j);
  }
  return out;
}

// ---- serialization ----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json to_json(const Matrix& m) {
  std::vector<double> flat(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};  // column-major
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto flat = j.at("data").get<std::vector<double>>();
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  if (static_cast<std::size_t>(m.size()) != flat.size()) throw InputError("matrix payload size mismatch");
  std::copy(flat.begin(), flat.end(), m.data());
  return m;
}

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace detail

inline nlohmann::json hyperparams_to_json(const Hyperparams& hp) {
  return {{"class_weighting", hp.class_weighting},
          {"softmax", {{"l2", hp.softmax.l2}, {"iterations", hp.softmax.iterations}}},
          {"mlp",
           {{"hidden", hp.mlp.hidden},
            {"learning_rate", hp.mlp.learning_rate},
            {"momentum", hp.mlp.momentum},
            {"l2", hp.mlp.l2},
            {"batch_size", hp.mlp.batch_size},
            {"max_epochs", hp.mlp.max_epochs},
            {"patience", hp.mlp.patience},
            {"validation_fraction", hp.mlp.validation_fraction}}},
          {"forest",
           {{"trees", hp.forest.trees},
            {"max_depth", hp.forest.max_depth},
            {"min_leaf", hp.forest.min_leaf},
            {"max_features", hp.forest.max_features},
            {"bootstrap", hp.forest.bootstrap}}}};
}

/// Reads hyperparameters; absent keys keep their defaults. Unknown keys and
/// type mismatches raise ConfigError naming the offending key.
inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  auto object = [](const nlohmann::json& obj, const std::string& path,
                   std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& item : obj.items())
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
        throw ConfigError((path.empty() ? "" : path + ".") + item.key() + ": unknown key");
  };
  auto get = [](const nlohmann::json& obj, const std::string& path, const char* key, auto& dst) {
    if (!obj.contains(key)) return;
    try {
      dst = obj.at(key).get<std::decay_t<decltype(dst)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError((path.empty() ? "" : path + ".") + key + ": wrong type");
    }
  };
  object(j, "", {"class_weighting", "softmax", "mlp", "forest"});
  get(j, "", "class_weighting", hp.class_weighting);
  if (j.contains("softmax")) {
    const auto& s = j.at("softmax");
    object(s, "softmax", {"l2", "iterations"});
    get(s, "softmax", "l2", hp.softmax.l2);
    get(s, "softmax", "iterations", hp.softmax.iterations);
  }
  if (j.contains("mlp")) {
    const auto& s = j.at("mlp");
    object(s, "mlp", {"hidden", "learning_rate", "momentum", "l2", "batch_size", "max_epochs", "patience",
                      "validation_fraction"});
    get(s, "mlp", "hidden", hp.mlp.hidden);
    get(s, "mlp", "learning_rate", hp.mlp.learning_rate);
    get(s, "mlp", "momentum", hp.mlp.momentum);
    get(s, "mlp", "l2", hp.mlp.l2);
    get(s, "mlp", "batch_size", hp.mlp.batch_size);
    get(s, "mlp", "max_epochs", hp.mlp.max_epochs);
    get(s, "mlp", "patience", hp.mlp.patience);
    get(s, "mlp", "validation_fraction", hp.mlp.validation_fraction);
  }
  if (j.contains("forest")) {
    const auto& s = j.at("forest");
    object(s, "forest", {"trees", "max_depth", "min_leaf", "max_features", "bootstrap"});
    get(s, "forest", "trees", hp.forest.trees);
    get(s, "forest", "max_depth", hp.forest.max_depth);
    get(s, "forest", "min_leaf", hp.forest.min_leaf);
    get(s, "forest", "max_features", hp.forest.max_features);
    get(s, "forest", "bootstrap", hp.forest.bootstrap);
  }
  return hp;
}

inline nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "flimcl-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = kind_name(m.kind);
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["seed"] = m.seed;
  j["standardizer"] = {{"mean", detail::to_json(m.standardizer.mean)},
                       {"scale", detail::to_json(m.standardizer.scale)},
                       {"fitted_rows", m.standardizer.fitted_rows}};
  j["hyperparams"] = hyperparams_to_json(m.hyperparams);
  if (const auto* s = std::get_if<SoftmaxRegression>(&m.params)) {
    j["params"] = {{"weights", detail::to_json(s->weights)}, {"bias", detail::to_json(s->bias)}};
  } else if (const auto* n = std::get_if<Mlp>(&m.params)) {
    auto layers = nlohmann::json::array();
    for (std::size_t l = 0; l < n->weights.size(); ++l)
      layers.push_back({{"weights", detail::to_json(n->weights[l])}, {"bias", detail::to_json(n->biases[l])}});
    j["params"] = {{"layers", layers}};
  } else {
    const auto& f = std::get<RandomForest>(m.params);
    auto trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
      std::vector<int> feature, left, right, leaf;
      std::vector<double> threshold;
      for (const auto& nd : t.nodes) {
        feature.push_back(nd.feature);
        threshold.push_back(nd.threshold);
        left.push_back(nd.left);
        right.push_back(nd.right);
        leaf.push_back(nd.leaf);
      }
      trees.push_back({{"feature", feature},
                       {"threshold", threshold},
                       {"left", left},
                       {"right", right},
                       {"leaf", leaf},
                       {"leaves", detail::to_json(t.leaves)}});
    }
    j["params"] = {{"trees", trees}};
  }
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "flimcl-model") throw InputError("not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw InputError("unsupported model format version " + j.at("version").dump());
    TrainedModel m;
    m.kind = parse_kind(j.at("kind").get<std::string>());
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.standardizer.mean = detail::vector_from_json(j.at("standardizer").at("mean"));
    m.standardizer.scale = detail::vector_from_json(j.at("standardizer").at("scale"));
    m.standardizer.fitted_rows = j.at("standardizer").at("fitted_rows").get<std::size_t>();
    m.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    const auto& p = j.at("params");
    switch (m.kind) {
      case ModelKind::Softmax:
        m.params = SoftmaxRegression{detail::matrix_from_json(p.at("weights")),
                                     detail::vector_from_json(p.at("bias"))};
        break;
      case ModelKind::Mlp: {
        Mlp net;
        for (const auto& layer : p.at("layers")) {
          net.weights.push_back(detail::matrix_from_json(layer.at("weights")));
          net.biases.push_back(detail::vector_from_json(layer.at("bias")));
        }
        m.params = std::move(net);
        break;
      }
      case ModelKind::Forest: {
        RandomForest f;
        f.num_classes = m.num_classes;
        for (const auto& t : p.at("trees")) {
          Tree tree;
          const auto feature = t.at("feature").get<std::vector<int>>();
          const auto threshold = t.at("threshold").get<std::vector<double>>();
          const auto left = t.at("left").get<std::vector<int>>();
          const auto right = t.at("right").get<std::vector<int>>();
          const auto leaf = t.at("leaf").get<std::vector<int>>();
          for (std::size_t k = 0; k < feature.size(); ++k)
            tree.nodes.push_back(TreeNode{feature[k], threshold[k], left[k], right[k], leaf[k]});
          tree.leaves = detail::matrix_from_json(t.at("leaves"));
          f.trees.push_back(std::move(tree));
        }
        m.params = std::move(f);
        break;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace flimcl::models
