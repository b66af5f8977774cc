#pragma once

// Uniform train / predict / persist interface over every model family.
//
// All entry points take the full feature matrix in stream order plus the list
// of row indices to use. For non-sequence models those rows are independent
// samples; for the LSTM each index is the last row of a window of
// `sequence_length` consecutive rows.

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "canids/models/common.hpp"
#include "canids/models/linear.hpp"
#include "canids/models/neural.hpp"
#include "canids/models/tree.hpp"

namespace canids {

inline constexpr const char* kModelSchemaVersion = "1";

class TrainedModel {
 public:
  using Impl = std::variant<LogRegModel, LinearSvmModel, DecisionTreeModel, RandomForestModel,
                            GradBoostModel, FeedForwardModel, LstmModel>;

  TrainedModel(ModelKind kind, Hyperparams hp, Impl impl, TrainingInfo info,
               std::vector<std::string> columns)
      : kind_(kind), hp_(std::move(hp)), impl_(std::move(impl)), info_(std::move(info)),
        columns_(std::move(columns)) {}

  ModelKind kind() const { return kind_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const TrainingInfo& info() const { return info_; }
  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t n_features() const { return columns_.size(); }
  const Impl& impl() const { return impl_; }

  /// Rows of the LSTM input window; 1 for every other kind.
  std::size_t sequence_length() const {
    if (auto* l = std::get_if<LstmModel>(&impl_)) return l->sequence_length;
    return 1;
  }

  /// Probabilities for one feature vector. Not available for the LSTM.
  Proba predict_vector(std::span<const double> x) const {
    return std::visit(
        [&](const auto& m) -> Proba {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, LstmModel>) throw DataError("lstm needs a window of rows");
          else return m.predict_proba(x);
        },
        impl_);
  }

  /// Probabilities for row `r` of X (for the LSTM: the window ending at r).
  Proba predict_row(const Matrix& X, std::size_t r) const {
    return std::visit(
        [&](const auto& m) -> Proba {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, LstmModel>) return m.predict_at(X, r);
          else return m.predict_proba(X.row(r));
        },
        impl_);
  }

 private:
  ModelKind kind_;
  Hyperparams hp_;
  Impl impl_;
  TrainingInfo info_;
  std::vector<std::string> columns_;
};

inline TrainedModel train_model(ModelKind kind, const Hyperparams& hp, const Matrix& X,
                                std::span<const int> y, std::span<const std::size_t> rows,
                                std::vector<std::string> columns = {}) {
  hp.validate();
  if (columns.empty()) {
    for (std::size_t j = 0; j < X.cols(); ++j) columns.push_back("x" + std::to_string(j));
  }
  if (columns.size() != X.cols()) throw DataError("column names do not match matrix width");
  TrainingInfo info;
  auto make = [&](auto&& impl) {
    return TrainedModel(kind, hp, TrainedModel::Impl(std::forward<decltype(impl)>(impl)), info, columns);
  };
  switch (kind) {
    case ModelKind::LogReg: { auto m = train_logreg(X, y, rows, hp.logreg, &info); return make(std::move(m)); }
    case ModelKind::LinearSvm: { auto m = train_linear_svm(X, y, rows, hp.svm, &info); return make(std::move(m)); }
    case ModelKind::DecisionTree: { auto m = train_decision_tree(X, y, rows, hp.tree, &info); return make(std::move(m)); }
    case ModelKind::RandomForest: { auto m = train_random_forest(X, y, rows, hp.forest, &info); return make(std::move(m)); }
    case ModelKind::GradBoost: { auto m = train_gradboost(X, y, rows, hp.boost, &info); return make(std::move(m)); }
    case ModelKind::FeedForward: { auto m = train_feedforward(X, y, rows, hp.ffnn, &info); return make(std::move(m)); }
    case ModelKind::Lstm: { auto m = train_lstm(X, y, rows, hp.lstm, &info); return make(std::move(m)); }
  }
  throw DataError("unknown model kind");
}

inline TrainedModel train_model(ModelKind kind, const Hyperparams& hp, const Matrix& X,
                                std::span<const int> y) {
  const auto rows = detail::all_rows(X.rows());
  return train_model(kind, hp, X, y, rows);
}

/// Probability matrix (rows.size() x 5).
inline Matrix predict_proba(const TrainedModel& m, const Matrix& X, std::span<const std::size_t> rows) {
  if (X.cols() != m.n_features()) {
    throw DataError("feature arity mismatch: model expects " + std::to_string(m.n_features()) +
                    ", got " + std::to_string(X.cols()));
  }
  Matrix P(rows.size(), kNumClasses);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) throw DataError("row index out of range");
    auto p = m.predict_row(X, rows[i]);
    std::copy(p.begin(), p.end(), P.row(i).begin());
  }
  return P;
}

inline Matrix predict_proba(const TrainedModel& m, const Matrix& X) {
  const auto rows = detail::all_rows(X.rows());
  return predict_proba(m, X, rows);
}

/// Argmax of each probability row; lowest ordinal wins ties.
inline std::vector<int> predict_from_proba(const Matrix& P) {
  std::vector<int> out(P.rows());
  for (std::size_t i = 0; i < P.rows(); ++i) out[i] = detail::argmax(P.row(i));
  return out;
}

inline std::vector<int> predict(const TrainedModel& m, const Matrix& X, std::span<const std::size_t> rows) {
  return predict_from_proba(predict_proba(m, X, rows));
}

inline std::vector<int> predict(const TrainedModel& m, const Matrix& X) {
  return predict_from_proba(predict_proba(m, X));
}

struct FeatureWeight {
  std::string column;
  double weight = 0.0;
};

/// Columns ranked by importance (weights >= 0, summing to 1). Linear models
/// use the mean absolute coefficient; trees use normalized impurity decrease
/// (forest) or gain (boosting). Neural models are not supported.
inline std::vector<FeatureWeight> feature_importance(const TrainedModel& model) {
  const std::size_t d = model.n_features();
  std::vector<double> w(d, 0.0);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LogRegModel>) {
          for (std::size_t k = 0; k < kNumClasses; ++k) {
            for (std::size_t j = 0; j < d; ++j) w[j] += std::abs(m.W[k * d + j]) / kNumClasses;
          }
        } else if constexpr (std::is_same_v<M, LinearSvmModel>) {
          for (const auto& mc : m.machines) {
            for (std::size_t j = 0; j < d; ++j) w[j] += std::abs(mc.w[j]) / static_cast<double>(m.machines.size());
          }
        } else if constexpr (std::is_same_v<M, DecisionTreeModel> || std::is_same_v<M, RandomForestModel> ||
                             std::is_same_v<M, GradBoostModel>) {
          w = m.importance;
        } else {
          throw DataError("feature importance is not defined for " + std::string(model_name(model.kind())));
        }
      },
      model.impl());
  detail::normalize(w);
  std::vector<FeatureWeight> out;
  for (std::size_t j = 0; j < d; ++j) out.push_back({model.columns()[j], w[j]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

// ---- persistence ----------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline json tree_to_json(const Tree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    if (n.feature < 0) nodes.push_back({{"v", n.value}});
    else nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"v", n.value}});
  }
  return nodes;
}

inline Tree tree_from_json(const json& j, std::size_t n_features) {
  Tree t;
  for (const auto& n : j) {
    TreeNode node;
    node.value = n.at("v").get<Proba>();
    if (n.contains("f")) {
      node.feature = n.at("f").get<int>();
      node.threshold = n.at("t").get<double>();
      node.left = n.at("l").get<int>();
      node.right = n.at("r").get<int>();
    }
    t.nodes.push_back(node);
  }
  const auto size = static_cast<int>(t.nodes.size());
  if (size == 0) throw FormatError("model: empty tree");
  // Children must come after their parent so that a walk always terminates.
  for (int i = 0; i < size; ++i) {
    const auto& n = t.nodes[static_cast<std::size_t>(i)];
    if (n.feature >= 0 && (n.left <= i || n.right <= i || n.left >= size || n.right >= size)) {
      throw FormatError("model: tree child index out of range");
    }
    if (n.feature >= static_cast<int>(n_features)) throw FormatError("model: tree split on unknown column");
  }
  return t;
}

inline json hyperparams_to_json(const Hyperparams& h) {
  return {
      {"logreg", {{"C", h.logreg.C}, {"learning_rate", h.logreg.learning_rate}, {"epochs", h.logreg.epochs},
                  {"batch", h.logreg.batch}, {"seed", h.logreg.seed}}},
      {"svm", {{"C", h.svm.C}, {"learning_rate", h.svm.learning_rate}, {"epochs", h.svm.epochs}, {"seed", h.svm.seed}}},
      {"tree", {{"max_depth", h.tree.max_depth}, {"min_samples_split", h.tree.min_samples_split},
                {"min_samples_leaf", h.tree.min_samples_leaf}, {"max_features", h.tree.max_features},
                {"seed", h.tree.seed}}},
      {"forest", {{"trees", h.forest.trees}, {"bootstrap", h.forest.bootstrap}, {"max_depth", h.forest.tree.max_depth},
                  {"min_samples_split", h.forest.tree.min_samples_split},
                  {"min_samples_leaf", h.forest.tree.min_samples_leaf},
                  {"max_features", h.forest.tree.max_features}, {"seed", h.forest.seed}}},
      {"boost", {{"rounds", h.boost.rounds}, {"learning_rate", h.boost.learning_rate},
                 {"max_depth", h.boost.max_depth}, {"lambda", h.boost.lambda}, {"alpha", h.boost.alpha},
                 {"subsample", h.boost.subsample}, {"min_child_weight", h.boost.min_child_weight},
                 {"seed", h.boost.seed}}},
      {"ffnn", {{"hidden", h.ffnn.hidden}, {"activation", h.ffnn.activation == Activation::Relu ? "relu" : "tanh"},
                {"optimizer", h.ffnn.optimizer == Optimizer::Adam ? "adam" : "sgd"}, {"epochs", h.ffnn.epochs},
                {"batch", h.ffnn.batch}, {"learning_rate", h.ffnn.learning_rate}, {"seed", h.ffnn.seed}}},
      {"lstm", {{"hidden", h.lstm.hidden}, {"sequence_length", h.lstm.sequence_length},
                {"optimizer", h.lstm.optimizer == Optimizer::Adam ? "adam" : "sgd"}, {"epochs", h.lstm.epochs},
                {"batch", h.lstm.batch}, {"learning_rate", h.lstm.learning_rate}, {"seed", h.lstm.seed}}},
  };
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Applies any keys present in `j` on top of `h`. Unknown keys are ignored.
inline Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams h = {}) {
  using detail::read_opt;
  try {
    if (j.contains("logreg")) {
      const auto& s = j.at("logreg");
      read_opt(s, "C", h.logreg.C); read_opt(s, "learning_rate", h.logreg.learning_rate);
      read_opt(s, "epochs", h.logreg.epochs); read_opt(s, "batch", h.logreg.batch); read_opt(s, "seed", h.logreg.seed);
    }
    if (j.contains("svm")) {
      const auto& s = j.at("svm");
      read_opt(s, "C", h.svm.C); read_opt(s, "learning_rate", h.svm.learning_rate);
      read_opt(s, "epochs", h.svm.epochs); read_opt(s, "seed", h.svm.seed);
    }
    if (j.contains("tree")) {
      const auto& s = j.at("tree");
      read_opt(s, "max_depth", h.tree.max_depth); read_opt(s, "min_samples_split", h.tree.min_samples_split);
      read_opt(s, "min_samples_leaf", h.tree.min_samples_leaf); read_opt(s, "max_features", h.tree.max_features);
      read_opt(s, "seed", h.tree.seed);
    }
    if (j.contains("forest")) {
      const auto& s = j.at("forest");
      read_opt(s, "trees", h.forest.trees); read_opt(s, "bootstrap", h.forest.bootstrap);
      read_opt(s, "max_depth", h.forest.tree.max_depth);
      read_opt(s, "min_samples_split", h.forest.tree.min_samples_split);
      read_opt(s, "min_samples_leaf", h.forest.tree.min_samples_leaf);
      read_opt(s, "max_features", h.forest.tree.max_features); read_opt(s, "seed", h.forest.seed);
    }
    if (j.contains("boost")) {
      const auto& s = j.at("boost");
      read_opt(s, "rounds", h.boost.rounds); read_opt(s, "learning_rate", h.boost.learning_rate);
      read_opt(s, "max_depth", h.boost.max_depth); read_opt(s, "lambda", h.boost.lambda);
      read_opt(s, "alpha", h.boost.alpha); read_opt(s, "subsample", h.boost.subsample);
      read_opt(s, "min_child_weight", h.boost.min_child_weight); read_opt(s, "seed", h.boost.seed);
    }
    auto optimizer = [](const nlohmann::json& s, Optimizer& o) {
      if (s.contains("optimizer")) o = s.at("optimizer").get<std::string>() == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
    };
    if (j.contains("ffnn")) {
      const auto& s = j.at("ffnn");
      read_opt(s, "hidden", h.ffnn.hidden); read_opt(s, "epochs", h.ffnn.epochs);
      read_opt(s, "batch", h.ffnn.batch); read_opt(s, "learning_rate", h.ffnn.learning_rate);
      read_opt(s, "seed", h.ffnn.seed);
      if (s.contains("activation")) {
        h.ffnn.activation = s.at("activation").get<std::string>() == "tanh" ? Activation::Tanh : Activation::Relu;
      }
      optimizer(s, h.ffnn.optimizer);
    }
    if (j.contains("lstm")) {
      const auto& s = j.at("lstm");
      read_opt(s, "hidden", h.lstm.hidden); read_opt(s, "sequence_length", h.lstm.sequence_length);
      read_opt(s, "epochs", h.lstm.epochs); read_opt(s, "batch", h.lstm.batch);
      read_opt(s, "learning_rate", h.lstm.learning_rate); read_opt(s, "seed", h.lstm.seed);
      optimizer(s, h.lstm.optimizer);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("hyperparameters: ") + e.what());
  }
  return h;
}

inline nlohmann::json hyperparams_to_json(const Hyperparams& h) { return detail::hyperparams_to_json(h); }

inline nlohmann::json model_to_json(const TrainedModel& model) {
  using nlohmann::json;
  json params = std::visit(
      [](const auto& m) -> json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LogRegModel>) {
          return {{"W", m.W}, {"b", m.b}};
        } else if constexpr (std::is_same_v<M, LinearSvmModel>) {
          json ms = json::array();
          for (const auto& mc : m.machines) {
            ms.push_back({{"positive", mc.positive}, {"negative", mc.negative}, {"w", mc.w}, {"bias", mc.bias}});
          }
          return {{"machines", ms}};
        } else if constexpr (std::is_same_v<M, DecisionTreeModel>) {
          return {{"tree", detail::tree_to_json(m.tree)}, {"importance", m.importance}};
        } else if constexpr (std::is_same_v<M, RandomForestModel>) {
          json ts = json::array();
          for (const auto& t : m.trees) ts.push_back(detail::tree_to_json(t));
          return {{"trees", ts}, {"importance", m.importance}};
        } else if constexpr (std::is_same_v<M, GradBoostModel>) {
          json rs = json::array();
          for (const auto& r : m.rounds) {
            json per = json::array();
            for (const auto& t : r) per.push_back(detail::tree_to_json(t));
            rs.push_back(per);
          }
          return {{"rounds", rs}, {"importance", m.importance}};
        } else if constexpr (std::is_same_v<M, FeedForwardModel>) {
          return {{"sizes", m.sizes}, {"activation", m.activation == Activation::Relu ? "relu" : "tanh"},
                  {"params", m.params}};
        } else {
          return {{"inputs", m.inputs}, {"hidden", m.hidden}, {"sequence_length", m.sequence_length},
                  {"params", m.params}};
        }
      },
      model.impl());
  const auto& info = model.info();
  return {{"schema_version", kModelSchemaVersion},
          {"kind", model_name(model.kind())},
          {"columns", model.columns()},
          {"hyperparams", detail::hyperparams_to_json(model.hyperparams())},
          {"training", {{"seed", info.seed}, {"epochs_run", info.epochs_run}, {"final_loss", info.final_loss},
                        {"loss_history", info.loss_history}}},
          {"params", params}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || !j.contains("schema_version")) throw FormatError("model: missing schema_version");
    if (j.at("schema_version").get<std::string>() != kModelSchemaVersion) {
      throw FormatError("model: unsupported schema_version " + j.at("schema_version").dump());
    }
    auto kind = model_from_name(j.at("kind").get<std::string>());
    if (!kind) throw FormatError("model: unknown kind " + j.at("kind").dump());
    auto columns = j.at("columns").get<std::vector<std::string>>();
    const std::size_t d = columns.size();
    Hyperparams hp = hyperparams_from_json(j.at("hyperparams"));
    TrainingInfo info;
    const auto& t = j.at("training");
    info.seed = t.at("seed").get<std::uint64_t>();
    info.epochs_run = t.at("epochs_run").get<int>();
    info.final_loss = t.at("final_loss").get<double>();
    info.loss_history = t.value("loss_history", std::vector<double>{});
    const auto& p = j.at("params");
    auto sized = [](const std::vector<double>& v, std::size_t n, const char* what) {
      if (v.size() != n) throw FormatError(std::string("model: ") + what + " has wrong size");
    };
    TrainedModel::Impl impl = LogRegModel{};
    switch (*kind) {
      case ModelKind::LogReg: {
        LogRegModel m(d);
        m.W = p.at("W").get<std::vector<double>>();
        m.b = p.at("b").get<std::vector<double>>();
        sized(m.W, kNumClasses * d, "W");
        sized(m.b, kNumClasses, "b");
        impl = std::move(m);
        break;
      }
      case ModelKind::LinearSvm: {
        LinearSvmModel m;
        m.n_features = d;
        for (const auto& mc : p.at("machines")) {
          LinearSvmModel::Machine x{mc.at("positive").get<int>(), mc.at("negative").get<int>(),
                                    mc.at("w").get<std::vector<double>>(), mc.at("bias").get<double>()};
          sized(x.w, d, "svm weights");
          m.machines.push_back(std::move(x));
        }
        impl = std::move(m);
        break;
      }
      case ModelKind::DecisionTree: {
        DecisionTreeModel m;
        m.n_features = d;
        m.tree = detail::tree_from_json(p.at("tree"), d);
        m.importance = p.at("importance").get<std::vector<double>>();
        impl = std::move(m);
        break;
      }
      case ModelKind::RandomForest: {
        RandomForestModel m;
        m.n_features = d;
        for (const auto& tj : p.at("trees")) m.trees.push_back(detail::tree_from_json(tj, d));
        if (m.trees.empty()) throw FormatError("model: forest without trees");
        m.importance = p.at("importance").get<std::vector<double>>();
        impl = std::move(m);
        break;
      }
      case ModelKind::GradBoost: {
        GradBoostModel m;
        m.n_features = d;
        for (const auto& rj : p.at("rounds")) {
          if (rj.size() != kNumClasses) throw FormatError("model: boosting round needs 5 trees");
          std::array<Tree, kNumClasses> r;
          for (std::size_t k = 0; k < kNumClasses; ++k) r[k] = detail::tree_from_json(rj.at(k), d);
          m.rounds.push_back(std::move(r));
        }
        m.importance = p.at("importance").get<std::vector<double>>();
        impl = std::move(m);
        break;
      }
      case ModelKind::FeedForward: {
        FeedForwardModel m;
        m.sizes = p.at("sizes").get<std::vector<std::size_t>>();
        if (m.sizes.size() < 2 || m.sizes.front() != d || m.sizes.back() != kNumClasses) {
          throw FormatError("model: bad layer sizes");
        }
        m.activation = p.at("activation").get<std::string>() == "tanh" ? Activation::Tanh : Activation::Relu;
        m.params = p.at("params").get<std::vector<double>>();
        auto ref = FeedForwardModel::zeros(d, {m.sizes.begin() + 1, m.sizes.end() - 1}, m.activation);
        sized(m.params, ref.params.size(), "ffnn params");
        impl = std::move(m);
        break;
      }
      case ModelKind::Lstm: {
        auto m = LstmModel::zeros(p.at("inputs").get<std::size_t>(), p.at("hidden").get<std::size_t>(),
                                  p.at("sequence_length").get<std::size_t>());
        if (m.inputs != d || m.sequence_length < 1) throw FormatError("model: bad LSTM shape");
        const auto n = m.params.size();
        m.params = p.at("params").get<std::vector<double>>();
        sized(m.params, n, "lstm params");
        impl = std::move(m);
        break;
      }
    }
    return TrainedModel(*kind, hp, std::move(impl), std::move(info), std::move(columns));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  } catch (const DataError& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << model_to_json(m).dump() << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file " + path + " is corrupt: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace canids
