#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canids/error.hpp"
#include "canids/frame.hpp"
#include "canids/matrix.hpp"

namespace canids {

using Proba = std::array<double, kNumClasses>;

enum class ModelKind { LogReg, LinearSvm, DecisionTree, RandomForest, GradBoost, FeedForward, Lstm };

inline constexpr std::array<ModelKind, 6> kHeadlineModels{
    ModelKind::LogReg,     ModelKind::LinearSvm,   ModelKind::RandomForest,
    ModelKind::GradBoost,  ModelKind::FeedForward, ModelKind::Lstm};

constexpr std::string_view model_name(ModelKind k) {
  switch (k) {
    case ModelKind::LogReg: return "logreg";
    case ModelKind::LinearSvm: return "svm";
    case ModelKind::DecisionTree: return "tree";
    case ModelKind::RandomForest: return "rf";
    case ModelKind::GradBoost: return "gboost";
    case ModelKind::FeedForward: return "ffnn";
    case ModelKind::Lstm: return "lstm";
  }
  return "?";
}

inline std::optional<ModelKind> model_from_name(std::string_view s) {
  for (auto k : {ModelKind::LogReg, ModelKind::LinearSvm, ModelKind::DecisionTree,
                 ModelKind::RandomForest, ModelKind::GradBoost, ModelKind::FeedForward,
                 ModelKind::Lstm}) {
    if (model_name(k) == s) return k;
  }
  return std::nullopt;
}

enum class Activation { Relu, Tanh };
enum class Optimizer { Sgd, Adam };

struct LogRegParams {
  double C = 1.0;  // inverse L2 strength
  double learning_rate = 0.5;
  int epochs = 40;
  std::size_t batch = 256;
  std::uint64_t seed = 1;
};

struct SvmParams {
  double C = 1.0;
  double learning_rate = 0.05;
  int epochs = 15;
  std::uint64_t seed = 1;
};

struct TreeParams {
  int max_depth = 12;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  double max_features = 1.0;  // fraction of columns tried per split
  std::uint64_t seed = 1;
};

struct ForestParams {
  std::size_t trees = 100;
  bool bootstrap = true;
  TreeParams tree{16, 2, 1, 0.0, 1};  // max_features 0 => sqrt(d)
  std::uint64_t seed = 1;
};

struct BoostParams {
  int rounds = 40;
  double learning_rate = 0.3;
  int max_depth = 5;
  double lambda = 1.0;  // L2 on leaf weights
  double alpha = 0.0;   // L1 on leaf weights
  double subsample = 1.0;
  double min_child_weight = 1e-3;
  std::uint64_t seed = 1;
};

struct FeedForwardParams {
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::Relu;
  Optimizer optimizer = Optimizer::Adam;
  int epochs = 8;
  std::size_t batch = 64;
  double learning_rate = 0.003;
  std::uint64_t seed = 1;
};

struct LstmParams {
  std::size_t hidden = 16;
  std::size_t sequence_length = 16;
  Optimizer optimizer = Optimizer::Adam;
  int epochs = 3;
  std::size_t batch = 32;
  double learning_rate = 0.005;
  std::uint64_t seed = 1;
};

/// Every model family's settings; only the bundle matching the trained kind is used.
struct Hyperparams {
  LogRegParams logreg;
  SvmParams svm;
  TreeParams tree;
  ForestParams forest;
  BoostParams boost;
  FeedForwardParams ffnn;
  LstmParams lstm;

  void validate() const {
    auto pos = [](double v, const char* what) {
      if (!(v > 0.0)) throw DataError(std::string(what) + " must be > 0");
    };
    pos(logreg.C, "logreg.C");
    pos(logreg.learning_rate, "logreg.learning_rate");
    pos(svm.C, "svm.C");
    pos(svm.learning_rate, "svm.learning_rate");
    pos(boost.learning_rate, "boost.learning_rate");
    pos(ffnn.learning_rate, "ffnn.learning_rate");
    pos(lstm.learning_rate, "lstm.learning_rate");
    if (logreg.epochs < 1 || svm.epochs < 1 || boost.rounds < 1 || ffnn.epochs < 1 ||
        lstm.epochs < 1) {
      throw DataError("epoch/round counts must be >= 1");
    }
    if (logreg.batch < 1 || ffnn.batch < 1 || lstm.batch < 1) throw DataError("batch must be >= 1");
    if (forest.trees < 1) throw DataError("forest.trees must be >= 1");
    if (lstm.sequence_length < 1) throw DataError("lstm.sequence_length must be >= 1");
    if (lstm.hidden < 1) throw DataError("lstm.hidden must be >= 1");
    if (!(boost.subsample > 0.0 && boost.subsample <= 1.0)) throw DataError("boost.subsample in (0,1]");
    if (boost.lambda < 0.0 || boost.alpha < 0.0) throw DataError("boost penalties must be >= 0");
  }
};

struct TrainingInfo {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // per epoch / boosting round, when tracked
};

namespace detail {

inline void softmax_inplace(std::span<double> z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
}

/// Argmax with lowest-index tie-break.
inline int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

inline void check_rows(const Matrix& X, std::span<const int> y, std::span<const std::size_t> rows) {
  if (X.rows() != y.size()) throw DataError("feature/target row count mismatch");
  if (rows.empty()) throw DataError("no training rows");
  for (auto r : rows) {
    if (r >= X.rows()) throw DataError("training row index out of range");
    if (y[r] < 0 || y[r] >= static_cast<int>(kNumClasses)) throw DataError("target out of range");
  }
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

/// Adam or plain SGD over one flat parameter vector.
class StepRule {
 public:
  StepRule(Optimizer kind, std::size_t n, double lr) : kind_(kind), lr_(lr), m_(n), v_(n) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (kind_ == Optimizer::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      return;
    }
    ++t_;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1 - b2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  Optimizer kind_;
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace detail

}  // namespace canids
