#pragma once

// Multinomial logistic regression and one-vs-one linear SVM.

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "canids/models/common.hpp"
#include "canids/rng.hpp"

namespace canids {

/// Softmax regression: p = softmax(W x + b). W is classes x features, row-major.
struct LogRegModel {
  std::size_t n_features = 0;
  std::vector<double> W;
  std::vector<double> b;

  explicit LogRegModel(std::size_t d = 0) : n_features(d), W(kNumClasses * d, 0.0), b(kNumClasses, 0.0) {}

  Proba predict_proba(std::span<const double> x) const {
    Proba z{};
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      double s = b[k];
      const double* w = W.data() + k * n_features;
      for (std::size_t j = 0; j < n_features; ++j) s += w[j] * x[j];
      z[k] = s;
    }
    detail::softmax_inplace(z);
    return z;
  }

  double weight_norm() const {
    return std::sqrt(std::inner_product(W.begin(), W.end(), W.begin(), 0.0));
  }
};

struct LogRegGradient {
  std::vector<double> W;
  std::vector<double> b;
};

/// Mean cross-entropy over `rows` plus ||W||^2 / (2 C n_total); the bias is
/// not penalized. Fills `grad` when given. `n_total` scales the penalty so that
/// mini-batch objectives are unbiased estimates of the full one (0 means rows.size()).
inline double logreg_objective(const LogRegModel& m, const Matrix& X, std::span<const int> y,
                               std::span<const std::size_t> rows, double C,
                               LogRegGradient* grad = nullptr, std::size_t n_total = 0) {
  const std::size_t d = m.n_features;
  const double n = static_cast<double>(n_total ? n_total : rows.size());
  if (grad) {
    grad->W.assign(m.W.size(), 0.0);
    grad->b.assign(kNumClasses, 0.0);
  }
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    auto x = X.row(r);
    Proba p = m.predict_proba(x);
    const auto t = static_cast<std::size_t>(y[r]);
    loss -= std::log(std::max(p[t], 1e-300));
    if (!grad) continue;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double e = (p[k] - (k == t ? 1.0 : 0.0)) * inv;
      grad->b[k] += e;
      double* g = grad->W.data() + k * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += e * x[j];
    }
  }
  loss *= inv;
  const double pen = 1.0 / (C * n);
  double sq = 0.0;
  for (std::size_t i = 0; i < m.W.size(); ++i) {
    sq += m.W[i] * m.W[i];
    if (grad) grad->W[i] += pen * m.W[i];
  }
  return loss + 0.5 * pen * sq;
}

inline LogRegModel train_logreg(const Matrix& X, std::span<const int> y,
                                std::span<const std::size_t> rows, const LogRegParams& hp,
                                TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  LogRegModel m(X.cols());
  Rng rng(hp.seed);
  std::vector<std::size_t> order(rows.begin(), rows.end());
  LogRegGradient g;
  double loss = 0.0;
  int epoch = 0;
  for (; epoch < hp.epochs; ++epoch) {
    rng.shuffle(order);
    const double lr = hp.learning_rate / (1.0 + 0.1 * epoch);
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      logreg_objective(m, X, y, batch, hp.C, &g, rows.size());
      for (std::size_t i = 0; i < m.W.size(); ++i) m.W[i] -= lr * g.W[i];
      for (std::size_t k = 0; k < kNumClasses; ++k) m.b[k] -= lr * g.b[k];
    }
    loss = logreg_objective(m, X, y, rows, hp.C);
    if (!std::isfinite(loss)) {
      throw TrainingError("logreg: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
  }
  if (info) *info = {hp.seed, epoch, loss, {}};
  return m;
}

/// Ten pairwise hinge-loss machines for five classes, voted.
struct LinearSvmModel {
  struct Machine {
    int positive = 0;  // class voted for when the margin is >= 0
    int negative = 1;
    std::vector<double> w;
    double bias = 0.0;
  };
  std::size_t n_features = 0;
  std::vector<Machine> machines;

  double margin(const Machine& mc, std::span<const double> x) const {
    double s = mc.bias;
    for (std::size_t j = 0; j < n_features; ++j) s += mc.w[j] * x[j];
    return s;
  }

  std::array<int, kNumClasses> votes(std::span<const double> x, Proba* margins = nullptr) const {
    std::array<int, kNumClasses> v{};
    Proba sum{};
    for (const auto& mc : machines) {
      const double s = margin(mc, x);
      ++v[static_cast<std::size_t>(s >= 0.0 ? mc.positive : mc.negative)];
      sum[static_cast<std::size_t>(mc.positive)] += s;
      sum[static_cast<std::size_t>(mc.negative)] -= s;
    }
    if (margins) *margins = sum;
    return v;
  }

  /// Vote shares, with summed margins folded in as a sub-vote tie-breaker:
  /// p_c = (votes_c + softmax(margins)_c) / (machines + 1).
  Proba predict_proba(std::span<const double> x) const {
    Proba margins{};
    auto v = votes(x, &margins);
    detail::softmax_inplace(margins);
    Proba p{};
    const double denom = static_cast<double>(machines.size()) + 1.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) p[k] = (v[k] + margins[k]) / denom;
    return p;
  }
};

inline LinearSvmModel train_linear_svm(const Matrix& X, std::span<const int> y,
                                       std::span<const std::size_t> rows, const SvmParams& hp,
                                       TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  const std::size_t d = X.cols();
  LinearSvmModel m;
  m.n_features = d;
  Rng rng(hp.seed);
  double total_obj = 0.0;
  for (int a = 0; a < static_cast<int>(kNumClasses); ++a) {
    for (int b = a + 1; b < static_cast<int>(kNumClasses); ++b) {
      LinearSvmModel::Machine mc{a, b, std::vector<double>(d, 0.0), 0.0};
      std::vector<std::size_t> pair;
      for (auto r : rows) {
        if (y[r] == a || y[r] == b) pair.push_back(r);
      }
      if (!pair.empty()) {
        const double lambda = 1.0 / (hp.C * static_cast<double>(pair.size()));
        std::size_t t = 0;
        for (int e = 0; e < hp.epochs; ++e) {
          rng.shuffle(pair);
          for (auto r : pair) {
            const double eta = hp.learning_rate / (1.0 + hp.learning_rate * lambda * static_cast<double>(t++));
            const double sign = y[r] == a ? 1.0 : -1.0;
            auto x = X.row(r);
            const double s = m.margin(mc, x);
            const double shrink = 1.0 - eta * lambda;
            if (sign * s < 1.0) {
              for (std::size_t j = 0; j < d; ++j) mc.w[j] = shrink * mc.w[j] + eta * sign * x[j];
              mc.bias += eta * sign;
            } else {
              for (std::size_t j = 0; j < d; ++j) mc.w[j] *= shrink;
            }
          }
        }
        double hinge = 0.0, sq = 0.0;
        for (auto r : pair) {
          const double sign = y[r] == a ? 1.0 : -1.0;
          hinge += std::max(0.0, 1.0 - sign * m.margin(mc, X.row(r)));
        }
        for (double w : mc.w) sq += w * w;
        const double obj = hinge / static_cast<double>(pair.size()) + 0.5 * lambda * sq;
        if (!std::isfinite(obj)) throw TrainingError("svm: non-finite objective");
        total_obj += obj;
      }
      m.machines.push_back(std::move(mc));
    }
  }
  if (info) *info = {hp.seed, hp.epochs, total_obj / static_cast<double>(m.machines.size()), {}};
  return m;
}

}  // namespace canids
