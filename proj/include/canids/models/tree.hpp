#pragma once

// CART trees grown greedily on presorted columns. One grower serves both the
// Gini classification trees (decision tree, random forest) and the
// second-order regression trees of the gradient-boosted ensemble.
//
// Split rule: x[feature] <= threshold goes left. Thresholds are midpoints of
// consecutive distinct values. Ties in split quality keep the first candidate
// in (feature ascending, threshold ascending) order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "canids/models/common.hpp"
#include "canids/rng.hpp"

namespace canids {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Proba value{};  // class distribution (classification) or value[0] (regression)
};

struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
  }

  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].feature < 0) continue;
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
    return best;
  }
};

namespace detail {

/// Row orderings of a training matrix, one per column, ties by row index.
struct Presorted {
  std::vector<std::vector<std::uint32_t>> order;

  explicit Presorted(const Matrix& X) : order(X.cols()) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      auto& o = order[j];
      o.resize(X.rows());
      std::iota(o.begin(), o.end(), 0u);
      std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
        return X(a, j) < X(b, j);
      });
    }
  }
};

struct GrowLimits {
  int max_depth = 12;
  std::size_t min_samples_split = 2;
  std::size_t features_per_split = 0;  // 0 = all
};

/// Gini criterion over integer sample weights.
struct GiniPolicy {
  using Stats = Proba;
  std::span<const int> y;
  std::span<const double> weight;
  double min_leaf = 1.0;

  void add(Stats& s, std::uint32_t r) const { s[static_cast<std::size_t>(y[r])] += weight[r]; }
  static Stats minus(const Stats& a, const Stats& b) {
    Stats d;
    for (std::size_t k = 0; k < kNumClasses; ++k) d[k] = a[k] - b[k];
    return d;
  }
  static double total(const Stats& s) { return std::accumulate(s.begin(), s.end(), 0.0); }
  /// Sum of squared class weights over node weight; larger is purer.
  static double score(const Stats& s) {
    const double w = total(s);
    if (w <= 0.0) return 0.0;
    double q = 0.0;
    for (double c : s) q += c * c;
    return q / w;
  }
  static bool pure(const Stats& s) {
    int nz = 0;
    for (double c : s) nz += c > 0.0;
    return nz <= 1;
  }
  bool child_ok(const Stats& s) const { return total(s) >= min_leaf; }
  static bool accept(double gain) { return gain >= 0.0; }
  static void leaf(const Stats& s, TreeNode& n) {
    const double w = total(s);
    for (std::size_t k = 0; k < kNumClasses; ++k) n.value[k] = w > 0 ? s[k] / w : 0.0;
  }
};

/// Second-order criterion with L1 (alpha) and L2 (lambda) leaf penalties.
struct NewtonPolicy {
  struct Stats {
    double g = 0.0;
    double h = 0.0;
    double n = 0.0;
  };
  std::span<const double> grad;
  std::span<const double> hess;
  std::span<const double> weight;  // 0/1 row-subsample mask
  double lambda = 1.0;
  double alpha = 0.0;
  double min_child_weight = 1e-3;
  double shrinkage = 1.0;

  void add(Stats& s, std::uint32_t r) const {
    s.g += grad[r] * weight[r];
    s.h += hess[r] * weight[r];
    s.n += weight[r];
  }
  static Stats minus(const Stats& a, const Stats& b) { return {a.g - b.g, a.h - b.h, a.n - b.n}; }
  static double total(const Stats& s) { return s.n; }
  double thresholded(double g) const {
    if (g > alpha) return g - alpha;
    if (g < -alpha) return g + alpha;
    return 0.0;
  }
  double score(const Stats& s) const {
    const double t = thresholded(s.g);
    return 0.5 * t * t / (s.h + lambda);
  }
  static bool pure(const Stats&) { return false; }
  bool child_ok(const Stats& s) const { return s.h >= min_child_weight; }
  static bool accept(double gain) { return gain > 0.0; }
  void leaf(const Stats& s, TreeNode& n) const {
    n.value[0] = -shrinkage * thresholded(s.g) / (s.h + lambda);
  }
};

template <class Policy>
class Grower {
 public:
  Grower(const Matrix& X, const Presorted& pre, std::span<const double> weight, const Policy& policy,
         GrowLimits limits, std::uint64_t seed)
      : X_(X), policy_(policy), limits_(limits), rng_(seed), goes_left_(X.rows(), 0),
        importance_(X.cols(), 0.0) {
    cols_.resize(X.cols());
    for (std::size_t j = 0; j < X.cols(); ++j) {
      auto& c = cols_[j];
      c.reserve(X.rows());
      for (auto r : pre.order[j]) {
        if (weight[r] > 0.0) c.push_back(r);
      }
    }
    buf_.resize(cols_.empty() ? 0 : cols_[0].size());
  }

  Tree grow() {
    Tree t;
    tree_ = &t;
    if (!cols_.empty() && !cols_[0].empty()) {
      typename Policy::Stats s{};
      for (auto r : cols_[0]) policy_.add(s, r);
      build(0, cols_[0].size(), 0, s);
    } else {
      t.nodes.emplace_back();
    }
    tree_ = nullptr;
    return t;
  }

  const std::vector<double>& importance() const { return importance_; }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    std::size_t n_left = 0;
    double gain = 0.0;
    double score = 0.0;
  };

  int build(std::size_t lo, std::size_t hi, int depth, const typename Policy::Stats& stats) {
    const int id = static_cast<int>(tree_->nodes.size());
    tree_->nodes.emplace_back();
    const bool can_split = depth < limits_.max_depth && hi - lo >= limits_.min_samples_split &&
                           Policy::total(stats) >= static_cast<double>(limits_.min_samples_split) &&
                           !Policy::pure(stats);
    Split best;
    if (can_split) best = find_split(lo, hi, stats);
    if (best.feature < 0) {
      policy_.leaf(stats, tree_->nodes[static_cast<std::size_t>(id)]);
      return id;
    }
    importance_[static_cast<std::size_t>(best.feature)] += best.gain;

    // Left child rows are the first n_left entries of the split column.
    const auto& sc = cols_[static_cast<std::size_t>(best.feature)];
    typename Policy::Stats left{};
    for (std::size_t k = lo; k < hi; ++k) goes_left_[sc[k]] = k < lo + best.n_left;
    for (std::size_t k = lo; k < lo + best.n_left; ++k) policy_.add(left, sc[k]);
    for (auto& c : cols_) {
      std::size_t a = lo, b = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        if (goes_left_[c[k]]) c[a++] = c[k];
        else buf_[b++] = c[k];
      }
      std::copy(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(b), c.begin() + static_cast<std::ptrdiff_t>(a));
    }
    const auto right = Policy::minus(stats, left);
    const int l = build(lo, lo + best.n_left, depth + 1, left);
    const int r = build(lo + best.n_left, hi, depth + 1, right);
    auto& node = tree_->nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    policy_.leaf(stats, node);  // interior nodes keep their distribution for inspection
    return id;
  }

  Split find_split(std::size_t lo, std::size_t hi, const typename Policy::Stats& stats) {
    const std::size_t d = cols_.size();
    std::vector<std::size_t> feats(d);
    std::iota(feats.begin(), feats.end(), 0);
    if (limits_.features_per_split > 0 && limits_.features_per_split < d) {
      for (std::size_t i = 0; i < limits_.features_per_split; ++i) {
        std::swap(feats[i], feats[i + rng_.below(d - i)]);
      }
      feats.resize(limits_.features_per_split);
      std::sort(feats.begin(), feats.end());
    }
    const double parent = policy_.score(stats);
    Split best;
    bool found = false;
    for (auto j : feats) {
      const auto& c = cols_[j];
      typename Policy::Stats left{};
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        policy_.add(left, c[k]);
        const double a = X_(c[k], j), b = X_(c[k + 1], j);
        if (!(a < b)) continue;
        const auto right = Policy::minus(stats, left);
        if (!policy_.child_ok(left) || !policy_.child_ok(right)) continue;
        const double s = policy_.score(left) + policy_.score(right);
        // Equal scores may round apart; the first candidate in (feature, threshold) order wins.
        if (!found || s > best.score + 1e-12 * std::max(1.0, std::abs(best.score))) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best = {static_cast<int>(j), mid, k + 1 - lo, s - parent, s};
          found = true;
        }
      }
    }
    if (!found || !Policy::accept(best.gain)) return {};
    return best;
  }

  const Matrix& X_;
  Policy policy_;
  GrowLimits limits_;
  Rng rng_;
  std::vector<std::vector<std::uint32_t>> cols_;
  std::vector<std::uint32_t> buf_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<double> importance_;
  Tree* tree_ = nullptr;
};

inline void normalize(std::vector<double>& v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0.0) {
    for (auto& x : v) x /= s;
  }
}

inline std::size_t features_per_split(double fraction, std::size_t d) {
  if (fraction <= 0.0) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d)))));
  }
  if (fraction >= 1.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d))));
}

inline std::vector<int> gather_labels(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

}  // namespace detail

/// Single CART classification tree.
struct DecisionTreeModel {
  std::size_t n_features = 0;
  Tree tree;
  std::vector<double> importance;  // normalized impurity decrease

  Proba predict_proba(std::span<const double> x) const { return tree.leaf(x).value; }
};

namespace detail {

inline DecisionTreeModel grow_classifier(const Matrix& X, std::span<const int> y, const Presorted& pre,
                                         std::span<const double> weight, const TreeParams& hp,
                                         std::size_t features, std::uint64_t seed) {
  GiniPolicy pol{y, weight, static_cast<double>(std::max<std::size_t>(1, hp.min_samples_leaf))};
  GrowLimits lim{hp.max_depth, std::max<std::size_t>(2, hp.min_samples_split), features};
  Grower<GiniPolicy> g(X, pre, weight, pol, lim, seed);
  DecisionTreeModel m;
  m.n_features = X.cols();
  m.tree = g.grow();
  m.importance = g.importance();
  normalize(m.importance);
  return m;
}

}  // namespace detail

inline DecisionTreeModel train_decision_tree(const Matrix& X, std::span<const int> y,
                                             std::span<const std::size_t> rows, const TreeParams& hp,
                                             TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  const Matrix local = X.select_rows(rows);
  const auto labels = detail::gather_labels(y, rows);
  const detail::Presorted pre(local);
  const std::vector<double> weight(local.rows(), 1.0);
  auto m = detail::grow_classifier(local, labels, pre, weight, hp,
                                   detail::features_per_split(hp.max_features, local.cols()), hp.seed);
  if (info) *info = {hp.seed, 1, 0.0, {}};
  return m;
}

/// Bagged Gini trees; hard majority vote.
struct RandomForestModel {
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  std::vector<double> importance;

  Proba predict_proba(std::span<const double> x) const {
    Proba p{};
    for (const auto& t : trees) p[static_cast<std::size_t>(detail::argmax(t.leaf(x).value))] += 1.0;
    for (auto& v : p) v /= static_cast<double>(trees.size());
    return p;
  }
};

inline RandomForestModel train_random_forest(const Matrix& X, std::span<const int> y,
                                             std::span<const std::size_t> rows,
                                             const ForestParams& hp, TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  const Matrix local = X.select_rows(rows);
  const auto labels = detail::gather_labels(y, rows);
  const detail::Presorted pre(local);
  const std::size_t n = local.rows();
  const std::size_t feats = detail::features_per_split(hp.tree.max_features, local.cols());
  RandomForestModel m;
  m.n_features = local.cols();
  m.importance.assign(local.cols(), 0.0);
  std::vector<double> weight(n);
  for (std::size_t t = 0; t < hp.trees; ++t) {
    Rng rng(hp.seed * 0x100000001B3ULL + t);
    if (hp.bootstrap) {
      std::fill(weight.begin(), weight.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) weight[rng.below(n)] += 1.0;
    } else {
      std::fill(weight.begin(), weight.end(), 1.0);
    }
    auto tree = detail::grow_classifier(local, labels, pre, weight, hp.tree, feats, rng.fork());
    for (std::size_t j = 0; j < m.importance.size(); ++j) m.importance[j] += tree.importance[j];
    m.trees.push_back(std::move(tree.tree));
  }
  detail::normalize(m.importance);
  if (info) *info = {hp.seed, static_cast<int>(hp.trees), 0.0, {}};
  return m;
}

/// Softmax-objective gradient boosting: one regression tree per class per round.
struct GradBoostModel {
  std::size_t n_features = 0;
  std::vector<std::array<Tree, kNumClasses>> rounds;
  std::vector<double> importance;  // normalized total gain

  Proba raw_score(std::span<const double> x) const {
    Proba f{};
    for (const auto& r : rounds) {
      for (std::size_t k = 0; k < kNumClasses; ++k) f[k] += r[k].leaf(x).value[0];
    }
    return f;
  }

  Proba predict_proba(std::span<const double> x) const {
    Proba f = raw_score(x);
    detail::softmax_inplace(f);
    return f;
  }
};

inline GradBoostModel train_gradboost(const Matrix& X, std::span<const int> y,
                                      std::span<const std::size_t> rows, const BoostParams& hp,
                                      TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  const Matrix local = X.select_rows(rows);
  const auto labels = detail::gather_labels(y, rows);
  const detail::Presorted pre(local);
  const std::size_t n = local.rows();
  GradBoostModel m;
  m.n_features = local.cols();
  m.importance.assign(local.cols(), 0.0);
  std::vector<Proba> F(n, Proba{});
  std::vector<double> grad(n), hess(n), weight(n, 1.0);
  Rng rng(hp.seed);
  TrainingInfo ti{hp.seed, 0, 0.0, {}};
  auto log_loss = [&] {
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Proba p = F[i];
      detail::softmax_inplace(p);
      l -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-300));
    }
    return l / static_cast<double>(n);
  };
  for (int round = 0; round < hp.rounds; ++round) {
    if (hp.subsample < 1.0) {
      for (auto& w : weight) w = rng.uniform() < hp.subsample ? 1.0 : 0.0;
    }
    std::vector<Proba> P(F);
    for (auto& p : P) detail::softmax_inplace(p);
    std::array<Tree, kNumClasses> trees;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = P[i][k];
        grad[i] = p - (labels[i] == static_cast<int>(k) ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
        if (!std::isfinite(grad[i])) throw TrainingError("gradboost: non-finite gradient");
      }
      detail::NewtonPolicy pol{grad, hess, weight, hp.lambda, hp.alpha, hp.min_child_weight, hp.learning_rate};
      detail::GrowLimits lim{hp.max_depth, 2, 0};
      detail::Grower<detail::NewtonPolicy> g(local, pre, weight, pol, lim, rng.fork());
      trees[k] = g.grow();
      for (std::size_t j = 0; j < m.importance.size(); ++j) m.importance[j] += g.importance()[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto x = local.row(i);
      for (std::size_t k = 0; k < kNumClasses; ++k) F[i][k] += trees[k].leaf(x).value[0];
    }
    m.rounds.push_back(std::move(trees));
    ti.loss_history.push_back(log_loss());
    ti.epochs_run = round + 1;
  }
  detail::normalize(m.importance);
  ti.final_loss = ti.loss_history.empty() ? 0.0 : ti.loss_history.back();
  if (info) *info = ti;
  return m;
}

}  // namespace canids
