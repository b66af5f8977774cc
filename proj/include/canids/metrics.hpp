#pragma once

// Classification metrics, one-vs-rest ROC, stratified k-fold partitions and
// the evaluation report document.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "canids/error.hpp"
#include "canids/frame.hpp"
#include "canids/matrix.hpp"
#include "canids/rng.hpp"

namespace canids {

/// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (const auto& row : counts) for (auto v : row) s += v;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) s += counts[c][c];
    return s;
  }
  std::uint64_t row_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (auto v : counts[c]) s += v;
    return s;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s += row[c];
    return s;
  }
  std::uint64_t tp(std::size_t c) const { return counts[c][c]; }
  std::uint64_t fn(std::size_t c) const { return row_sum(c) - tp(c); }
  std::uint64_t fp(std::size_t c) const { return col_sum(c) - tp(c); }
  std::uint64_t tn(std::size_t c) const { return total() - tp(c) - fn(c) - fp(c); }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw DataError("confusion: length mismatch");
  ConfusionMatrix cm;
  constexpr int k = static_cast<int>(kNumClasses);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= k || y_pred[i] < 0 || y_pred[i] >= k) {
      throw DataError("confusion: class ordinal out of range at index " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  return cm;
}

struct PerClass {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct ClassMetrics {
  std::array<PerClass, kNumClasses> per_class{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
};

namespace detail {
inline double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }
}  // namespace detail

/// Precision, recall and F1 are 0 whenever their denominator is 0.
inline ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw DataError("class_metrics: empty confusion matrix");
  ClassMetrics m;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& pc = m.per_class[c];
    pc.precision = detail::ratio(cm.tp(c), cm.tp(c) + cm.fp(c));
    pc.recall = detail::ratio(cm.tp(c), cm.tp(c) + cm.fn(c));
    pc.f1 = detail::f1_of(pc.precision, pc.recall);
    pc.support = cm.row_sum(c);
    m.macro_f1 += pc.f1 / static_cast<double>(kNumClasses);
    tp += cm.tp(c);
    fp += cm.fp(c);
    fn += cm.fn(c);
  }
  m.micro_f1 = detail::f1_of(detail::ratio(tp, tp + fp), detail::ratio(tp, tp + fn));
  m.accuracy = detail::ratio(cm.trace(), n);
  return m;
}

inline double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  return class_metrics(confusion(y_true, y_pred)).accuracy;
}

// ---- ROC ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocClass {
  bool defined = false;  // needs at least one positive and one negative
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct RocCurve {
  std::array<RocClass, kNumClasses> per_class{};
  double macro_auc = 0.0;
  std::size_t defined_classes = 0;
};

/// Exact step curve for `scores` against binary `positive`. Thresholds are
/// +inf, every distinct score in descending order, and -inf; a row counts as
/// predicted positive when its score is >= the threshold.
inline RocClass roc_binary(std::span<const double> scores, const std::vector<bool>& positive) {
  RocClass rc;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("roc: non-finite score");
    order[i] = i;
    (positive[i] ? rc.positives : rc.negatives) += 1;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  rc.defined = rc.positives > 0 && rc.negatives > 0;
  const double P = static_cast<double>(rc.positives), N = static_cast<double>(rc.negatives);
  auto point = [&](double thr, std::uint64_t tp, std::uint64_t fp) {
    return RocPoint{thr, N > 0 ? static_cast<double>(fp) / N : 0.0, P > 0 ? static_cast<double>(tp) / P : 0.0};
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  rc.points.push_back(point(inf, 0, 0));
  // Twice the area in units of (1/P)(1/N), accumulated exactly in integers.
  std::uint64_t area2 = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::uint64_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (positive[order[i]] ? tp : fp) += 1;
    area2 += (fp - fp0) * (tp + tp0);
    rc.points.push_back(point(s, tp, fp));
  }
  rc.points.push_back(point(-inf, tp, fp));
  if (rc.defined) rc.auc = static_cast<double>(area2) / (2.0 * P * N);
  return rc;
}

/// One-vs-rest curves over the columns of an n x 5 probability matrix.
inline RocCurve roc_auc_ovr(std::span<const int> y_true, const Matrix& proba) {
  if (proba.rows() != y_true.size() || proba.cols() != kNumClasses) {
    throw DataError("roc: probability matrix shape mismatch");
  }
  RocCurve out;
  std::vector<double> col(y_true.size());
  std::vector<bool> pos(y_true.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      col[i] = proba(i, c);
      pos[i] = y_true[i] == static_cast<int>(c);
    }
    out.per_class[c] = roc_binary(col, pos);
    if (out.per_class[c].defined) {
      out.macro_auc += out.per_class[c].auc;
      ++out.defined_classes;
    }
  }
  if (out.defined_classes) out.macro_auc /= static_cast<double>(out.defined_classes);
  return out;
}

// ---- cross-validation partitions -------------------------------------------------------

/// Fold index (0..k-1) per row. Each class is shuffled and dealt round-robin,
/// starting where the previous class stopped, so every fold holds floor or
/// ceil of n_c / k rows of each class.
inline std::vector<int> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DataError("cross-validation: K must be >= 2");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= static_cast<int>(kNumClasses)) throw DataError("cross-validation: bad label");
    by_class[static_cast<std::size_t>(y[i])].push_back(i);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!by_class[c].empty() && by_class[c].size() < k) {
      throw DataError("cross-validation: class " + std::string(label_name(static_cast<ClassLabel>(c))) +
                      " has fewer than K rows");
    }
  }
  Rng rng(seed);
  std::vector<int> fold(y.size(), -1);
  std::size_t next = 0;
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    for (auto i : idx) {
      fold[i] = static_cast<int>(next);
      next = (next + 1) % k;
    }
  }
  return fold;
}

struct FoldSplit {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// K x repeats splits ordered by (repeat, fold); repeat r is seeded from (seed, r).
inline std::vector<FoldSplit> repeated_stratified_kfold(std::span<const int> y, std::size_t k,
                                                        std::size_t repeats, std::uint64_t seed) {
  if (repeats < 1) throw DataError("cross-validation: repeats must be >= 1");
  std::vector<FoldSplit> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto fold = stratified_folds(y, k, seed * 0x9E3779B97F4A7C15ULL + r + 1);
    for (std::size_t f = 0; f < k; ++f) {
      FoldSplit s{r, f, {}, {}};
      for (std::size_t i = 0; i < y.size(); ++i) {
        (static_cast<std::size_t>(fold[i]) == f ? s.test : s.train).push_back(i);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct CvResult {
  std::size_t k = 3;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::vector<double> scores;  // (repeat, fold) order

  double mean() const {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (double v : scores) s += v;
    return s / static_cast<double>(scores.size());
  }
  /// Population standard deviation of the fold scores.
  double stddev() const {
    if (scores.empty()) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : scores) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(scores.size()));
  }
};

// ---- report -----------------------------------------------------------------------------

inline constexpr const char* kReportSchemaVersion = "1";

enum class FeatureMode { With, Without };

constexpr std::string_view feature_mode_name(FeatureMode m) { return m == FeatureMode::With ? "with" : "without"; }

/// One model under one feature mode. `status` is "ok", "skipped" or "failed".
struct ResultBlock {
  std::string model;
  FeatureMode features = FeatureMode::With;
  std::string status = "skipped";
  std::string message;
  ConfusionMatrix confusion;
  ClassMetrics metrics;
  RocCurve roc;
  std::optional<CvResult> cv;
  std::uint64_t test_rows = 0;
};

struct EvalReport {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ResultBlock> results;

  const ResultBlock* find(std::string_view model, FeatureMode mode) const {
    for (const auto& b : results) {
      if (b.model == model && b.features == mode) return &b;
    }
    return nullptr;
  }
};

/// Places `block` into the slot for (model, mode), keeping declared order.
inline void add_result(EvalReport& r, ResultBlock block) {
  for (auto& b : r.results) {
    if (b.model == block.model && b.features == block.features) {
      b = std::move(block);
      return;
    }
  }
  r.results.push_back(std::move(block));
}

/// Pre-fills one "skipped" block per (model, mode) pair.
inline EvalReport build_report(nlohmann::json metadata, std::span<const std::string> models) {
  EvalReport r;
  r.metadata = std::move(metadata);
  for (const auto& m : models) {
    for (auto mode : {FeatureMode::With, FeatureMode::Without}) {
      ResultBlock b;
      b.model = m;
      b.features = mode;
      r.results.push_back(std::move(b));
    }
  }
  return r;
}

inline ResultBlock make_result(std::string model, FeatureMode mode, std::span<const int> y_true,
                               const Matrix& proba, std::span<const int> y_pred) {
  ResultBlock b;
  b.model = std::move(model);
  b.features = mode;
  b.status = "ok";
  b.confusion = confusion(y_true, y_pred);
  b.metrics = class_metrics(b.confusion);
  b.roc = roc_auc_ovr(y_true, proba);
  b.test_rows = y_true.size();
  return b;
}

namespace detail {

using nlohmann::json;

inline json roc_to_json(const RocCurve& roc) {
  json per = json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& rc = roc.per_class[c];
    json b{{"class", label_name(static_cast<ClassLabel>(c))},
           {"defined", rc.defined},
           {"positives", rc.positives},
           {"negatives", rc.negatives},
           {"points", rc.points.size()}};
    b["auc"] = rc.defined ? json(rc.auc) : json(nullptr);
    per.push_back(b);
  }
  return {{"per_class", per}, {"macro_auc", roc.macro_auc}, {"defined_classes", roc.defined_classes}};
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
  using nlohmann::json;
  json blocks = json::array();
  for (const auto& b : r.results) {
    json j{{"model", b.model}, {"features", feature_mode_name(b.features)}, {"status", b.status}};
    if (!b.message.empty()) j["message"] = b.message;
    if (b.status == "ok") {
      j["test_rows"] = b.test_rows;
      j["accuracy"] = b.metrics.accuracy;
      j["macro_f1"] = b.metrics.macro_f1;
      j["micro_f1"] = b.metrics.micro_f1;
      json pcs = json::array();
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& pc = b.metrics.per_class[c];
        pcs.push_back({{"class", label_name(static_cast<ClassLabel>(c))}, {"precision", pc.precision},
                       {"recall", pc.recall}, {"f1", pc.f1}, {"support", pc.support}});
      }
      j["per_class"] = pcs;
      j["confusion"] = b.confusion.counts;
      j["roc"] = detail::roc_to_json(b.roc);
    }
    if (b.cv) {
      j["cv"] = {{"k", b.cv->k}, {"repeats", b.cv->repeats}, {"seed", b.cv->seed},
                 {"scores", b.cv->scores}, {"mean", b.cv->mean()}, {"stddev", b.cv->stddev()}};
    }
    blocks.push_back(j);
  }
  return {{"schema_version", kReportSchemaVersion}, {"metadata", r.metadata}, {"results", blocks}};
}

/// Reads a report written by report_to_json. ROC point lists are not stored
/// in the document (see write_roc_csv) and come back empty.
inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<std::string>() != kReportSchemaVersion) {
      throw FormatError("report: unsupported schema_version");
    }
    EvalReport r;
    r.metadata = j.at("metadata");
    for (const auto& bj : j.at("results")) {
      ResultBlock b;
      b.model = bj.at("model").get<std::string>();
      const auto mode = bj.at("features").get<std::string>();
      if (mode != "with" && mode != "without") throw FormatError("report: bad feature mode " + mode);
      b.features = mode == "with" ? FeatureMode::With : FeatureMode::Without;
      b.status = bj.at("status").get<std::string>();
      b.message = bj.value("message", std::string{});
      if (b.status == "ok") {
        b.test_rows = bj.at("test_rows").get<std::uint64_t>();
        b.metrics.accuracy = bj.at("accuracy").get<double>();
        b.metrics.macro_f1 = bj.at("macro_f1").get<double>();
        b.metrics.micro_f1 = bj.at("micro_f1").get<double>();
        const auto& pcs = bj.at("per_class");
        if (pcs.size() != kNumClasses) throw FormatError("report: per_class needs 5 entries");
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          auto& pc = b.metrics.per_class[c];
          pc.precision = pcs[c].at("precision").get<double>();
          pc.recall = pcs[c].at("recall").get<double>();
          pc.f1 = pcs[c].at("f1").get<double>();
          pc.support = pcs[c].at("support").get<std::uint64_t>();
        }
        b.confusion.counts = bj.at("confusion").get<decltype(b.confusion.counts)>();
        const auto& roc = bj.at("roc");
        b.roc.macro_auc = roc.at("macro_auc").get<double>();
        b.roc.defined_classes = roc.at("defined_classes").get<std::size_t>();
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          const auto& rj = roc.at("per_class").at(c);
          auto& rc = b.roc.per_class[c];
          rc.defined = rj.at("defined").get<bool>();
          rc.positives = rj.at("positives").get<std::uint64_t>();
          rc.negatives = rj.at("negatives").get<std::uint64_t>();
          rc.auc = rj.at("auc").is_null() ? 0.0 : rj.at("auc").get<double>();
        }
      }
      if (bj.contains("cv")) {
        const auto& cj = bj.at("cv");
        CvResult cv;
        cv.k = cj.at("k").get<std::size_t>();
        cv.repeats = cj.at("repeats").get<std::size_t>();
        cv.seed = cj.at("seed").get<std::uint64_t>();
        cv.scores = cj.at("scores").get<std::vector<double>>();
        b.cv = std::move(cv);
      }
      r.results.push_back(std::move(b));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

/// Headered CSV: model,features,class,threshold,fpr,tpr. One block per class per model.
inline void write_roc_csv(std::ostream& out, const EvalReport& r) {
  out << "model,features,class,threshold,fpr,tpr\n";
  char buf[128];
  for (const auto& b : r.results) {
    if (b.status != "ok") continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      for (const auto& p : b.roc.per_class[c].points) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", p.threshold, p.fpr, p.tpr);
        out << b.model << ',' << feature_mode_name(b.features) << ','
            << label_name(static_cast<ClassLabel>(c)) << ',' << buf << '\n';
      }
    }
  }
}

/// Headered CSV: model,features,true_class,<one count column per predicted class>.
inline void write_confusion_csv(std::ostream& out, const EvalReport& r) {
  out << "model,features,true_class";
  for (auto l : kAllLabels) out << ",pred_" << label_name(l);
  out << '\n';
  for (const auto& b : r.results) {
    if (b.status != "ok") continue;
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      out << b.model << ',' << feature_mode_name(b.features) << ',' << label_name(static_cast<ClassLabel>(t));
      for (auto v : b.confusion.counts[t]) out << ',' << v;
      out << '\n';
    }
  }
}

}  // namespace canids
