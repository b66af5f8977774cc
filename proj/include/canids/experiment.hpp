#pragma once

// Train/evaluate plumbing shared by the command-line tool and the test suites.
// Preparation order inside every training split: optional SMOTE on the raw
// training rows, scaler fitted on those rows, model fit on the scaled rows.

#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "canids/metrics.hpp"
#include "canids/models/model.hpp"
#include "canids/pipeline.hpp"

namespace canids {

struct PreparedData {
  std::vector<FeatureRow> rows;
  Dataset with_time;
  Dataset without_time;

  const Dataset& get(FeatureMode m) const { return m == FeatureMode::With ? with_time : without_time; }
};

inline PreparedData prepare_data(std::span<const CanFrame> frames, const LocalClock& clock) {
  PreparedData p;
  p.rows = extract_features(frames, clock);
  p.with_time = assemble_matrix(p.rows, true);
  p.without_time = assemble_matrix(p.rows, false);
  return p;
}

struct PrepOptions {
  bool smote = false;
  std::size_t smote_k = 5;
  std::uint64_t seed = 1;
};

struct FittedPipeline {
  TrainedModel model;
  ScalerParams scaler;
  std::size_t synthesized = 0;
};

/// Fits scaler and model on `train` rows of `data` (rows in stream order).
/// Sequence models train on windows over the whole stream and skip SMOTE,
/// whose synthetic rows have no place in it.
inline FittedPipeline fit_pipeline(ModelKind kind, const Hyperparams& hp, const Dataset& data,
                                   std::span<const std::size_t> train, const PrepOptions& opt = {}) {
  if (train.empty()) throw DataError("no training rows");
  if (kind == ModelKind::Lstm) {
    auto scaler = fit_scaler(data.subset(train));
    const Dataset scaled = apply_scaler(scaler, data);
    auto model = train_model(kind, hp, scaled.X, scaled.y, train, data.column_names);
    return {std::move(model), std::move(scaler), 0};
  }
  Dataset tr = data.subset(train);
  std::size_t synthesized = 0;
  if (opt.smote) {
    const auto counts = tr.class_counts();
    const auto target = *std::max_element(counts.begin(), counts.end());
    auto s = smote_oversample(tr, opt.smote_k, target, opt.seed);
    synthesized = s.synthesized;
    tr = std::move(s.data);
  }
  auto scaler = fit_scaler(tr);
  tr = apply_scaler(scaler, std::move(tr));
  const auto rows = detail::all_rows(tr.size());
  auto model = train_model(kind, hp, tr.X, tr.y, rows, data.column_names);
  return {std::move(model), std::move(scaler), synthesized};
}

/// Probability rows for `rows` of `data`, in the order given.
inline Matrix score_rows(const FittedPipeline& fp, const Dataset& data, std::span<const std::size_t> rows) {
  if (fp.model.sequence_length() > 1) {
    const Dataset scaled = apply_scaler(fp.scaler, data);
    return predict_proba(fp.model, scaled.X, rows);
  }
  const Dataset scaled = apply_scaler(fp.scaler, data.subset(rows));
  return predict_proba(fp.model, scaled.X);
}

/// One document holding the model and the scaler it was trained behind.
inline void save_pipeline(const FittedPipeline& fp, const std::string& path) {
  auto j = model_to_json(fp.model);
  j["scaler"] = scaler_to_json(fp.scaler);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

inline FittedPipeline load_pipeline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file " + path + " is corrupt: " + e.what());
  }
  if (!j.is_object() || !j.contains("scaler")) throw FormatError(path + ": no scaler section");
  auto model = model_from_json(j);
  auto scaler = scaler_from_json(j.at("scaler"));
  if (scaler.columns != model.columns()) throw FormatError(path + ": scaler and model columns differ");
  return {std::move(model), std::move(scaler), 0};
}

inline std::vector<int> gather(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

/// Stratified random subset of `rows` with about `limit` entries (all rows when
/// limit is 0 or not smaller). Output is ascending.
inline std::vector<std::size_t> stratified_subsample(std::span<const int> y, std::span<const std::size_t> rows,
                                                     std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> out(rows.begin(), rows.end());
  if (limit == 0 || limit >= rows.size()) return out;
  const auto labels = gather(y, rows);
  const auto s = split_train_test(labels, static_cast<double>(limit) / static_cast<double>(rows.size()), seed);
  out.clear();
  for (auto i : s.test) out.push_back(rows[i]);
  std::sort(out.begin(), out.end());
  return out;
}

inline double holdout_accuracy(const FittedPipeline& fp, const Dataset& data, std::span<const std::size_t> test) {
  const auto truth = gather(data.y, test);
  return accuracy(truth, predict_from_proba(score_rows(fp, data, test)));
}

/// Repeated stratified K-fold over `rows` of `data`; the whole preparation is
/// refitted inside every fold.
inline CvResult cross_validate(ModelKind kind, const Hyperparams& hp, const Dataset& data,
                               std::span<const std::size_t> rows, std::size_t k, std::size_t repeats,
                               std::uint64_t seed, const PrepOptions& opt = {}) {
  const auto labels = gather(data.y, rows);
  CvResult cv{k, repeats, seed, {}};
  for (const auto& split : repeated_stratified_kfold(labels, k, repeats, seed)) {
    std::vector<std::size_t> train, test;
    for (auto i : split.train) train.push_back(rows[i]);
    for (auto i : split.test) test.push_back(rows[i]);
    const auto fp = fit_pipeline(kind, hp, data, train, opt);
    cv.scores.push_back(holdout_accuracy(fp, data, test));
  }
  return cv;
}

inline CvResult cross_validate(ModelKind kind, const Hyperparams& hp, const Dataset& data, std::size_t k,
                               std::size_t repeats, std::uint64_t seed, const PrepOptions& opt = {}) {
  const auto rows = detail::all_rows(data.size());
  return cross_validate(kind, hp, data, rows, k, repeats, seed, opt);
}

struct EvalOptions {
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
  std::size_t max_train_rows = 0;  // 0 keeps every row
  std::size_t max_test_rows = 0;
  std::size_t cv_k = 3;
  std::size_t cv_repeats = 0;  // 0 disables cross-validation
  std::size_t cv_rows = 0;     // 0 uses the training rows
  PrepOptions prep;
};

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline HoldoutSplit make_holdout(const Dataset& data, const EvalOptions& opt) {
  auto s = split_train_test(data.y, opt.test_fraction, opt.seed);
  return {stratified_subsample(data.y, s.train, opt.max_train_rows, opt.seed + 1),
          stratified_subsample(data.y, s.test, opt.max_test_rows, opt.seed + 2)};
}

struct ModelRun {
  std::optional<FittedPipeline> fitted;
  ResultBlock block;
};

/// Fits on the training rows, scores the test rows and optionally cross-validates.
/// Training failures are reported in the block rather than thrown.
inline ModelRun evaluate_model(ModelKind kind, const Hyperparams& hp, const Dataset& data,
                               const HoldoutSplit& split, FeatureMode mode, const EvalOptions& opt) {
  ModelRun run;
  const std::string name(model_name(kind));
  try {
    auto fp = fit_pipeline(kind, hp, data, split.train, opt.prep);
    const auto proba = score_rows(fp, data, split.test);
    const auto truth = gather(data.y, split.test);
    run.block = make_result(name, mode, truth, proba, predict_from_proba(proba));
    if (opt.cv_repeats > 0) {
      const auto cv_rows = stratified_subsample(data.y, split.train, opt.cv_rows, opt.seed + 3);
      run.block.cv = cross_validate(kind, hp, data, cv_rows, opt.cv_k, opt.cv_repeats, opt.seed, opt.prep);
    }
    run.fitted = std::move(fp);
  } catch (const TrainingError& e) {
    run.block = ResultBlock{};
    run.block.model = name;
    run.block.features = mode;
    run.block.status = "failed";
    run.block.message = e.what();
  }
  return run;
}

}  // namespace canids
