#pragma once

// Random inputs for the test suites. Everything is seeded.

#include <string>
#include <vector>

#include "canids/frame.hpp"
#include "canids/matrix.hpp"
#include "canids/models/model.hpp"
#include "canids/pipeline.hpp"
#include "canids/rng.hpp"

namespace fixture {

using namespace canids;

inline CanFrame random_frame(Rng& rng, Timestamp t) {
  CanFrame f;
  f.timestamp = t;
  f.can_id = static_cast<std::uint32_t>(rng.below(kMaxCanId + 1));
  f.dlc = static_cast<std::uint8_t>(rng.below(kMaxDlc + 1));
  for (std::size_t i = 0; i < f.dlc; ++i) f.data[i] = static_cast<std::uint8_t>(rng.below(256));
  f.label = static_cast<ClassLabel>(rng.below(kNumClasses));
  return f;
}

/// Sorted stream over a small ID pool so that IDs repeat. Gaps may be zero.
inline std::vector<CanFrame> random_stream(Rng& rng, std::size_t n, std::size_t ids,
                                           std::int64_t max_gap_us = 5000) {
  std::vector<std::uint32_t> pool;
  for (std::size_t i = 0; i < ids; ++i) pool.push_back(static_cast<std::uint32_t>(rng.below(kMaxCanId + 1)));
  std::int64_t t = 1478131200LL * 1'000'000 + static_cast<std::int64_t>(rng.below(86'400'000'000ULL));
  std::vector<CanFrame> out;
  for (std::size_t i = 0; i < n; ++i) {
    t += static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_gap_us) + 1));
    auto f = random_frame(rng, Timestamp::from_micros(t));
    f.can_id = pool[rng.below(pool.size())];
    out.push_back(f);
  }
  return out;
}

/// Gaussian blobs, one per class, centres `spread` apart along each axis.
struct Blobs {
  Matrix X;
  std::vector<int> y;
};

inline Blobs blobs(std::size_t per_class, std::size_t classes, std::size_t d, double spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> centre(classes, std::vector<double>(d));
  for (auto& c : centre) {
    for (auto& v : c) v = rng.uniform(-spread, spread);
  }
  Blobs b{Matrix(per_class * classes, d), {}};
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      for (std::size_t j = 0; j < d; ++j) b.X(r, j) = centre[c][j] + rng.normal();
      b.y.push_back(static_cast<int>(c));
    }
  }
  return b;
}

inline std::vector<std::vector<double>> rows_of(const Matrix& X) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < X.rows(); ++r) out.emplace_back(X.row(r).begin(), X.row(r).end());
  return out;
}

inline Matrix matrix_of(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < rows[r].size(); ++j) m(r, j) = rows[r][j];
  }
  return m;
}

inline std::vector<std::string> detector_columns(std::size_t d) {
  return {feature_columns().begin(), feature_columns().begin() + static_cast<std::ptrdiff_t>(d)};
}

/// Scaler that leaves every column unchanged.
inline ScalerParams identity_scaler(std::size_t d) {
  return {detector_columns(d), std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
}

/// Zero-weight softmax model over the detector columns: always uniform output.
inline TrainedModel uniform_model(std::size_t d) {
  return TrainedModel(ModelKind::LogReg, Hyperparams{}, LogRegModel(d), TrainingInfo{}, detector_columns(d));
}

}  // namespace fixture
