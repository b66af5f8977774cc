#pragma once

// Reference implementations used to cross-check the library. Each one is
// written the slow, obvious way and shares no code with the code under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "canids/frame.hpp"

namespace oracle {

/// Per-ID inter-arrival by scanning backwards from every frame.
inline std::vector<double> at_freq(std::span<const canids::CanFrame> frames, double sentinel = 10.0) {
  std::vector<double> out(frames.size(), sentinel);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = i; j-- > 0;) {
      if (frames[j].can_id == frames[i].can_id) {
        out[i] = static_cast<double>(frames[i].timestamp.micros() - frames[j].timestamp.micros()) / 1e6;
        break;
      }
    }
  }
  return out;
}

/// Normalized Mann-Whitney U: pairs ranked correctly plus half the ties.
inline double mann_whitney_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) ++pos;
    else ++neg;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct SampleCounts {
  std::array<std::array<std::uint64_t, 5>, 5> cm{};
  std::array<double, 5> precision{}, recall{}, f1{};
  double accuracy = 0.0;
};

/// Metrics by walking the samples once per class; 0 on a zero denominator.
inline SampleCounts count_samples(std::span<const int> truth, std::span<const int> pred) {
  SampleCounts s;
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++s.cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    correct += truth[i] == pred[i];
  }
  for (int c = 0; c < 5; ++c) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      else if (pred[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    const auto k = static_cast<std::size_t>(c);
    s.precision[k] = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall[k] = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double p = s.precision[k], r = s.recall[k];
    s.f1[k] = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  s.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  return s;
}

struct Stump {
  int feature = -1;  // -1: no split exists
  double threshold = 0.0;
  std::vector<bool> goes_left;
};

/// Best Gini stump over every (feature, midpoint) pair. Candidates are compared
/// in exact integer arithmetic (fine for n up to ~10^3); the first maximum in
/// (feature, threshold) order wins.
inline Stump exhaustive_gini_stump(const std::vector<std::vector<double>>& X, std::span<const int> y) {
  using Count = std::uint64_t;
  const std::size_t n = X.size();
  const std::size_t d = n ? X[0].size() : 0;
  Stump best;
  Count best_num = 0, best_den = 1;
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> values;
    for (const auto& row : X) values.push_back(row[j]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      const double a = values[v], b = values[v + 1];
      double thr = a + (b - a) / 2.0;
      if (!(thr < b)) thr = a;
      std::array<std::uint64_t, 5> left{}, right{};
      std::uint64_t nl = 0, nr = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (X[i][j] <= thr) ++left[static_cast<std::size_t>(y[i])], ++nl;
        else ++right[static_cast<std::size_t>(y[i])], ++nr;
      }
      // Lower weighted Gini <=> larger sum(c^2)/n_left + sum(c^2)/n_right.
      Count sl = 0, sr = 0;
      for (int c = 0; c < 5; ++c) {
        sl += static_cast<Count>(left[c]) * left[c];
        sr += static_cast<Count>(right[c]) * right[c];
      }
      const Count num = sl * nr + sr * nl;
      const Count den = static_cast<Count>(nl) * nr;
      if (best.feature < 0 || num * best_den > best_num * den) {
        best.feature = static_cast<int>(j);
        best.threshold = thr;
        best_num = num;
        best_den = den;
      }
    }
  }
  if (best.feature >= 0) {
    for (const auto& row : X) best.goes_left.push_back(row[static_cast<std::size_t>(best.feature)] <= best.threshold);
  }
  return best;
}

/// Central difference of f along coordinate i of params (restored afterwards).
inline double central_difference(const std::function<double()>& f, std::vector<double>& params, std::size_t i,
                                 double h) {
  const double keep = params[i];
  params[i] = keep + h;
  const double up = f();
  params[i] = keep - h;
  const double down = f();
  params[i] = keep;
  return (up - down) / (2.0 * h);
}

/// |a - b| relative to the larger magnitude; components below `floor` in both
/// are compared against `floor` instead.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Euclidean distance from p to the segment [a, b].
inline double distance_to_segment(std::span<const double> p, std::span<const double> a, std::span<const double> b) {
  double ab2 = 0.0, dot = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    ab2 += (b[j] - a[j]) * (b[j] - a[j]);
    dot += (p[j] - a[j]) * (b[j] - a[j]);
  }
  const double t = ab2 > 0.0 ? std::clamp(dot / ab2, 0.0, 1.0) : 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double q = a[j] + t * (b[j] - a[j]);
    s += (p[j] - q) * (p[j] - q);
  }
  return std::sqrt(s);
}

/// Indices of the k nearest rows to `of` among `members` (itself excluded), by full sort.
inline std::vector<std::size_t> nearest(const std::vector<std::vector<double>>& rows, std::span<const std::size_t> members,
                                        std::size_t of, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (auto m : members) {
    if (m == of) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < rows[of].size(); ++j) s += (rows[of][j] - rows[m][j]) * (rows[of][j] - rows[m][j]);
    d.emplace_back(s, m);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

}  // namespace oracle
