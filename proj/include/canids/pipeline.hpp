#pragma once

// Preprocessing: cleaning, calendar expansion, per-ID inter-arrival feature,
// SMOTE, standard scaling, label encoding, stratified split and matrix assembly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "canids/clock.hpp"
#include "canids/error.hpp"
#include "canids/frame.hpp"
#include "canids/matrix.hpp"
#include "canids/rng.hpp"

namespace canids {

/// at_freq_sec value for the first sighting of a CAN ID.
inline constexpr double kAtFreqSentinel = 10.0;

// ---- cleaning ---------------------------------------------------------------

struct CleanReport {
  std::size_t removed = 0;
  std::vector<std::string> warnings;
};

template <class T>
struct Cleaned {
  std::vector<T> frames;
  CleanReport report;
};

/// Drops frames that violate the CanFrame invariants.
inline Cleaned<CanFrame> clean(std::span<const CanFrame> frames) {
  Cleaned<CanFrame> out;
  out.frames.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.valid()) out.frames.push_back(f);
    else ++out.report.removed;
  }
  if (!frames.empty() && out.frames.empty()) out.report.warnings.push_back("all rows were defective");
  return out;
}

/// Decodes raw attack-CSV records, dropping those with null/empty mandatory
/// fields (timestamp, ID, DLC, the DLC data bytes, flag) or undecodable values.
inline Cleaned<CanFrame> clean(std::span<const RawRecord> records, ClassLabel attack_label) {
  Cleaned<CanFrame> out;
  for (const auto& r : records) {
    const auto& f = r.fields;
    bool missing = f.size() < 4;
    for (std::size_t i = 0; !missing && i < 3; ++i) missing = detail::trim(f[i]).empty();
    if (!missing) {
      try {
        out.frames.push_back(decode_attack_record(r, attack_label));
        continue;
      } catch (const ParseError& e) {
        out.report.warnings.push_back(e.what());
      }
    }
    ++out.report.removed;
  }
  if (!records.empty() && out.frames.empty()) out.report.warnings.push_back("all rows were defective");
  return out;
}

// ---- time columns -------------------------------------------------------------

inline std::vector<CalendarFields> derive_time_columns(std::span<const CanFrame> frames,
                                                       const LocalClock& clock = {}) {
  std::vector<CalendarFields> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(clock.fields(f.timestamp));
  return out;
}

/// Seconds since the previous frame with the same CAN ID; kAtFreqSentinel on first sight.
inline std::vector<double> attack_frequency_seconds(std::span<const CanFrame> frames) {
  std::array<std::int64_t, kMaxCanId + 1> last;
  last.fill(-1);
  std::vector<double> out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (i > 0 && f.timestamp < frames[i - 1].timestamp) {
      throw DataError("attack_frequency_seconds: frames not sorted at index " + std::to_string(i));
    }
    if (f.can_id > kMaxCanId) throw DataError("attack_frequency_seconds: CAN ID above 0x7FF");
    auto& prev = last[f.can_id];
    out[i] = prev < 0 ? kAtFreqSentinel : static_cast<double>(f.timestamp.micros() - prev) / 1e6;
    prev = f.timestamp.micros();
  }
  return out;
}

// ---- feature rows -------------------------------------------------------------

inline constexpr std::size_t kBaseFeatureCount = 10;
inline constexpr std::size_t kFullFeatureCount = 12;

/// Column order of the full feature vector; the first ten are the frame-only columns.
inline const std::array<std::string, kFullFeatureCount>& feature_columns() {
  static const std::array<std::string, kFullFeatureCount> cols{
      "can_id", "dlc",   "data0", "data1", "data2",       "data3",
      "data4",  "data5", "data6", "data7", "at_freq_sec", "hour"};
  return cols;
}

struct FeatureRow {
  double can_id = 0;
  double dlc = 0;
  std::array<double, kMaxDlc> data{};
  std::uint8_t data_mask = 0;  // bit i set when data[i] was imputed
  double at_freq_sec = kAtFreqSentinel;
  double hour = 0;
  int label = 0;

  std::array<double, kFullFeatureCount> values() const {
    std::array<double, kFullFeatureCount> v{};
    v[0] = can_id;
    v[1] = dlc;
    for (std::size_t i = 0; i < kMaxDlc; ++i) v[2 + i] = data[i];
    v[10] = at_freq_sec;
    v[11] = hour;
    return v;
  }
};

inline FeatureRow make_feature_row(const CanFrame& f, double at_freq_sec, int hour) {
  FeatureRow r;
  r.can_id = f.can_id;
  r.dlc = f.dlc;
  for (std::size_t i = 0; i < kMaxDlc; ++i) {
    if (i < f.dlc) r.data[i] = f.data[i];
    else r.data_mask |= static_cast<std::uint8_t>(1u << i);
  }
  r.at_freq_sec = at_freq_sec;
  r.hour = hour;
  r.label = ordinal(f.label);
  return r;
}

/// Feature rows for a timestamp-sorted frame stream.
inline std::vector<FeatureRow> extract_features(std::span<const CanFrame> frames,
                                                const LocalClock& clock = {}) {
  const auto freq = attack_frequency_seconds(frames);
  std::vector<FeatureRow> rows;
  rows.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    rows.push_back(make_feature_row(frames[i], freq[i], clock.hour(frames[i].timestamp)));
  }
  return rows;
}

/// Numeric features plus ordinal class targets.
struct Dataset {
  Matrix X;
  std::vector<int> y;
  std::vector<std::string> column_names;
  bool time_features_enabled = true;

  std::size_t size() const { return y.size(); }

  std::array<std::size_t, kNumClasses> class_counts() const {
    std::array<std::size_t, kNumClasses> c{};
    for (int v : y) ++c.at(static_cast<std::size_t>(v));
    return c;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.X = X.select_rows(idx);
    d.y.reserve(idx.size());
    for (auto i : idx) d.y.push_back(y[i]);
    d.column_names = column_names;
    d.time_features_enabled = time_features_enabled;
    return d;
  }
};

/// 12 columns with time features, 10 without. Calendar fields other than
/// `hour` never enter the matrix.
inline Dataset assemble_matrix(std::span<const FeatureRow> rows, bool time_features) {
  const std::size_t ncol = time_features ? kFullFeatureCount : kBaseFeatureCount;
  Dataset d;
  d.time_features_enabled = time_features;
  d.column_names.assign(feature_columns().begin(), feature_columns().begin() + ncol);
  d.X = Matrix(rows.size(), ncol);
  d.y.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto v = rows[r].values();
    std::copy(v.begin(), v.begin() + ncol, d.X.row(r).begin());
    d.y.push_back(rows[r].label);
  }
  return d;
}

inline void write_matrix_csv(std::ostream& out, const Dataset& d) {
  for (const auto& c : d.column_names) out << c << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.X.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << label_name(label_from_ordinal(d.y[r])) << '\n';
  }
}

// ---- SMOTE ------------------------------------------------------------------------

struct SmoteResult {
  Dataset data;
  std::size_t synthesized = 0;
  std::vector<std::string> warnings;
};

/// Raises every class below `target` rows to `target` by interpolating between
/// a class member and one of its k nearest same-class neighbours (Euclidean).
/// Synthetic rows are appended after the originals; existing rows are untouched.
inline SmoteResult smote_oversample(const Dataset& in, std::size_t k, std::size_t target,
                                    std::uint64_t seed) {
  if (k < 1) throw DataError("smote: k must be >= 1");
  SmoteResult out{in, 0, {}};
  Rng rng(seed);
  const auto counts = in.class_counts();
  const std::size_t dim = in.X.cols();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0 || counts[c] >= target) continue;
    if (counts[c] < 2) {
      throw DataError("smote: class " + std::string(label_name(static_cast<ClassLabel>(c))) +
                      " has fewer than 2 samples");
    }
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in.y[i] == static_cast<int>(c)) members.push_back(i);
    }
    std::size_t kk = k;
    if (kk > members.size() - 1) {
      kk = members.size() - 1;
      out.warnings.push_back("smote: k clamped to " + std::to_string(kk) + " for class " +
                             std::string(label_name(static_cast<ClassLabel>(c))));
    }
    // Neighbour lists are computed lazily per base row.
    std::vector<std::vector<std::size_t>> nn(members.size());
    auto neighbours = [&](std::size_t m) -> const std::vector<std::size_t>& {
      auto& list = nn[m];
      if (!list.empty()) return list;
      std::vector<std::pair<double, std::size_t>> d;
      d.reserve(members.size() - 1);
      auto a = in.X.row(members[m]);
      for (std::size_t o = 0; o < members.size(); ++o) {
        if (o == m) continue;
        auto b = in.X.row(members[o]);
        double s = 0;
        for (std::size_t j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        d.emplace_back(s, o);
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
      for (std::size_t i = 0; i < kk; ++i) list.push_back(d[i].second);
      return list;
    };
    std::vector<double> row(dim);
    for (std::size_t n = counts[c]; n < target; ++n) {
      const std::size_t m = rng.below(members.size());
      const auto& list = neighbours(m);
      const std::size_t o = list[rng.below(list.size())];
      const double u = rng.uniform();
      auto a = in.X.row(members[m]);
      auto b = in.X.row(members[o]);
      for (std::size_t j = 0; j < dim; ++j) row[j] = a[j] + u * (b[j] - a[j]);
      out.data.X.append_row(row);
      out.data.y.push_back(static_cast<int>(c));
      ++out.synthesized;
    }
  }
  return out;
}

// ---- scaling ----------------------------------------------------------------------

/// Per-column standardization parameters (population standard deviation).
struct ScalerParams {
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> stddev;

  bool is_constant(std::size_t j) const { return stddev[j] == 0.0; }
};

inline ScalerParams fit_scaler(const Dataset& train) {
  if (train.size() == 0) throw DataError("fit_scaler: empty dataset");
  const std::size_t n = train.X.rows(), d = train.X.cols();
  ScalerParams p;
  p.columns = train.column_names;
  p.mean.assign(d, 0.0);
  p.stddev.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += train.X(r, j);
  }
  for (auto& m : p.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = train.X(r, j) - p.mean[j];
      p.stddev[j] += e * e;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    p.stddev[j] = std::sqrt(p.stddev[j] / static_cast<double>(n));
    // A column whose values are all equal can still leave rounding residue.
    bool constant = true;
    for (std::size_t r = 1; r < n && constant; ++r) constant = train.X(r, j) == train.X(0, j);
    if (constant) p.stddev[j] = 0.0;
  }
  return p;
}

inline void apply_scaler_inplace(const ScalerParams& p, std::span<double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] = p.is_constant(j) ? 0.0 : (row[j] - p.mean[j]) / p.stddev[j];
  }
}

inline Dataset apply_scaler(const ScalerParams& p, Dataset d) {
  if (d.X.cols() != p.mean.size()) throw DataError("apply_scaler: column count mismatch");
  for (std::size_t r = 0; r < d.X.rows(); ++r) apply_scaler_inplace(p, d.X.row(r));
  return d;
}

inline nlohmann::json scaler_to_json(const ScalerParams& p) {
  return {{"columns", p.columns}, {"mean", p.mean}, {"stddev", p.stddev}};
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams p;
  try {
    p.columns = j.at("columns").get<std::vector<std::string>>();
    p.mean = j.at("mean").get<std::vector<double>>();
    p.stddev = j.at("stddev").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scaler: ") + e.what());
  }
  if (p.mean.size() != p.columns.size() || p.stddev.size() != p.columns.size()) {
    throw FormatError("scaler: inconsistent lengths");
  }
  return p;
}

// ---- label encoding ------------------------------------------------------------------

enum class EncoderMode { Ordinal, OneHot };

inline int encode_ordinal(ClassLabel l) { return ordinal(l); }
inline ClassLabel decode_ordinal(int o) { return label_from_ordinal(o); }

inline std::array<double, kNumClasses> encode_one_hot(ClassLabel l) {
  std::array<double, kNumClasses> v{};
  v[static_cast<std::size_t>(ordinal(l))] = 1.0;
  return v;
}

inline ClassLabel decode_one_hot(std::span<const double> v) {
  if (v.size() != kNumClasses) throw DataError("one-hot vector must have 5 entries");
  std::size_t hot = kNumClasses;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (v[i] == 1.0) {
      if (hot != kNumClasses) throw DataError("one-hot vector has more than one 1");
      hot = i;
    } else if (v[i] != 0.0) {
      throw DataError("one-hot vector entries must be 0 or 1");
    }
  }
  if (hot == kNumClasses) throw DataError("one-hot vector has no 1");
  return static_cast<ClassLabel>(hot);
}

/// Targets in the requested encoding: n x 1 ordinals or n x 5 indicators.
inline Matrix encode_labels(std::span<const int> y, EncoderMode mode) {
  if (mode == EncoderMode::Ordinal) {
    Matrix m(y.size(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) m(i, 0) = encode_ordinal(label_from_ordinal(y[i]));
    return m;
  }
  Matrix m(y.size(), kNumClasses);
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto v = encode_one_hot(label_from_ordinal(y[i]));
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

// ---- stratified split ------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified split. Per-class test counts are apportioned by largest remainder
/// so the total is round(n * test_fraction). Both index lists are ascending.
inline SplitIndices split_train_test(std::span<const int> y, double test_fraction,
                                     std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError("split: test_fraction must be in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class.at(static_cast<std::size_t>(y[i])).push_back(i);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (by_class[c].size() == 1) {
      throw DataError("split: class " + std::string(label_name(static_cast<ClassLabel>(c))) +
                      " has fewer than 2 rows");
    }
  }
  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(y.size()) * test_fraction));
  std::array<std::size_t, kNumClasses> take{};
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = static_cast<double>(by_class[c].size()) * test_fraction;
    take[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += take[c];
    if (!by_class[c].empty()) rem.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < rem.size(); ++i, ++assigned) ++take[rem[i].second];

  Rng rng(seed);
  SplitIndices out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx);
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace canids
