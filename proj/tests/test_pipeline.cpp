#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "canids/pipeline.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace canids;

namespace {

Dataset dataset_of(const std::vector<std::vector<double>>& rows, std::vector<int> y) {
  Dataset d;
  d.X = fixture::matrix_of(rows);
  d.y = std::move(y);
  for (std::size_t j = 0; j < d.X.cols(); ++j) d.column_names.push_back("c" + std::to_string(j));
  return d;
}

CanFrame frame_at(std::uint32_t id, double seconds) {
  CanFrame f;
  f.can_id = id;
  f.timestamp = Timestamp::from_seconds(seconds);
  return f;
}

}  // namespace

TEST(Clean, NoDefectsIsIdentity) {
  Rng rng(1);
  const auto frames = fixture::random_stream(rng, 200, 10);
  const auto out = clean(frames);
  EXPECT_EQ(out.frames, frames);
  EXPECT_EQ(out.report.removed, 0u);
  EXPECT_TRUE(out.report.warnings.empty());
}

TEST(Clean, DropsRecordsWithMissingDlc) {
  std::vector<RawRecord> recs;
  for (int i = 0; i < 100; ++i) {
    const bool broken = i == 5 || i == 50 || i == 99;
    const std::string dlc = broken ? "" : "1";
    recs.push_back(tokenize_attack_csv(std::to_string(i) + ".0,0123," + dlc + ",ab,R",
                                       static_cast<std::size_t>(i + 1)));
  }
  const auto out = clean(recs, ClassLabel::DoS);
  EXPECT_EQ(out.frames.size(), 97u);
  EXPECT_EQ(out.report.removed, 3u);
}

TEST(Clean, AllDefectiveWarns) {
  std::vector<CanFrame> frames(4);
  for (auto& f : frames) f.dlc = 9;
  const auto out = clean(frames);
  EXPECT_TRUE(out.frames.empty());
  EXPECT_EQ(out.report.removed, 4u);
  EXPECT_FALSE(out.report.warnings.empty());

  std::vector<RawRecord> recs{tokenize_attack_csv(",,,"), tokenize_attack_csv("1.0")};
  const auto raw = clean(recs, ClassLabel::DoS);
  EXPECT_TRUE(raw.frames.empty());
  EXPECT_FALSE(raw.report.warnings.empty());
}

TEST(TimeColumns, EpochZero) {
  const auto t = derive_time_columns(std::vector<CanFrame>{frame_at(0, 0.0)});
  EXPECT_EQ(t[0], (CalendarFields{1970, 1, 1, 0, 0, 0, 0}));
}

TEST(TimeColumns, CarHackingTimestamp) {
  CanFrame f;
  f.timestamp = *Timestamp::parse("1478198376.389427");
  const auto t = derive_time_columns(std::vector<CanFrame>{f});
  EXPECT_EQ(t[0], (CalendarFields{2016, 11, 3, 18, 39, 36, 389}));
}

TEST(TimeColumns, OffsetShiftsHour) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto t = Timestamp::from_micros(static_cast<std::int64_t>(rng.below(4'000'000'000'000'000ULL)));
    const auto later = Timestamp::from_micros(t.micros() + 3'600'000'000LL);
    const LocalClock utc{};
    EXPECT_EQ(utc.hour(later), (utc.hour(t) + 1) % 24);
    const LocalClock plus_two{7200};
    EXPECT_EQ(plus_two.hour(t), (utc.hour(t) + 2) % 24);
    EXPECT_EQ(plus_two.fields(t).hour, plus_two.hour(t));
  }
  const LocalClock minus_five{-5 * 3600};
  EXPECT_EQ(minus_five.hour(Timestamp::from_micros(0)), 19);
  EXPECT_EQ(minus_five.fields(Timestamp::from_micros(0)).year, 1969);
}

TEST(AtFreq, DosGaps) {
  const std::vector<CanFrame> f{frame_at(0, 0.0), frame_at(0, 0.0003), frame_at(0, 0.0006)};
  const auto v = attack_frequency_seconds(f);
  EXPECT_EQ(v[0], 10.0);
  EXPECT_DOUBLE_EQ(v[1], 0.0003);
  EXPECT_DOUBLE_EQ(v[2], 0.0003);
}

TEST(AtFreq, SingleFrameGetsSentinel) {
  EXPECT_EQ(attack_frequency_seconds(std::vector<CanFrame>{frame_at(7, 1.0)}), std::vector<double>{kAtFreqSentinel});
}

TEST(AtFreq, ChainsPerId) {
  const std::vector<CanFrame> f{frame_at(0xA, 0), frame_at(0xB, 1), frame_at(0xA, 2)};
  EXPECT_EQ(attack_frequency_seconds(f), (std::vector<double>{10.0, 10.0, 2.0}));
}

TEST(AtFreq, RejectsUnsorted) {
  const std::vector<CanFrame> f{frame_at(1, 2.0), frame_at(1, 1.0)};
  EXPECT_THROW(attack_frequency_seconds(f), DataError);
}

TEST(AtFreq, MatchesBackwardScan) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto frames = fixture::random_stream(rng, 300, 1 + rng.below(40), 2000);
    EXPECT_EQ(attack_frequency_seconds(frames), oracle::at_freq(frames));
  }
}

TEST(FeatureRows, ImputedBytesAreMasked) {
  CanFrame f;
  f.can_id = 0x2c0;
  f.dlc = 2;
  f.data[0] = 17;
  f.data[1] = 34;
  const auto r = make_feature_row(f, 0.5, 13);
  EXPECT_EQ(r.data_mask, 0b11111100);
  const auto v = r.values();
  EXPECT_EQ(v[0], 704);
  EXPECT_EQ(v[1], 2);
  EXPECT_EQ(v[2], 17);
  EXPECT_EQ(v[3], 34);
  EXPECT_EQ(v[4], 0);
  EXPECT_EQ(v[10], 0.5);
  EXPECT_EQ(v[11], 13);
}

TEST(FeatureMatrix, ColumnSetsAndSharedPrefix) {
  Rng rng(8);
  const auto frames = fixture::random_stream(rng, 500, 30);
  const auto rows = extract_features(frames, LocalClock{3600});
  const auto with = assemble_matrix(rows, true);
  const auto without = assemble_matrix(rows, false);
  ASSERT_EQ(with.X.cols(), 12u);
  ASSERT_EQ(without.X.cols(), 10u);
  EXPECT_EQ(with.column_names,
            (std::vector<std::string>{"can_id", "dlc", "data0", "data1", "data2", "data3", "data4", "data5",
                                      "data6", "data7", "at_freq_sec", "hour"}));
  EXPECT_EQ(std::vector<std::string>(with.column_names.begin(), with.column_names.begin() + 10), without.column_names);
  EXPECT_EQ(with.y, without.y);
  for (std::size_t r = 0; r < with.size(); ++r) {
    for (std::size_t j = 0; j < 10; ++j) ASSERT_EQ(with.X(r, j), without.X(r, j));
    EXPECT_GE(with.X(r, 11), 0);
    EXPECT_LE(with.X(r, 11), 23);
  }
  EXPECT_EQ(assemble_matrix(rows, true).column_names, with.column_names);
  std::size_t total = 0;
  for (auto c : with.class_counts()) total += c;
  EXPECT_EQ(total, with.size());
}

TEST(FeatureMatrix, CsvExportHasHeader) {
  const std::vector<CanFrame> f{frame_at(3, 1.0)};
  const auto d = assemble_matrix(extract_features(f), false);
  std::ostringstream out;
  write_matrix_csv(out, d);
  EXPECT_EQ(out.str(), "can_id,dlc,data0,data1,data2,data3,data4,data5,data6,data7,label\n3,0,0,0,0,0,0,0,0,0,Normal\n");
}

TEST(Smote, BalancedInputUnchanged) {
  const auto b = fixture::blobs(10, 5, 3, 4.0, 1);
  Dataset d{b.X, b.y, {"a", "b", "c"}, true};
  const auto out = smote_oversample(d, 5, 10, 1);
  EXPECT_EQ(out.synthesized, 0u);
  EXPECT_EQ(out.data.X.data(), d.X.data());
  EXPECT_EQ(out.data.y, d.y);
}

TEST(Smote, TwoPointClassLandsOnSegment) {
  const auto d = dataset_of({{0, 0}, {1, 1}, {2, 2}, {3, 0}, {4, 1}}, {0, 0, 0, 1, 1});
  const auto out = smote_oversample(d, 5, 3, 9);
  ASSERT_EQ(out.synthesized, 1u);
  ASSERT_EQ(out.data.size(), 6u);
  EXPECT_EQ(out.data.y.back(), 1);
  const auto p = out.data.X.row(5);
  EXPECT_LT(oracle::distance_to_segment(p, d.X.row(3), d.X.row(4)), 1e-12);
  EXPECT_FALSE(out.warnings.empty());  // k clamped to 1
}

TEST(Smote, SyntheticPointsLieOnNeighbourSegments) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    const std::array<std::size_t, 5> sizes{60, 5, 12, 3, 20};
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t i = 0; i < sizes[c]; ++i) {
        std::vector<double> r(4);
        for (auto& v : r) v = rng.uniform(-1, 1) + static_cast<double>(c);
        rows.push_back(r);
        y.push_back(static_cast<int>(c));
      }
    }
    const auto d = dataset_of(rows, y);
    const std::size_t k = 1 + rng.below(5);
    const auto out = smote_oversample(d, k, 60, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(out.data.class_counts(), (std::array<std::size_t, 5>{60, 60, 60, 60, 60}));
    // Originals untouched and in place.
    for (std::size_t r = 0; r < d.size(); ++r) {
      ASSERT_EQ(out.data.y[r], d.y[r]);
      for (std::size_t j = 0; j < 4; ++j) ASSERT_EQ(out.data.X(r, j), d.X(r, j));
    }
    for (std::size_t r = d.size(); r < out.data.size(); ++r) {
      const int c = out.data.y[r];
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.y[i] == c) members.push_back(i);
      }
      double best = INFINITY;
      for (auto m : members) {
        for (auto o : oracle::nearest(rows, members, m, k)) {
          best = std::min(best, oracle::distance_to_segment(out.data.X.row(r), d.X.row(m), d.X.row(o)));
        }
      }
      ASSERT_LT(best, 1e-9);
    }
  }
}

TEST(Smote, Errors) {
  const auto d = dataset_of({{0}, {1}, {2}}, {0, 0, 1});
  EXPECT_THROW(smote_oversample(d, 3, 2, 1), DataError);
  EXPECT_THROW(smote_oversample(d, 0, 2, 1), DataError);
}

TEST(Scaler, TwoPointColumn) {
  const auto d = dataset_of({{0, 5}, {2, 5}}, {0, 1});
  const auto p = fit_scaler(d);
  EXPECT_EQ(p.mean[0], 1.0);
  EXPECT_EQ(p.stddev[0], 1.0);
  EXPECT_TRUE(p.is_constant(1));
  const auto s = apply_scaler(p, d);
  EXPECT_EQ(s.X(0, 0), -1.0);
  EXPECT_EQ(s.X(1, 0), 1.0);
  EXPECT_EQ(s.X(0, 1), 0.0);
  EXPECT_EQ(s.X(1, 1), 0.0);
}

TEST(Scaler, StandardizesTrainingColumns) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(300), d = 1 + rng.below(12);
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows) {
      for (std::size_t j = 0; j < d; ++j) r[j] = j == 0 ? 42.0 : rng.uniform(-1e3, 1e3) * static_cast<double>(j);
    }
    const auto ds = dataset_of(rows, std::vector<int>(n, 0));
    const auto p = fit_scaler(ds);
    const auto s = apply_scaler(p, ds);
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0, v = 0;
      for (std::size_t r = 0; r < n; ++r) m += s.X(r, j);
      m /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) v += (s.X(r, j) - m) * (s.X(r, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      EXPECT_LT(std::abs(m), 1e-9);
      if (j == 0) EXPECT_EQ(sd, 0.0);
      else EXPECT_LT(std::abs(sd - 1.0), 1e-9);
    }
  }
}

TEST(Scaler, EmptyAndMismatchedInputs) {
  Dataset empty;
  EXPECT_THROW(fit_scaler(empty), DataError);
  const auto p = fit_scaler(dataset_of({{1, 2}, {3, 4}}, {0, 0}));
  EXPECT_THROW(apply_scaler(p, dataset_of({{1}}, {0})), DataError);
}

TEST(Scaler, JsonRoundTrip) {
  const auto p = fit_scaler(dataset_of({{1, 0.1}, {3, 0.7}, {8, 0.3}}, {0, 0, 1}));
  const auto q = scaler_from_json(nlohmann::json::parse(scaler_to_json(p).dump()));
  EXPECT_EQ(q.columns, p.columns);
  EXPECT_EQ(q.mean, p.mean);
  EXPECT_EQ(q.stddev, p.stddev);
  EXPECT_THROW(scaler_from_json(nlohmann::json{{"columns", {"a"}}, {"mean", {}}, {"stddev", {}}}), FormatError);
}

TEST(Encoding, OrdinalAndOneHot) {
  EXPECT_EQ(encode_ordinal(ClassLabel::Normal), 0);
  EXPECT_EQ(encode_ordinal(ClassLabel::GearSpoof), 4);
  EXPECT_EQ(encode_one_hot(ClassLabel::DoS), (std::array<double, 5>{0, 1, 0, 0, 0}));
  for (auto l : kAllLabels) {
    EXPECT_EQ(decode_ordinal(encode_ordinal(l)), l);
    const auto v = encode_one_hot(l);
    EXPECT_EQ(decode_one_hot(v), l);
  }
  EXPECT_THROW(decode_one_hot(std::vector<double>{1, 1, 0, 0, 0}), DataError);
  EXPECT_THROW(decode_one_hot(std::vector<double>{0, 0, 0, 0, 0}), DataError);
  const auto m = encode_labels(std::vector<int>{3, 0}, EncoderMode::OneHot);
  EXPECT_EQ(m.cols(), 5u);
  EXPECT_EQ(m(0, 3), 1.0);
  EXPECT_EQ(m(1, 0), 1.0);
  EXPECT_EQ(encode_labels(std::vector<int>{3, 0}, EncoderMode::Ordinal)(0, 0), 3.0);
}

TEST(Split, StratifiedEightyTwenty) {
  std::vector<int> y;
  const std::array<int, 5> sizes{503, 211, 137, 98, 51};
  for (int c = 0; c < 5; ++c) y.insert(y.end(), static_cast<std::size_t>(sizes[static_cast<std::size_t>(c)]), c);
  const auto s = split_train_test(y, 0.2, 3);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.test.size(), 200u);
  std::array<int, 5> test_counts{};
  for (auto i : s.test) ++test_counts[static_cast<std::size_t>(y[i])];
  for (int c = 0; c < 5; ++c) {
    EXPECT_LE(std::abs(test_counts[static_cast<std::size_t>(c)] - sizes[static_cast<std::size_t>(c)] * 0.2), 1.0);
  }
  std::vector<std::size_t> all(s.train);
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, detail::all_rows(1000));
}

TEST(Split, DeterministicUnderSeed) {
  Rng rng(6);
  std::vector<int> y(700);
  for (auto& v : y) v = static_cast<int>(rng.below(5));
  const auto a = split_train_test(y, 0.3, 11);
  const auto b = split_train_test(y, 0.3, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split_train_test(y, 0.3, 12).test, a.test);
}

TEST(Split, Errors) {
  std::vector<int> y{0, 0, 0, 1, 1, 2, 2, 3, 3, 4};
  EXPECT_THROW(split_train_test(y, 0.999, 1), DataError);
  EXPECT_THROW(split_train_test(std::vector<int>{0, 0, 1, 1}, 0.0, 1), DataError);
  EXPECT_THROW(split_train_test(std::vector<int>{0, 0, 1, 1}, 1.0, 1), DataError);
}
