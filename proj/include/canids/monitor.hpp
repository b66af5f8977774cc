#pragma once

// Online detector: one state per frame stream, strictly sequential.

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "canids/clock.hpp"
#include "canids/frame.hpp"
#include "canids/models/model.hpp"
#include "canids/pipeline.hpp"

namespace canids {

struct Alert {
  std::uint64_t sequence = 0;
  CanFrame frame;
  ClassLabel predicted = ClassLabel::Normal;
  Proba probabilities{};
  double at_freq_sec = kAtFreqSentinel;
};

inline nlohmann::json alert_to_json(const Alert& a) {
  std::string data;
  for (auto b : a.frame.payload()) data += format_hex_byte(b);
  return {{"seq", a.sequence},
          {"timestamp", a.frame.timestamp.format()},
          {"can_id", a.frame.can_id},
          {"dlc", a.frame.dlc},
          {"data", data},
          {"predicted", label_name(a.predicted)},
          {"probabilities", a.probabilities},
          {"at_freq_sec", a.at_freq_sec}};
}

class DetectorState {
 public:
  static constexpr std::size_t kMaxTrackedIds = kMaxCanId + 1;

  DetectorState(TrainedModel model, ScalerParams scaler, LocalClock clock = {}, double threshold = 0.5)
      : model_(std::move(model)), scaler_(std::move(scaler)), clock_(clock), threshold_(threshold) {
    if (!(threshold_ > 0.0 && threshold_ <= 1.0)) throw DataError("alert threshold must be in (0, 1]");
    if (scaler_.columns != model_.columns()) throw DataError("scaler columns do not match the model");
    const auto d = model_.n_features();
    if (d != kFullFeatureCount && d != kBaseFeatureCount) {
      throw DataError("model expects " + std::to_string(d) + " features; detector supports 10 or 12");
    }
    const auto& cols = feature_columns();
    for (std::size_t j = 0; j < d; ++j) {
      if (model_.columns()[j] != cols[j]) throw DataError("model column '" + model_.columns()[j] + "' is not a detector feature");
    }
  }

  /// Returns an alert when the frame is classified as an attack with
  /// probability >= threshold. Frames older than the last accepted one are
  /// counted and dropped without touching any other state.
  std::optional<Alert> process_frame(const CanFrame& f) {
    if (last_clock_ && f.timestamp < *last_clock_) {
      ++dropped_late_;
      last_late_ = true;
      return std::nullopt;
    }
    last_late_ = false;
    if (!f.valid()) throw DataError("invalid frame");
    ++accepted_;
    last_clock_ = f.timestamp;

    double at_freq = kAtFreqSentinel;
    auto [it, inserted] = last_seen_.try_emplace(f.can_id, f.timestamp);
    if (!inserted) {
      at_freq = static_cast<double>(f.timestamp.micros() - it->second.micros()) / 1e6;
      it->second = f.timestamp;
    }
    last_row_ = make_feature_row(f, at_freq, clock_.hour(f.timestamp));
    const auto full = last_row_.values();
    std::vector<double> x(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(model_.n_features()));
    apply_scaler_inplace(scaler_, x);

    Proba p;
    if (auto* lstm = std::get_if<LstmModel>(&model_.impl())) {
      window_.push_back(std::move(x));
      if (window_.size() > lstm->sequence_length) window_.pop_front();
      std::vector<const double*> steps(lstm->sequence_length - window_.size(), nullptr);
      for (const auto& row : window_) steps.push_back(row.data());
      p = lstm->predict_window(steps);
    } else {
      p = model_.predict_vector(x);
    }
    last_proba_ = p;
    const int cls = detail::argmax(p);
    if (cls == ordinal(ClassLabel::Normal) || p[static_cast<std::size_t>(cls)] < threshold_) return std::nullopt;
    Alert a{++sequence_, f, label_from_ordinal(cls), p, at_freq};
    ++alerts_[static_cast<std::size_t>(cls)];
    return a;
  }

  std::uint64_t accepted() const { return accepted_; }
  std::uint64_t dropped_late() const { return dropped_late_; }
  bool last_was_late() const { return last_late_; }
  const std::array<std::uint64_t, kNumClasses>& alerts() const { return alerts_; }
  std::size_t tracked_ids() const { return last_seen_.size(); }
  std::optional<Timestamp> clock() const { return last_clock_; }
  std::optional<Timestamp> last_seen(std::uint32_t id) const {
    auto it = last_seen_.find(id);
    if (it == last_seen_.end()) return std::nullopt;
    return it->second;
  }
  /// Unscaled features of the last accepted frame.
  const FeatureRow& last_features() const { return last_row_; }
  const Proba& last_probabilities() const { return last_proba_; }
  double threshold() const { return threshold_; }
  const TrainedModel& model() const { return model_; }

 private:
  TrainedModel model_;
  ScalerParams scaler_;
  LocalClock clock_;
  double threshold_;
  std::unordered_map<std::uint32_t, Timestamp> last_seen_;
  std::optional<Timestamp> last_clock_;
  std::deque<std::vector<double>> window_;
  FeatureRow last_row_;
  Proba last_proba_{};
  std::uint64_t sequence_ = 0;
  std::uint64_t accepted_ = 0;
  std::uint64_t dropped_late_ = 0;
  bool last_late_ = false;
  std::array<std::uint64_t, kNumClasses> alerts_{};
};

struct StreamSummary {
  std::uint64_t frames = 0;  // accepted + dropped_late
  std::uint64_t accepted = 0;
  std::uint64_t dropped_late = 0;
  std::uint64_t malformed = 0;  // unparseable lines, skipped
  std::array<std::uint64_t, kNumClasses> alerts{};
  double seconds = 0.0;
  double frames_per_second = 0.0;

  std::uint64_t total_alerts() const {
    std::uint64_t s = 0;
    for (auto v : alerts) s += v;
    return s;
  }
};

inline nlohmann::json summary_to_json(const StreamSummary& s) {
  nlohmann::json alerts = nlohmann::json::object();
  for (auto l : kAllLabels) {
    if (l != ClassLabel::Normal) alerts[std::string(label_name(l))] = s.alerts[static_cast<std::size_t>(ordinal(l))];
  }
  return {{"summary", {{"frames", s.frames}, {"accepted", s.accepted}, {"dropped_late", s.dropped_late},
                       {"malformed", s.malformed}, {"alerts", alerts}, {"alerts_total", s.total_alerts()},
                       {"frames_per_second", s.frames_per_second}}}};
}

/// Parses one input line. Lines starting with '(' are candump records, anything
/// else a unified CSV row; the unified header yields nullopt.
inline std::optional<CanFrame> parse_stream_line(std::string_view line, std::size_t line_number) {
  line = detail::trim(line);
  if (line.empty() || line == kUnifiedCsvHeader) return std::nullopt;
  if (line.front() == '(') return parse_normal_log_line(line, line_number);
  return parse_unified_csv_row(line, line_number);
}

/// Feeds every line of `in` to the detector. Alerts go to `alerts` as JSON
/// lines when a sink is given. Malformed lines are counted and skipped.
inline StreamSummary run_stream(std::istream& in, DetectorState& state, std::ostream* alerts = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  StreamSummary s;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::optional<CanFrame> f;
    try {
      f = parse_stream_line(line, line_number);
    } catch (const ParseError&) {
      ++s.malformed;
      continue;
    }
    if (!f) continue;
    ++s.frames;
    auto a = state.process_frame(*f);
    if (a && alerts) *alerts << alert_to_json(*a).dump() << '\n';
  }
  if (in.bad()) throw DataError("stream read failed");
  s.accepted = state.accepted();
  s.dropped_late = state.dropped_late();
  s.alerts = state.alerts();
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  s.frames_per_second = s.seconds > 0 ? static_cast<double>(s.frames) / s.seconds : 0.0;
  return s;
}

}  // namespace canids
