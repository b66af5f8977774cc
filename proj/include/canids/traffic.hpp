#pragma once

// Synthetic CAN traffic: periodic ECU broadcasts plus the four injected
// attack classes (DoS flood, fuzzing, RPM and gear spoofing).

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "canids/clock.hpp"
#include "canids/error.hpp"
#include "canids/frame.hpp"
#include "canids/rng.hpp"

namespace canids {

inline constexpr double kDosPeriod = 0.0003;
inline constexpr double kFuzzyPeriod = 0.0005;
inline constexpr double kSpoofPeriod = 0.001;
inline constexpr std::uint32_t kRpmCanId = 0x316;
inline constexpr std::uint32_t kGearCanId = 0x43F;

/// One periodic ECU broadcast.
struct IdStream {
  std::uint32_t can_id = 0;
  double period = 0.1;         // seconds
  std::uint64_t payload_seed = 0;
  double phase = 0.0;          // seconds after profile start of the first frame
};

struct NormalProfile {
  std::vector<IdStream> id_pool;
  double jitter_fraction = 0.0;  // uniform jitter of +-fraction*period
  double duration = 1.0;         // seconds
  Timestamp start;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (id_pool.empty()) throw DataError("normal profile: empty id_pool");
    if (!(jitter_fraction >= 0.0 && jitter_fraction < 0.5)) {
      throw DataError("normal profile: jitter_fraction must be in [0, 0.5)");
    }
    if (!(duration > 0.0)) throw DataError("normal profile: duration must be > 0");
    for (const auto& s : id_pool) {
      if (s.can_id > kMaxCanId) throw DataError("normal profile: CAN ID above 0x7FF");
      if (!(s.period > 0.0)) throw DataError("normal profile: period must be > 0");
      if (!(s.phase >= 0.0)) throw DataError("normal profile: phase must be >= 0");
    }
  }
};

/// Local-clock hour range [start_hour, end_hour).
struct HourWindow {
  double start_hour = 0.0;
  double end_hour = 24.0;
};

/// Optional on/off duty cycle inside the window: inject for `on_seconds`
/// out of every `every_seconds`, the first burst `offset_seconds` after the window opens.
struct Burst {
  double on_seconds = 1.0;
  double every_seconds = 10.0;
  double offset_seconds = 0.0;
};

struct AttackScenario {
  ClassLabel kind = ClassLabel::DoS;
  double injection_period = kDosPeriod;
  std::optional<std::uint32_t> target_id;
  std::optional<std::vector<std::uint8_t>> fixed_payload;
  HourWindow window;
  std::uint64_t rng_seed = 0;
  std::optional<Burst> burst;

  void validate() const {
    if (kind == ClassLabel::Normal) throw DataError("attack scenario: kind cannot be Normal");
    if (!(injection_period > 0.0)) throw DataError("attack scenario: injection_period must be > 0");
    if (!(window.start_hour >= 0.0 && window.end_hour <= 24.0 &&
          window.start_hour < window.end_hour)) {
      throw DataError("attack scenario: window must satisfy 0 <= start < end <= 24");
    }
    switch (kind) {
      case ClassLabel::DoS:
        if (target_id && *target_id != 0) throw DataError("DoS scenario: target_id must be 0");
        break;
      case ClassLabel::Fuzzy:
        if (target_id) throw DataError("Fuzzy scenario: target_id must be absent");
        break;
      default:
        if (!target_id) throw DataError("spoof scenario requires target_id");
        if (!fixed_payload) throw DataError("spoof scenario requires fixed_payload");
        if (*target_id > kMaxCanId) throw DataError("spoof scenario: target_id above 0x7FF");
        if (fixed_payload->size() > kMaxDlc) throw DataError("spoof payload longer than 8 bytes");
        break;
    }
    if (burst && !(burst->on_seconds > 0.0 && burst->every_seconds >= burst->on_seconds &&
                   burst->offset_seconds >= 0.0)) {
      throw DataError("attack scenario: invalid burst");
    }
  }
};

namespace detail {

/// Byte-level behaviour of one ECU's payload, drawn once from its seed.
class PayloadModel {
 public:
  explicit PayloadModel(std::uint64_t seed) : rng_(seed) {
    dlc_ = rng_.uniform() < 0.8 ? 8 : static_cast<std::uint8_t>(2 + rng_.below(6));
    for (std::size_t i = 0; i < dlc_; ++i) {
      const double u = rng_.uniform();
      ByteRule r;
      r.value = static_cast<int>(rng_.below(256));
      if (u < 0.35) {
        r.kind = ByteRule::Constant;
      } else if (u < 0.55) {
        r.kind = ByteRule::Counter;
        r.step = 1 + static_cast<int>(rng_.below(16));
      } else if (u < 0.9) {
        r.kind = ByteRule::Walk;
        r.step = 1 + static_cast<int>(rng_.below(4));
      } else {
        r.kind = ByteRule::Checksum;
      }
      rules_[i] = r;
    }
  }

  std::uint8_t dlc() const { return dlc_; }

  void next(std::array<std::uint8_t, kMaxDlc>& out) {
    out.fill(0);
    unsigned sum = 0;
    for (std::size_t i = 0; i < dlc_; ++i) {
      auto& r = rules_[i];
      switch (r.kind) {
        case ByteRule::Constant: break;
        case ByteRule::Counter: r.value = (r.value + r.step) & 0xFF; break;
        case ByteRule::Walk: {
          int delta = static_cast<int>(rng_.below(2 * r.step + 1)) - r.step;
          r.value = std::clamp(r.value + delta, 0, 255);
          break;
        }
        case ByteRule::Checksum: break;
      }
      if (r.kind != ByteRule::Checksum) {
        out[i] = static_cast<std::uint8_t>(r.value);
        sum += out[i];
      }
    }
    for (std::size_t i = 0; i < dlc_; ++i) {
      if (rules_[i].kind == ByteRule::Checksum) out[i] = static_cast<std::uint8_t>((sum * 31 + i) & 0xFF);
    }
  }

 private:
  struct ByteRule {
    enum Kind { Constant, Counter, Walk, Checksum } kind = Constant;
    int value = 0;
    int step = 0;
  };
  Rng rng_;
  std::uint8_t dlc_ = 8;
  std::array<ByteRule, kMaxDlc> rules_{};
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline void sort_frames(std::vector<CanFrame>& frames) {
  std::stable_sort(frames.begin(), frames.end(),
                   [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });
}

/// Sorted merge; on equal timestamps frames from `first` come before `second`.
inline std::vector<CanFrame> merge_sorted(std::span<const CanFrame> first,
                                          std::span<const CanFrame> second) {
  std::vector<CanFrame> out;
  out.reserve(first.size() + second.size());
  std::merge(first.begin(), first.end(), second.begin(), second.end(), std::back_inserter(out),
             [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });
  return out;
}

}  // namespace detail

/// Periodic normal traffic. Frame k of a stream is scheduled at
/// start + phase + k*period + jitter; frames falling outside [start, start+duration) are dropped.
inline std::vector<CanFrame> generate_normal(const NormalProfile& profile) {
  profile.validate();
  const std::int64_t start = profile.start.micros();
  const std::int64_t end = start + std::llround(profile.duration * 1e6);
  std::vector<CanFrame> frames;
  for (std::size_t s = 0; s < profile.id_pool.size(); ++s) {
    const auto& stream = profile.id_pool[s];
    Rng jitter(detail::mix_seed(profile.rng_seed, stream.payload_seed ^ (s << 32)));
    detail::PayloadModel payload(stream.payload_seed);
    const double j = profile.jitter_fraction * stream.period;
    for (std::int64_t k = 0;; ++k) {
      const double offset = stream.phase + static_cast<double>(k) * stream.period;
      std::int64_t t = start + std::llround(offset * 1e6);
      if (t >= end) break;
      if (j > 0.0) t += std::llround(jitter.uniform(-j, j) * 1e6);
      CanFrame f;
      f.can_id = stream.can_id;
      f.dlc = payload.dlc();
      payload.next(f.data);
      f.label = ClassLabel::Normal;
      if (t < start || t >= end) continue;
      f.timestamp = Timestamp::from_micros(t);
      frames.push_back(f);
    }
  }
  detail::sort_frames(frames);
  return frames;
}

/// Frames the scenario injects into a base stream spanning [first, last].
inline std::vector<CanFrame> attack_frames(const AttackScenario& sc, Timestamp first, Timestamp last,
                                           const LocalClock& clock) {
  sc.validate();
  const std::int64_t day = clock.day_start(first).micros();
  const std::int64_t w_lo = day + std::llround(sc.window.start_hour * 3600.0 * 1e6);
  const std::int64_t w_hi = day + std::llround(sc.window.end_hour * 3600.0 * 1e6);
  const std::int64_t lo = std::max(w_lo, first.micros());
  const std::int64_t hi = std::min(w_hi, last.micros() + 1);  // exclusive
  std::vector<CanFrame> out;
  if (lo >= hi) return out;

  Rng rng(sc.rng_seed);
  auto emit = [&](std::int64_t t) {
    CanFrame f;
    f.timestamp = Timestamp::from_micros(t);
    f.label = sc.kind;
    switch (sc.kind) {
      case ClassLabel::DoS:
        f.can_id = 0;
        f.dlc = 8;
        break;
      case ClassLabel::Fuzzy:
        f.can_id = static_cast<std::uint32_t>(rng.below(kMaxCanId + 1));
        f.dlc = static_cast<std::uint8_t>(rng.below(kMaxDlc + 1));
        for (std::size_t i = 0; i < f.dlc; ++i) f.data[i] = static_cast<std::uint8_t>(rng.below(256));
        break;
      default:
        f.can_id = *sc.target_id;
        f.dlc = static_cast<std::uint8_t>(sc.fixed_payload->size());
        std::copy(sc.fixed_payload->begin(), sc.fixed_payload->end(), f.data.begin());
        break;
    }
    out.push_back(f);
  };
  // Injection instants are anchored at `from` and spaced by the period.
  auto run = [&](std::int64_t from, std::int64_t to) {
    for (std::int64_t k = 0;; ++k) {
      std::int64_t t = from + std::llround(static_cast<double>(k) * sc.injection_period * 1e6);
      if (t >= to) break;
      if (t >= lo) emit(t);
    }
  };
  if (!sc.burst) {
    run(lo, hi);
  } else {
    const auto every = std::llround(sc.burst->every_seconds * 1e6);
    const auto on = std::llround(sc.burst->on_seconds * 1e6);
    for (std::int64_t b = w_lo + std::llround(sc.burst->offset_seconds * 1e6); b < hi; b += every) {
      if (b + on <= lo) continue;
      run(b, std::min<std::int64_t>(b + on, hi));
    }
  }
  return out;
}

/// Merges the scenario's injected frames into `base` (sorted). If the scenario
/// window does not intersect the base time range the base is returned unchanged.
inline std::vector<CanFrame> inject_attack(std::span<const CanFrame> base, const AttackScenario& sc,
                                           const LocalClock& clock = {}) {
  sc.validate();
  if (base.empty()) return {};
  for (std::size_t i = 1; i < base.size(); ++i) {
    if (base[i].timestamp < base[i - 1].timestamp) throw DataError("inject_attack: base not sorted");
  }
  auto injected = attack_frames(sc, base.front().timestamp, base.back().timestamp, clock);
  return detail::merge_sorted(injected, base);
}

struct ExperimentConfig {
  LocalClock clock;
  std::vector<NormalProfile> normal;
  std::vector<AttackScenario> attacks;

  /// Replaces every component seed with one derived from `seed`.
  void reseed(std::uint64_t seed) {
    for (std::size_t i = 0; i < normal.size(); ++i) normal[i].rng_seed = detail::mix_seed(seed, i);
    for (std::size_t i = 0; i < attacks.size(); ++i) {
      attacks[i].rng_seed = detail::mix_seed(seed, 1000 + i);
    }
  }
};

inline std::vector<CanFrame> build_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.normal.empty()) throw DataError("experiment config: no normal traffic profile");
  std::vector<CanFrame> stream;
  for (const auto& p : cfg.normal) {
    auto part = generate_normal(p);
    stream = detail::merge_sorted(stream, part);
  }
  for (const auto& sc : cfg.attacks) stream = inject_attack(stream, sc, cfg.clock);
  return stream;
}

namespace defaults {

/// 2016-11-03 00:00:00 UTC.
inline constexpr std::int64_t kExperimentDay = 1478131200;

/// Legitimate broadcast IDs of the simulated vehicle, with their periods in seconds.
inline const std::vector<std::pair<std::uint32_t, double>>& ecu_ids() {
  static const std::vector<std::pair<std::uint32_t, double>> ids{
      {0x018, 1.5}, {0x034, 1.5}, {0x043, 1.5}, {0x044, 1.5}, {0x050, 1.5}, {0x080, 0.75},
      {0x081, 0.75}, {0x0A0, 1.5}, {0x0A1, 1.5}, {0x110, 1.5}, {0x130, 0.75}, {0x131, 0.75},
      {0x140, 0.75}, {0x153, 1.5}, {0x164, 1.5}, {0x165, 1.5}, {0x18F, 0.75}, {0x1F1, 1.5},
      {0x220, 1.5}, {0x260, 1.5}, {0x2A0, 1.5}, {0x2B0, 0.75}, {kRpmCanId, 0.75}, {0x329, 0.75},
      {0x350, 1.5}, {0x370, 1.5}, {0x382, 1.5}, {kGearCanId, 1.5}, {0x440, 1.5}, {0x4B0, 1.5},
      {0x4F0, 1.5}, {0x545, 1.5},
  };
  return ids;
}

inline const std::vector<std::uint8_t>& rpm_spoof_payload() {
  static const std::vector<std::uint8_t> p{0x05, 0x20, 0xFF, 0xFF, 0x20, 0x1A, 0x00, 0x7F};
  return p;
}

inline const std::vector<std::uint8_t>& gear_spoof_payload() {
  static const std::vector<std::uint8_t> p{0x10, 0x40, 0x60, 0xFF, 0x7E, 0x1F, 0x00, 0x00};
  return p;
}

}  // namespace defaults

/// Desk-scale stand-in for the merged experiment dataset: 16:00-21:00 local
/// clock on 2016-11-03 with the attack schedule
///   RpmSpoof 16-17h, GearSpoof 17-18h, Fuzzy 17-19h, DoS 18-20h.
/// Normal traffic runs throughout: the bulk normal capture covers 19-21h and the
/// attacked vehicle's RPM and gear broadcasts continue at a slow rate over 16-21h.
inline ExperimentConfig default_experiment_config(std::uint64_t seed = 1) {
  ExperimentConfig cfg;
  const Timestamp day = Timestamp::from_micros(defaults::kExperimentDay * 1'000'000);
  auto at_hour = [&](double h) { return Timestamp::from_micros(day.micros() + std::llround(h * 3600e6)); };

  NormalProfile bulk;
  bulk.start = at_hour(19);
  bulk.duration = 2 * 3600;
  bulk.jitter_fraction = 0.05;
  NormalProfile background;
  background.start = at_hour(16);
  background.duration = 5 * 3600;
  background.jitter_fraction = 0.05;
  Rng phases(0xC0FFEE);
  const auto& ids = defaults::ecu_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    IdStream s{ids[i].first, ids[i].second, 0x5EED0000ULL + ids[i].first, 0.0};
    s.phase = phases.uniform(0.0, s.period);
    bulk.id_pool.push_back(s);
    if (s.can_id == kRpmCanId || s.can_id == kGearCanId) {
      IdStream b = s;
      b.period = 3.0;
      b.phase = phases.uniform(0.0, b.period);
      background.id_pool.push_back(b);
    }
  }
  cfg.normal = {bulk, background};

  AttackScenario rpm;
  rpm.kind = ClassLabel::RpmSpoof;
  rpm.injection_period = kSpoofPeriod;
  rpm.target_id = kRpmCanId;
  rpm.fixed_payload = defaults::rpm_spoof_payload();
  rpm.window = {16, 17};
  rpm.burst = Burst{0.5, 60.0, 0.0};

  AttackScenario gear = rpm;
  gear.kind = ClassLabel::GearSpoof;
  gear.target_id = kGearCanId;
  gear.fixed_payload = defaults::gear_spoof_payload();
  gear.window = {17, 18};
  gear.burst = Burst{0.4, 60.0, 10.0};

  AttackScenario fuzzy;
  fuzzy.kind = ClassLabel::Fuzzy;
  fuzzy.injection_period = kFuzzyPeriod;
  fuzzy.window = {17, 19};
  fuzzy.burst = Burst{0.125, 60.0, 25.0};

  AttackScenario dos;
  dos.kind = ClassLabel::DoS;
  dos.injection_period = kDosPeriod;
  dos.target_id = 0;
  dos.window = {18, 20};
  dos.burst = Burst{0.15, 60.0, 40.0};

  cfg.attacks = {rpm, gear, fuzzy, dos};
  cfg.reseed(seed);
  return cfg;
}

// ---- JSON config documents ----------------------------------------------

inline void to_json(nlohmann::json& j, const IdStream& s) {
  j = {{"can_id", s.can_id}, {"period", s.period}, {"payload_seed", s.payload_seed}, {"phase", s.phase}};
}
inline void from_json(const nlohmann::json& j, IdStream& s) {
  s.can_id = j.at("can_id").get<std::uint32_t>();
  s.period = j.at("period").get<double>();
  s.payload_seed = j.value("payload_seed", std::uint64_t{0});
  s.phase = j.value("phase", 0.0);
}

inline void to_json(nlohmann::json& j, const NormalProfile& p) {
  j = {{"id_pool", p.id_pool},           {"jitter_fraction", p.jitter_fraction},
       {"duration", p.duration},         {"start_epoch", p.start.format()},
       {"rng_seed", p.rng_seed}};
}
inline void from_json(const nlohmann::json& j, NormalProfile& p) {
  p.id_pool = j.at("id_pool").get<std::vector<IdStream>>();
  p.jitter_fraction = j.value("jitter_fraction", 0.0);
  p.duration = j.at("duration").get<double>();
  const auto& se = j.at("start_epoch");
  if (se.is_string()) {
    auto t = Timestamp::parse(se.get<std::string>());
    if (!t) throw DataError("bad start_epoch");
    p.start = *t;
  } else {
    p.start = Timestamp::from_seconds(se.get<double>());
  }
  p.rng_seed = j.value("rng_seed", std::uint64_t{0});
}

inline void to_json(nlohmann::json& j, const AttackScenario& s) {
  j = {{"kind", label_name(s.kind)},
       {"injection_period", s.injection_period},
       {"window", {s.window.start_hour, s.window.end_hour}},
       {"rng_seed", s.rng_seed}};
  if (s.target_id) j["target_id"] = *s.target_id;
  if (s.fixed_payload) j["fixed_payload"] = *s.fixed_payload;
  if (s.burst) {
    j["burst"] = {{"on_seconds", s.burst->on_seconds},
                  {"every_seconds", s.burst->every_seconds},
                  {"offset_seconds", s.burst->offset_seconds}};
  }
}
inline void from_json(const nlohmann::json& j, AttackScenario& s) {
  auto kind = label_from_name(j.at("kind").get<std::string>());
  if (!kind) throw DataError("unknown attack kind " + j.at("kind").dump());
  s.kind = *kind;
  s.injection_period = j.value("injection_period",
                               s.kind == ClassLabel::DoS     ? kDosPeriod
                               : s.kind == ClassLabel::Fuzzy ? kFuzzyPeriod
                                                             : kSpoofPeriod);
  const auto& w = j.at("window");
  s.window = {w.at(0).get<double>(), w.at(1).get<double>()};
  s.rng_seed = j.value("rng_seed", std::uint64_t{0});
  s.target_id.reset();
  if (j.contains("target_id")) s.target_id = j.at("target_id").get<std::uint32_t>();
  if (s.kind == ClassLabel::DoS && !s.target_id) s.target_id = 0;
  s.fixed_payload.reset();
  if (j.contains("fixed_payload")) s.fixed_payload = j.at("fixed_payload").get<std::vector<std::uint8_t>>();
  s.burst.reset();
  if (j.contains("burst")) {
    const auto& b = j.at("burst");
    s.burst = Burst{b.at("on_seconds").get<double>(), b.at("every_seconds").get<double>(),
                    b.value("offset_seconds", 0.0)};
  }
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {{"utc_offset_seconds", cfg.clock.utc_offset_seconds},
          {"normal", cfg.normal},
          {"attacks", cfg.attacks}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.clock.utc_offset_seconds = j.value("utc_offset_seconds", std::int64_t{0});
    cfg.normal = j.at("normal").get<std::vector<NormalProfile>>();
    cfg.attacks = j.value("attacks", std::vector<AttackScenario>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scenario config: ") + e.what());
  }
  for (const auto& p : cfg.normal) p.validate();
  for (const auto& a : cfg.attacks) a.validate();
  return cfg;
}

}  // namespace canids
