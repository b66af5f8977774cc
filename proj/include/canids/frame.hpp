#pragma once

// CAN frame data model and the on-disk traffic formats:
//   attack CSV  : timestamp,canid_hex,dlc,b0,...,b{dlc-1},flag        (flag T|R)
//   normal log  : (<seconds.micros>) <iface> <HEX_ID>#<HEXPAIRS>       (candump style)
//   unified CSV : timestamp,can_id,dlc,data0..data7,flag,class         (header row)

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "canids/error.hpp"

namespace canids {

inline constexpr std::uint32_t kMaxCanId = 0x7FF;
inline constexpr std::size_t kMaxDlc = 8;
inline constexpr std::size_t kNumClasses = 5;

/// Ground-truth class. Ordinals are part of the file and model formats; do not reorder.
enum class ClassLabel : std::uint8_t { Normal = 0, DoS = 1, Fuzzy = 2, RpmSpoof = 3, GearSpoof = 4 };

inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels{
    ClassLabel::Normal, ClassLabel::DoS, ClassLabel::Fuzzy, ClassLabel::RpmSpoof,
    ClassLabel::GearSpoof};

constexpr int ordinal(ClassLabel l) { return static_cast<int>(l); }

inline ClassLabel label_from_ordinal(int o) {
  if (o < 0 || o >= static_cast<int>(kNumClasses)) {
    throw DataError("class ordinal out of range: " + std::to_string(o));
  }
  return static_cast<ClassLabel>(o);
}

constexpr std::string_view label_name(ClassLabel l) {
  switch (l) {
    case ClassLabel::Normal: return "Normal";
    case ClassLabel::DoS: return "DoS";
    case ClassLabel::Fuzzy: return "Fuzzy";
    case ClassLabel::RpmSpoof: return "RpmSpoof";
    case ClassLabel::GearSpoof: return "GearSpoof";
  }
  return "?";
}

inline std::optional<ClassLabel> label_from_name(std::string_view s) {
  for (auto l : kAllLabels) {
    if (label_name(l) == s) return l;
  }
  return std::nullopt;
}

/// Seconds since the Unix epoch at microsecond resolution.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  static constexpr Timestamp from_micros(std::int64_t us) { return Timestamp(us); }
  static Timestamp from_seconds(double s) { return Timestamp(std::llround(s * 1e6)); }

  constexpr std::int64_t micros() const { return micros_; }
  constexpr double seconds() const { return static_cast<double>(micros_) / 1e6; }

  /// Parses "<digits>[.<digits>]"; fractional digits past the sixth are rounded.
  static std::optional<Timestamp> parse(std::string_view s) {
    auto dot = s.find('.');
    std::string_view whole = s.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (whole.empty() || whole.size() > 12) return std::nullopt;
    if (dot != std::string_view::npos && frac.empty()) return std::nullopt;
    std::int64_t secs = 0;
    for (char c : whole) {
      if (c < '0' || c > '9') return std::nullopt;
      secs = secs * 10 + (c - '0');
    }
    std::int64_t us = 0;
    int round_up = 0;
    for (std::size_t i = 0; i < frac.size(); ++i) {
      char c = frac[i];
      if (c < '0' || c > '9') return std::nullopt;
      if (i < 6) {
        us = us * 10 + (c - '0');
      } else if (i == 6) {
        round_up = c >= '5' ? 1 : 0;
      }
    }
    for (std::size_t i = frac.size(); i < 6; ++i) us *= 10;
    return Timestamp(secs * 1'000'000 + us + round_up);
  }

  std::string format() const {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%lld.%06lld", static_cast<long long>(micros_ / 1'000'000),
                  static_cast<long long>(micros_ % 1'000'000));
    return buf;
  }

  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;

 private:
  constexpr explicit Timestamp(std::int64_t us) : micros_(us) {}
  std::int64_t micros_ = 0;
};

/// One timestamped CAN data frame with its ground-truth label.
struct CanFrame {
  Timestamp timestamp;
  std::uint32_t can_id = 0;
  std::uint8_t dlc = 0;
  std::array<std::uint8_t, kMaxDlc> data{};  // bytes past dlc are always zero
  ClassLabel label = ClassLabel::Normal;

  std::span<const std::uint8_t> payload() const { return {data.data(), dlc}; }

  bool valid() const {
    if (can_id > kMaxCanId || dlc > kMaxDlc || timestamp.micros() < 0) return false;
    for (std::size_t i = dlc; i < kMaxDlc; ++i) {
      if (data[i] != 0) return false;
    }
    return true;
  }

  friend bool operator==(const CanFrame&, const CanFrame&) = default;
};

enum class ParseErrorCode {
  Grammar,
  FieldCount,
  BadTimestamp,
  BadHex,
  DlcOutOfRange,
  IdOutOfRange,
  OddHexLength,
  BadFlag,
  BadClass,
};

constexpr std::string_view to_string(ParseErrorCode c) {
  switch (c) {
    case ParseErrorCode::Grammar: return "Grammar";
    case ParseErrorCode::FieldCount: return "FieldCount";
    case ParseErrorCode::BadTimestamp: return "BadTimestamp";
    case ParseErrorCode::BadHex: return "BadHex";
    case ParseErrorCode::DlcOutOfRange: return "DlcOutOfRange";
    case ParseErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ParseErrorCode::OddHexLength: return "OddHexLength";
    case ParseErrorCode::BadFlag: return "BadFlag";
    case ParseErrorCode::BadClass: return "BadClass";
  }
  return "?";
}

/// Structured parse failure; always carries the 1-based source line.
class ParseError : public DataError {
 public:
  ParseError(ParseErrorCode code, std::size_t line_number, const std::string& detail)
      : DataError("line " + std::to_string(line_number) + ": " + std::string(to_string(code)) +
                  ": " + detail),
        code_(code),
        line_number_(line_number) {}

  ParseErrorCode code() const { return code_; }
  std::size_t line_number() const { return line_number_; }

 private:
  ParseErrorCode code_;
  std::size_t line_number_;
};

enum class RecordSource { AttackCsv, NormalLog };

/// A tokenized input line before field decoding.
struct RawRecord {
  RecordSource source = RecordSource::AttackCsv;
  std::size_t line_number = 1;
  std::vector<std::string> fields;
};

namespace detail {

inline std::optional<std::uint32_t> parse_hex(std::string_view s, std::size_t max_digits) {
  if (s.empty() || s.size() > max_digits) return std::nullopt;
  std::uint32_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else return std::nullopt;
    v = (v << 4) | static_cast<std::uint32_t>(d);
  }
  return v;
}

inline std::optional<unsigned> parse_uint(std::string_view s) {
  unsigned v = 0;
  if (s.empty() || s.size() > 3) return std::nullopt;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string hex_byte(std::uint8_t b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  return {kDigits[b >> 4], kDigits[b & 0xF]};
}

}  // namespace detail

/// Lowercase two-digit hex; decode is case-insensitive.
inline std::string format_hex_byte(std::uint8_t b) { return detail::hex_byte(b); }

inline std::optional<std::uint8_t> decode_hex_byte(std::string_view s) {
  auto v = detail::parse_hex(s, 2);
  if (!v) return std::nullopt;
  return static_cast<std::uint8_t>(*v);
}

inline RawRecord tokenize_attack_csv(std::string_view row, std::size_t line_number = 1) {
  return RawRecord{RecordSource::AttackCsv, line_number, detail::split(detail::trim(row), ',')};
}

/// Decodes an attack-CSV record. Accepts both the Car-Hacking layout
/// (3 + dlc + 1 fields) and the unified layout (13 fields, trailing class).
/// `attack_label` is the class given to T-flagged rows of the Car-Hacking layout.
inline CanFrame decode_attack_record(const RawRecord& rec, ClassLabel attack_label) {
  const auto& f = rec.fields;
  const auto line = rec.line_number;
  if (f.size() < 4) {
    throw ParseError(ParseErrorCode::FieldCount, line, "expected at least 4 fields");
  }
  CanFrame frame;
  auto ts = Timestamp::parse(f[0]);
  if (!ts) throw ParseError(ParseErrorCode::BadTimestamp, line, "'" + f[0] + "'");
  frame.timestamp = *ts;

  auto id = detail::parse_hex(f[1], 8);
  if (!id) throw ParseError(ParseErrorCode::BadHex, line, "CAN ID '" + f[1] + "'");
  if (*id > kMaxCanId) throw ParseError(ParseErrorCode::IdOutOfRange, line, f[1]);
  frame.can_id = *id;

  auto dlc = detail::parse_uint(f[2]);
  if (!dlc) throw ParseError(ParseErrorCode::Grammar, line, "DLC '" + f[2] + "'");
  if (*dlc > kMaxDlc) throw ParseError(ParseErrorCode::DlcOutOfRange, line, f[2]);
  frame.dlc = static_cast<std::uint8_t>(*dlc);

  const std::size_t compact = 3 + frame.dlc + 1;
  const std::size_t unified = 3 + kMaxDlc + 2;
  std::size_t flag_at;
  std::optional<ClassLabel> named;
  if (f.size() == compact) {
    flag_at = compact - 1;
  } else if (f.size() == unified) {
    flag_at = unified - 2;
    named = label_from_name(f[unified - 1]);
    if (!named) throw ParseError(ParseErrorCode::BadClass, line, "'" + f[unified - 1] + "'");
    for (std::size_t i = frame.dlc; i < kMaxDlc; ++i) {
      if (!f[3 + i].empty()) {
        throw ParseError(ParseErrorCode::FieldCount, line, "data beyond DLC");
      }
    }
  } else {
    throw ParseError(ParseErrorCode::FieldCount, line,
                     "got " + std::to_string(f.size()) + " fields for DLC " +
                         std::to_string(frame.dlc));
  }
  for (std::size_t i = 0; i < frame.dlc; ++i) {
    auto b = decode_hex_byte(f[3 + i]);
    if (!b) throw ParseError(ParseErrorCode::BadHex, line, "data byte '" + f[3 + i] + "'");
    frame.data[i] = *b;
  }
  const auto& flag = f[flag_at];
  if (flag == "R") {
    frame.label = ClassLabel::Normal;
  } else if (flag == "T") {
    frame.label = attack_label;
  } else {
    throw ParseError(ParseErrorCode::BadFlag, line, "'" + flag + "'");
  }
  if (named) {
    if ((*named == ClassLabel::Normal) != (flag == "R")) {
      throw ParseError(ParseErrorCode::BadClass, line, "flag and class disagree");
    }
    frame.label = *named;
  }
  return frame;
}

inline CanFrame parse_attack_csv_row(std::string_view row, ClassLabel attack_label,
                                     std::size_t line_number = 1) {
  return decode_attack_record(tokenize_attack_csv(row, line_number), attack_label);
}

/// Unified-format rows carry their own class; T rows without one default to DoS.
inline CanFrame parse_unified_csv_row(std::string_view row, std::size_t line_number = 1) {
  return parse_attack_csv_row(row, ClassLabel::DoS, line_number);
}

struct NormalLogEntry {
  CanFrame frame;
  std::string interface;
};

inline NormalLogEntry parse_normal_log_entry(std::string_view line, std::size_t line_number = 1) {
  line = detail::trim(line);
  auto fail = [&](ParseErrorCode c, const std::string& what) -> ParseError {
    return ParseError(c, line_number, what);
  };
  if (line.size() < 2 || line.front() != '(') throw fail(ParseErrorCode::Grammar, "missing '('");
  auto close = line.find(')');
  if (close == std::string_view::npos) throw fail(ParseErrorCode::Grammar, "missing ')'");
  auto ts = Timestamp::parse(line.substr(1, close - 1));
  if (!ts) throw fail(ParseErrorCode::BadTimestamp, std::string(line.substr(1, close - 1)));

  auto rest = line.substr(close + 1);
  if (rest.empty() || rest.front() != ' ') throw fail(ParseErrorCode::Grammar, "expected space");
  rest = detail::trim(rest);
  auto sp = rest.find_first_of(" \t");
  if (sp == std::string_view::npos) throw fail(ParseErrorCode::Grammar, "missing frame token");
  std::string_view iface = rest.substr(0, sp);
  std::string_view tok = detail::trim(rest.substr(sp));
  if (tok.find_first_of(" \t") != std::string_view::npos) {
    throw fail(ParseErrorCode::Grammar, "trailing tokens");
  }
  auto hash = tok.find('#');
  if (hash == std::string_view::npos) throw fail(ParseErrorCode::Grammar, "missing '#'");
  auto id_text = tok.substr(0, hash);
  auto data_text = tok.substr(hash + 1);

  auto id = detail::parse_hex(id_text, 8);
  if (!id) throw fail(ParseErrorCode::BadHex, "CAN ID '" + std::string(id_text) + "'");
  if (*id > kMaxCanId) throw fail(ParseErrorCode::IdOutOfRange, std::string(id_text));
  if (data_text.size() % 2 != 0) throw fail(ParseErrorCode::OddHexLength, std::string(data_text));
  if (data_text.size() / 2 > kMaxDlc) throw fail(ParseErrorCode::DlcOutOfRange, std::string(data_text));

  NormalLogEntry out;
  out.interface = std::string(iface);
  out.frame.timestamp = *ts;
  out.frame.can_id = *id;
  out.frame.dlc = static_cast<std::uint8_t>(data_text.size() / 2);
  for (std::size_t i = 0; i < out.frame.dlc; ++i) {
    auto b = decode_hex_byte(data_text.substr(2 * i, 2));
    if (!b) throw fail(ParseErrorCode::BadHex, "data '" + std::string(data_text) + "'");
    out.frame.data[i] = *b;
  }
  out.frame.label = ClassLabel::Normal;
  return out;
}

inline CanFrame parse_normal_log_line(std::string_view line, std::size_t line_number = 1) {
  return parse_normal_log_entry(line, line_number).frame;
}

inline std::string format_normal_log_line(const CanFrame& f, std::string_view iface = "can0") {
  char id[8];
  std::snprintf(id, sizeof id, "%03X", static_cast<unsigned>(f.can_id));
  std::string out = "(" + f.timestamp.format() + ") " + std::string(iface) + " " + id + "#";
  for (auto b : f.payload()) {
    char h[3];
    std::snprintf(h, sizeof h, "%02X", static_cast<unsigned>(b));
    out += h;
  }
  return out;
}

inline constexpr std::string_view kUnifiedCsvHeader =
    "timestamp,can_id,dlc,data0,data1,data2,data3,data4,data5,data6,data7,flag,class";

/// One unified-CSV row; byte columns past the DLC are left empty.
inline std::string write_frame_csv(const CanFrame& f) {
  char head[64];
  std::snprintf(head, sizeof head, "%s,%04x,%u", f.timestamp.format().c_str(),
                static_cast<unsigned>(f.can_id), static_cast<unsigned>(f.dlc));
  std::string out = head;
  for (std::size_t i = 0; i < kMaxDlc; ++i) {
    out += ',';
    if (i < f.dlc) out += detail::hex_byte(f.data[i]);
  }
  out += f.label == ClassLabel::Normal ? ",R," : ",T,";
  out += label_name(f.label);
  return out;
}

/// Frames plus the per-line diagnostics collected while reading a file.
struct IngestResult {
  std::vector<CanFrame> frames;
  std::vector<ParseError> errors;
  std::vector<std::string> warnings;
};

namespace detail {

template <class ParseLine>
IngestResult ingest_lines(std::istream& in, std::size_t line_offset, ParseLine&& parse) {
  IngestResult out;
  std::string line;
  std::size_t n = line_offset;
  std::optional<Timestamp> last;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      CanFrame f = parse(std::string_view(line), n);
      if (last && f.timestamp < *last) {
        out.warnings.push_back("line " + std::to_string(n) + ": timestamp goes backwards");
      }
      last = f.timestamp;
      out.frames.push_back(f);
    } catch (const ParseError& e) {
      out.errors.push_back(e);
    }
  }
  return out;
}

}  // namespace detail

/// Reads one Car-Hacking attack file; T rows get `attack_label`.
inline IngestResult read_attack_csv(std::istream& in, ClassLabel attack_label) {
  return detail::ingest_lines(in, 0, [&](std::string_view l, std::size_t n) {
    return parse_attack_csv_row(l, attack_label, n);
  });
}

inline IngestResult read_normal_log(std::istream& in) {
  return detail::ingest_lines(in, 0, [](std::string_view l, std::size_t n) {
    return parse_normal_log_line(l, n);
  });
}

/// Reads a unified CSV. The first line must be the header.
inline IngestResult read_unified_csv(std::istream& in) {
  std::string first;
  if (!std::getline(in, first)) return {};
  if (detail::trim(first) != kUnifiedCsvHeader) {
    throw ParseError(ParseErrorCode::Grammar, 1, "missing unified CSV header");
  }
  return detail::ingest_lines(in, 1, [](std::string_view l, std::size_t n) {
    return parse_unified_csv_row(l, n);
  });
}

inline void write_unified_csv(std::ostream& out, std::span<const CanFrame> frames) {
  out << kUnifiedCsvHeader << '\n';
  for (const auto& f : frames) out << write_frame_csv(f) << '\n';
}

}  // namespace canids
