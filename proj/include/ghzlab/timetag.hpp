#pragma once

// Time-tag records, the .ttag file format and the coincidence engine.
//
// File layout (little-endian):
//   header, 32 bytes: "GHZT", u16 version, u16 reserved,
//                     u64 tick period in femtoseconds, 16-byte channel map
//   records, 9 bytes each: u64 tick, u8 tag
// Tag bits 0-3 hold the channel, bit 4 the latched basis bit and bit 5 the
// outcome bit (1 means the -1 outcome).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ghzlab/counts.hpp"
#include "ghzlab/errors.hpp"
#include "ghzlab/schedule.hpp"

namespace ghzlab {

inline constexpr std::uint64_t kTickFemtoseconds = 156250;
inline constexpr double kTickSeconds = 156.25e-12;
inline constexpr double kTicksPerSecond = 6.4e9;

inline std::int64_t seconds_to_ticks(double t) { return std::llround(t * kTicksPerSecond); }
inline double ticks_to_seconds(std::int64_t ticks) { return static_cast<double>(ticks) * kTickSeconds; }

/// Channel numbers used by the simulator and the station layout.
enum Channel : std::uint8_t { kPlusDetector = 0, kMinusDetector = 1, kTriggerDetector = 2 };

struct TimeTagRecord {
  std::uint64_t tick = 0;
  std::uint8_t tag = 0;

  int channel() const noexcept { return tag & 0x0f; }
  int basis_bit() const noexcept { return (tag >> 4) & 1; }
  int outcome_bit() const noexcept { return (tag >> 5) & 1; }
  double seconds() const noexcept { return static_cast<double>(tick) * kTickSeconds; }

  static std::uint8_t make_tag(int channel, int basis_bit, int outcome_bit) noexcept {
    return static_cast<std::uint8_t>((channel & 0x0f) | ((basis_bit & 1) << 4) | ((outcome_bit & 1) << 5));
  }

  bool operator==(const TimeTagRecord&) const = default;
  auto operator<=>(const TimeTagRecord&) const = default;
};

using TimeTagStream = std::vector<TimeTagRecord>;

inline void require_sorted(std::span<const TimeTagRecord> s, std::size_t which) {
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i].tick < s[i - 1].tick)
      throw UnsortedInput("stream " + std::to_string(which) + " decreases at record " + std::to_string(i));
}

// --- file format -----------------------------------------------------------

struct TtagHeader {
  std::uint16_t version = 1;
  std::uint64_t tick_fs = kTickFemtoseconds;
  std::array<std::uint8_t, 16> channel_map{};  ///< role byte per channel
};

inline void write_ttag(std::ostream& out, const TimeTagStream& records, const TtagHeader& h = {}) {
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  out.write("GHZT", 4);
  put(h.version, 2);
  put(0, 2);
  put(h.tick_fs, 8);
  out.write(reinterpret_cast<const char*>(h.channel_map.data()), 16);
  std::vector<char> buf;
  buf.reserve(records.size() * 9);
  for (const auto& r : records) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((r.tick >> (8 * i)) & 0xff));
    buf.push_back(static_cast<char>(r.tag));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void write_ttag(const std::string& path, const TimeTagStream& records, const TtagHeader& h = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedInput("cannot write '" + path + "'");
  write_ttag(out, records, h);
}

inline TimeTagStream read_ttag(std::istream& in, TtagHeader* header = nullptr) {
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto get = [&](std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  if (bytes.size() < 32 || std::string(bytes.begin(), bytes.begin() + 4) != "GHZT")
    throw MalformedInput("not a .ttag file (bad magic or short header)");
  TtagHeader h;
  h.version = static_cast<std::uint16_t>(get(4, 2));
  h.tick_fs = get(8, 8);
  std::copy(bytes.begin() + 16, bytes.begin() + 32, h.channel_map.begin());
  if (h.tick_fs != kTickFemtoseconds) throw MalformedInput("unsupported tick period " + std::to_string(h.tick_fs) + " fs");
  if ((bytes.size() - 32) % 9) throw MalformedInput(".ttag payload is not a whole number of 9-byte records");
  TimeTagStream out((bytes.size() - 32) / 9);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].tick = get(32 + 9 * i, 8);
    out[i].tag = bytes[32 + 9 * i + 8];
  }
  if (header) *header = h;
  return out;
}

inline TimeTagStream read_ttag(const std::string& path, TtagHeader* header = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInput("cannot open '" + path + "'");
  return read_ttag(in, header);
}

// --- offset calibration ----------------------------------------------------

struct OffsetEstimate {
  double offset = 0.0;  ///< seconds; b is late by this much relative to a
  std::uint64_t peak_count = 0;
  double background = 0.0;  ///< max(median, mean) bin content
};

/// Cross-correlation histogram of arrival differences b - a within
/// [-search_range, +search_range]. The offset is the count-weighted centre of
/// the highest bin and its two neighbours on each side.
///
/// Throws NoPeak when the highest bin holds fewer than 5 * max(median, mean, 1)
/// entries.
inline OffsetEstimate find_offset(std::span<const TimeTagRecord> a, std::span<const TimeTagRecord> b,
                                  double search_range, double bin) {
  if (a.empty() || b.empty()) throw InsufficientData("offset search needs two non-empty streams");
  if (!(search_range > 0) || !(bin > 0)) throw ConfigError("search range and bin must be positive");
  require_sorted(a, 0);
  require_sorted(b, 1);
  const auto range = seconds_to_ticks(search_range);
  const double bin_ticks = bin * kTicksPerSecond;
  const auto n_bins = static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(range) / bin_ticks)) + 1;
  std::vector<std::uint64_t> hist(n_bins, 0);
  std::size_t lo = 0;
  for (const auto& ra : a) {
    const auto ta = static_cast<std::int64_t>(ra.tick);
    while (lo < b.size() && static_cast<std::int64_t>(b[lo].tick) < ta - range) ++lo;
    for (std::size_t j = lo; j < b.size() && static_cast<std::int64_t>(b[j].tick) <= ta + range; ++j) {
      const auto d = static_cast<std::int64_t>(b[j].tick) - ta + range;
      ++hist[std::min(n_bins - 1, static_cast<std::size_t>(static_cast<double>(d) / bin_ticks))];
    }
  }
  const auto peak = static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  std::vector<std::uint64_t> sorted = hist;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double mean = 0;
  for (auto c : hist) mean += static_cast<double>(c);
  mean /= static_cast<double>(n_bins);
  OffsetEstimate est;
  est.peak_count = hist[peak];
  est.background = std::max(static_cast<double>(sorted[sorted.size() / 2]), mean);
  if (static_cast<double>(est.peak_count) < 5.0 * std::max(est.background, 1.0))
    throw NoPeak("highest bin " + std::to_string(est.peak_count) + " is not 5x above background " +
                 std::to_string(est.background));
  double w = 0, wx = 0;
  for (std::size_t i = peak >= 2 ? peak - 2 : 0; i <= std::min(n_bins - 1, peak + 2); ++i) {
    const double c = std::max(0.0, static_cast<double>(hist[i]) - est.background);
    w += c;
    wx += c * (static_cast<double>(i) + 0.5);
  }
  const double centre = w > 0 ? wx / w : static_cast<double>(peak) + 0.5;
  est.offset = (centre * bin_ticks - static_cast<double>(range)) * kTickSeconds;
  return est;
}

// --- coincidences ----------------------------------------------------------

/// Stream 0 is the anchor (trigger). A record of stream i matches an anchor
/// when |(t_i - offset_i) - (t_0 - offset_0)| <= window, compared in whole
/// ticks.
struct CoincidenceQuery {
  double window = 3e-9;
  std::vector<double> offsets;  ///< seconds, one per stream; missing entries are 0
  /// Per-stream bit mask of accepted channels; missing entries accept all.
  std::vector<std::uint16_t> channels;

  void validate(std::size_t n_streams) const {
    if (!(window > 0.0)) throw ConfigError("coincidence window must be positive");
    for (double o : offsets)
      if (!std::isfinite(o)) throw ConfigError("coincidence offsets must be finite");
    if (offsets.size() > n_streams || channels.size() > n_streams)
      throw ConfigError("more offsets or channel masks than streams");
  }

  std::int64_t window_ticks() const { return static_cast<std::int64_t>(std::floor(window * kTicksPerSecond + 1e-9)); }
  std::int64_t offset_ticks(std::size_t i) const { return i < offsets.size() ? seconds_to_ticks(offsets[i]) : 0; }
  bool accepts(std::size_t i, const TimeTagRecord& r) const {
    return i >= channels.size() || ((channels[i] >> r.channel()) & 1u);
  }
};

/// One multi-fold event: the matched record of each stream, and its index in
/// that stream. For four streams this is the four-fold (trigger + three
/// stations) event.
struct CoincidenceEvent {
  static constexpr int kMaxStreams = 4;
  int size = 0;
  std::array<TimeTagRecord, kMaxStreams> records{};
  std::array<std::size_t, kMaxStreams> index{};

  bool operator==(const CoincidenceEvent&) const = default;
};

namespace detail {

inline void check_stream_count(std::size_t n) {
  if (n < 2 || n > static_cast<std::size_t>(CoincidenceEvent::kMaxStreams))
    throw ConfigError("coincidence search takes 2 to 4 streams");
}

/// Greedy earliest-match over index ranges [begin_i, end_i) of each stream.
inline void match_range(const std::vector<std::span<const TimeTagRecord>>& streams, const CoincidenceQuery& q,
                        const std::vector<std::size_t>& begin, const std::vector<std::size_t>& end,
                        std::vector<CoincidenceEvent>& out) {
  const std::size_t n = streams.size();
  const std::int64_t w = q.window_ticks();
  std::array<std::int64_t, CoincidenceEvent::kMaxStreams> off{};
  for (std::size_t i = 0; i < n; ++i) off[i] = q.offset_ticks(i);
  std::array<std::size_t, CoincidenceEvent::kMaxStreams> ptr{};
  for (std::size_t i = 0; i < n; ++i) ptr[i] = begin[i];
  auto corrected = [&](std::size_t i, std::size_t j) { return static_cast<std::int64_t>(streams[i][j].tick) - off[i]; };

  for (std::size_t a = begin[0]; a < end[0]; ++a) {
    if (!q.accepts(0, streams[0][a])) continue;
    const std::int64_t ta = corrected(0, a);
    bool all = true;
    for (std::size_t i = 1; i < n; ++i) {
      auto& p = ptr[i];
      while (p < end[i] && (corrected(i, p) < ta - w || !q.accepts(i, streams[i][p]))) ++p;
      if (p == end[i] || corrected(i, p) > ta + w) all = false;
    }
    if (!all) continue;
    CoincidenceEvent ev;
    ev.size = static_cast<int>(n);
    ev.records[0] = streams[0][a];
    ev.index[0] = a;
    for (std::size_t i = 1; i < n; ++i) {
      ev.records[i] = streams[i][ptr[i]];
      ev.index[i] = ptr[i];
      ++ptr[i];
    }
    out.push_back(ev);
  }
}

}  // namespace detail

/// Single-pass multi-way join. Anchors are taken in time order; for each one,
/// every other stream contributes its earliest unused record inside the
/// window. An event is emitted only when every stream contributes, and each
/// record joins at most one event.
inline std::vector<CoincidenceEvent> coincidences(const std::vector<std::span<const TimeTagRecord>>& streams,
                                                  const CoincidenceQuery& q) {
  detail::check_stream_count(streams.size());
  q.validate(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) require_sorted(streams[i], i);
  std::vector<std::size_t> begin(streams.size(), 0), end(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) end[i] = streams[i].size();
  std::vector<CoincidenceEvent> out;
  detail::match_range(streams, q, begin, end, out);
  return out;
}

inline std::vector<CoincidenceEvent> coincidences(const std::vector<TimeTagStream>& streams, const CoincidenceQuery& q) {
  std::vector<std::span<const TimeTagRecord>> views(streams.begin(), streams.end());
  return coincidences(views, q);
}

/// Time cuts at which the streams can be processed independently: no
/// offset-corrected record of any stream lies within one window of a cut, so
/// no event and no greedy choice can straddle it. One cut is sought at or
/// after each of `parts - 1` evenly spaced target times.
inline std::vector<std::int64_t> quiet_cuts(const std::vector<std::span<const TimeTagRecord>>& streams,
                                            const CoincidenceQuery& q, std::size_t parts) {
  std::vector<std::int64_t> cuts;
  const std::int64_t w = q.window_ticks();
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (streams[i].empty()) continue;
    lo = std::min(lo, static_cast<std::int64_t>(streams[i].front().tick) - q.offset_ticks(i));
    hi = std::max(hi, static_cast<std::int64_t>(streams[i].back().tick) - q.offset_ticks(i));
  }
  if (lo >= hi || parts < 2) return cuts;
  for (std::size_t k = 1; k < parts; ++k) {
    std::int64_t target = lo + static_cast<std::int64_t>(static_cast<double>(hi - lo) * k / parts);
    if (!cuts.empty()) target = std::max(target, cuts.back() + 1);
    // Walk the merged corrected timeline from the target until a gap of more
    // than two windows opens.
    std::vector<std::size_t> pos(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const auto off = q.offset_ticks(i);
      pos[i] = static_cast<std::size_t>(
          std::lower_bound(streams[i].begin(), streams[i].end(), target,
                           [&](const TimeTagRecord& r, std::int64_t t) { return static_cast<std::int64_t>(r.tick) - off < t; }) -
          streams[i].begin());
    }
    std::int64_t prev = std::numeric_limits<std::int64_t>::min();
    for (std::size_t i = 0; i < streams.size(); ++i)
      if (pos[i] > 0) prev = std::max(prev, static_cast<std::int64_t>(streams[i][pos[i] - 1].tick) - q.offset_ticks(i));
    std::optional<std::int64_t> cut;
    while (!cut) {
      std::size_t best = streams.size();
      std::int64_t next = std::numeric_limits<std::int64_t>::max();
      for (std::size_t i = 0; i < streams.size(); ++i) {
        if (pos[i] >= streams[i].size()) continue;
        const auto t = static_cast<std::int64_t>(streams[i][pos[i]].tick) - q.offset_ticks(i);
        if (t < next) next = t, best = i;
      }
      if (best == streams.size()) break;
      if (prev != std::numeric_limits<std::int64_t>::min() && next - prev > 2 * w + 2) cut = prev + w + 1;
      prev = next;
      ++pos[best];
    }
    if (!cut) break;
    cuts.push_back(*cut);
  }
  return cuts;
}

/// Same result as coincidences(), computed on time partitions in parallel.
inline std::vector<CoincidenceEvent> coincidences_parallel(
    const std::vector<std::span<const TimeTagRecord>>& streams, const CoincidenceQuery& q, std::size_t parts = 0) {
  detail::check_stream_count(streams.size());
  q.validate(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) require_sorted(streams[i], i);
  if (parts == 0) parts = std::max(1u, std::thread::hardware_concurrency());
  const auto cuts = quiet_cuts(streams, q, parts);
  const std::size_t n_parts = cuts.size() + 1;
  std::vector<std::vector<std::size_t>> bounds(n_parts + 1, std::vector<std::size_t>(streams.size()));
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto off = q.offset_ticks(i);
    bounds[0][i] = 0;
    bounds[n_parts][i] = streams[i].size();
    for (std::size_t c = 0; c < cuts.size(); ++c)
      bounds[c + 1][i] = static_cast<std::size_t>(
          std::lower_bound(streams[i].begin(), streams[i].end(), cuts[c],
                           [&](const TimeTagRecord& r, std::int64_t t) { return static_cast<std::int64_t>(r.tick) - off < t; }) -
          streams[i].begin());
  }
  std::vector<std::vector<CoincidenceEvent>> partial(n_parts);
  {
    std::vector<std::jthread> workers;
    for (std::size_t p = 0; p < n_parts; ++p)
      workers.emplace_back([&, p] { detail::match_range(streams, q, bounds[p], bounds[p + 1], partial[p]); });
  }
  std::vector<CoincidenceEvent> out;
  for (auto& part : partial) out.insert(out.end(), part.begin(), part.end());
  return out;
}

// --- outcome tagging -------------------------------------------------------

/// Per-station settings for turning a matched detection into a setting letter
/// and an outcome.
struct StationLatch {
  BasisSchedule schedule;
  /// Seconds subtracted from the detection time to reach the moment the
  /// basis is read: measurement delay plus Pockels-cell settling.
  double lookup_offset = 0.0;
  /// Seconds added to a detection time to bring it onto the schedule's clock.
  double clock_offset = 0.0;
};

inline int outcome_bit_of(const TimeTagRecord& r) { return r.channel() == kMinusDetector ? 1 : 0; }

namespace detail {
inline void add_event(CountsTable& t, const std::array<int, 3>& basis, const std::array<int, 3>& outcome) {
  // Basis bit 0 selects the unprimed (R/L) analyzer, 1 the primed (D/A) one.
  t.add((basis[0] << 2) | (basis[1] << 1) | basis[2], (outcome[0] << 2) | (outcome[1] << 1) | outcome[2]);
}
inline void require_four_fold(const CoincidenceEvent& e) {
  if (e.size != 4) throw ConfigError("outcome tagging needs trigger + three station events");
}
}  // namespace detail

/// Aggregates four-fold events using bases looked up in the stations'
/// schedules. Records 1..3 of each event are Alice, Bob, Charlie.
inline CountsTable tag_outcomes(std::span<const CoincidenceEvent> events, const std::array<StationLatch, 3>& stations) {
  CountsTable t;
  for (const auto& e : events) {
    detail::require_four_fold(e);
    std::array<int, 3> basis{}, outcome{};
    for (int s = 0; s < 3; ++s) {
      const auto& r = e.records[s + 1];
      const auto& st = stations[s];
      basis[s] = st.schedule.bit_at_or_throw(r.seconds() + st.clock_offset - st.lookup_offset);
      outcome[s] = outcome_bit_of(r);
    }
    detail::add_event(t, basis, outcome);
  }
  return t;
}

/// Aggregates four-fold events using the basis bits latched into the tags.
inline CountsTable tag_outcomes(std::span<const CoincidenceEvent> events) {
  CountsTable t;
  for (const auto& e : events) {
    detail::require_four_fold(e);
    std::array<int, 3> basis{}, outcome{};
    for (int s = 0; s < 3; ++s) {
      basis[s] = e.records[s + 1].basis_bit();
      outcome[s] = outcome_bit_of(e.records[s + 1]);
    }
    detail::add_event(t, basis, outcome);
  }
  return t;
}

/// CSV export, one row per event: trigger tick then tick, basis and outcome
/// bits per station.
inline void write_events_csv(std::ostream& out, std::span<const CoincidenceEvent> events) {
  out << "trigger_tick,alice_tick,alice_basis,alice_outcome,bob_tick,bob_basis,bob_outcome,"
         "charlie_tick,charlie_basis,charlie_outcome\n";
  for (const auto& e : events) {
    detail::require_four_fold(e);
    out << e.records[0].tick;
    for (int s = 1; s < 4; ++s)
      out << ',' << e.records[s].tick << ',' << e.records[s].basis_bit() << ',' << outcome_bit_of(e.records[s]);
    out << '\n';
  }
}

}  // namespace ghzlab
