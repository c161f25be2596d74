#pragma once

// Time-stamped basis bits driving a station's Pockels cell.
//
// Bit k is sampled at t0 + k * period and takes effect at the cell
// `latency` later, holding until the next sample takes effect. Bits are
// computed on demand from a counter-based generator, so any window of a long
// run can be queried without materializing it.

#include <cmath>
#include <cstdint>
#include <optional>

#include "ghzlab/errors.hpp"
#include "ghzlab/qrng.hpp"
#include "ghzlab/random.hpp"

namespace ghzlab {

enum class SwitchingMode { qrng, periodic };

class BasisSchedule {
 public:
  /// Telegraph-sampled schedule. Consecutive samples follow the exact
  /// discrete-time law of a flip-flop sampled every `period`.
  static BasisSchedule telegraph(const TelegraphQrngConfig& q, std::uint64_t key, double start, double end,
                                 double latency) {
    q.validate();
    BasisSchedule s;
    s.mode_ = SwitchingMode::qrng;
    s.key_ = key;
    s.t0_ = q.sample_phase;
    s.period_ = q.sample_period;
    s.start_ = start;
    s.end_ = end;
    s.latency_ = latency;
    s.refresh_ = -std::expm1(-q.switching_rate() * q.sample_period);
    s.one_ = q.stationary_one_probability();
    return s;
  }

  /// Square wave at `frequency`: each basis value holds for half a period.
  static BasisSchedule periodic(double frequency, double phase, double start, double end, double latency) {
    if (!(frequency > 0.0)) throw ConfigError("periodic switching frequency must be positive");
    BasisSchedule s;
    s.mode_ = SwitchingMode::periodic;
    s.t0_ = phase;
    s.period_ = 0.5 / frequency;
    s.start_ = start;
    s.end_ = end;
    s.latency_ = latency;
    return s;
  }

  SwitchingMode mode() const noexcept { return mode_; }
  double sample_period() const noexcept { return period_; }
  double latency() const noexcept { return latency_; }
  double start() const noexcept { return start_; }
  double end() const noexcept { return end_; }
  double first_sample_time() const noexcept { return t0_; }
  double sample_time(std::int64_t k) const noexcept { return t0_ + static_cast<double>(k) * period_; }

  /// Bit of sample k.
  int sample(std::int64_t k) const {
    if (mode_ == SwitchingMode::periodic) return static_cast<int>(((k % 2) + 2) % 2);
    for (;; --k) {
      const auto ctr = static_cast<std::uint64_t>(k) * 2;
      if (counter_uniform(key_, ctr) < refresh_) return counter_uniform(key_, ctr + 1) < one_ ? 1 : 0;
    }
  }

  /// Index of the sample in effect at the cell at time t.
  std::int64_t sample_index(double t) const noexcept {
    return static_cast<std::int64_t>(std::floor((t - latency_ - t0_) / period_));
  }

  /// Basis bit in effect at time t, or nothing outside [start, end).
  std::optional<int> bit_at(double t) const {
    if (!(t >= start_ && t < end_)) return std::nullopt;
    return sample(sample_index(t));
  }

  int bit_at_or_throw(double t) const {
    const auto b = bit_at(t);
    if (!b) throw ScheduleGap("no basis schedule covers t = " + std::to_string(t) + " s");
    return *b;
  }

  /// Same bits, effective `delay` later (e.g. after a radio link).
  BasisSchedule delayed(double delay) const {
    BasisSchedule s = *this;
    s.latency_ += delay;
    s.start_ += delay;
    s.end_ += delay;
    return s;
  }

  /// Sampled bits with sample times in [from, to), as recorded at the source
  /// of the bits.
  BitStream record(double from, double to) const {
    // Sample times within 1e-9 periods of a bound count as on the bound.
    auto index = [&](double t) { return static_cast<std::int64_t>(std::ceil((t - t0_) / period_ - 1e-9)); };
    std::int64_t k = index(from);
    const std::int64_t end = index(to);
    BitStream out(sample_time(k), period_);
    for (; k < end; ++k) out.push_back(sample(k) != 0);
    return out;
  }

 private:
  SwitchingMode mode_ = SwitchingMode::periodic;
  std::uint64_t key_ = 0;
  double t0_ = 0.0;
  double period_ = 1e-6;
  double start_ = 0.0;
  double end_ = 0.0;
  double latency_ = 0.0;
  double refresh_ = 1.0;  ///< probability that a sample forgets its predecessor
  double one_ = 0.5;
};

}  // namespace ghzlab
