#pragma once

// Flip-flop quantum random number generator modelled as a random telegraph
// process, plus the randomness diagnostics run on its output.
//
// Two photon detectors drive the flip-flop: detector "1" sets it (rate
// set_rate), detector "0" resets it (rate reset_rate). The state is sampled on
// a fixed grid to produce bits. The continuous state has autocorrelation
// exp(-(set_rate + reset_rate) t).

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ghzlab/errors.hpp"
#include "ghzlab/random.hpp"
#include "ghzlab/uncertain.hpp"

namespace ghzlab {

struct TelegraphQrngConfig {
  double set_rate = 14e6;    ///< Hz, detector "1"
  double reset_rate = 14e6;  ///< Hz, detector "0"
  double sample_period = 1e-6;
  double sample_phase = 0.0;  ///< time of the first sample, seconds
  Uncertain hardware_delay{34e-9, 3e-9};

  void validate() const {
    if (!(set_rate >= 0.0) || !(reset_rate >= 0.0) || !(set_rate + reset_rate > 0.0))
      throw ConfigError("QRNG rates must be nonnegative and not both zero");
    if (!(sample_period > 0.0)) throw ConfigError("QRNG sample period must be positive");
  }

  double switching_rate() const { return set_rate + reset_rate; }
  /// Autocorrelation time of the continuous flip-flop state.
  double correlation_time() const { return 1.0 / switching_rate(); }
  double stationary_one_probability() const { return set_rate / switching_rate(); }
};

/// Bits sampled on a uniform grid, stored packed (bit i in word i / 64 at
/// position i % 64).
class BitStream {
 public:
  BitStream() = default;
  BitStream(double start_time, double sample_period) : start_(start_time), period_(sample_period) {}

  void push_back(bool bit) {
    if (size_ % 64 == 0) words_.push_back(0);
    if (bit) words_.back() |= std::uint64_t{1} << (size_ % 64);
    ++size_;
  }

  bool operator[](std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }

  void flip(std::size_t i) { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  double start_time() const noexcept { return start_; }
  double sample_period() const noexcept { return period_; }
  double time_of(std::size_t i) const noexcept { return start_ + static_cast<double>(i) * period_; }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  std::size_t count_ones() const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t word = words_[w];
      if (w + 1 == words_.size() && size_ % 64) word &= (std::uint64_t{1} << (size_ % 64)) - 1;
      n += static_cast<std::size_t>(std::popcount(word));
    }
    return n;
  }

  BitStream slice(std::size_t begin, std::size_t count) const {
    BitStream out(time_of(begin), period_);
    for (std::size_t i = begin; i < std::min(size_, begin + count); ++i) out.push_back((*this)[i]);
    return out;
  }

  bool operator==(const BitStream& o) const {
    return start_ == o.start_ && period_ == o.period_ && size_ == o.size_ && words_ == o.words_;
  }

 private:
  double start_ = 0.0;
  double period_ = 1e-6;
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Continuous flip-flop signal: initial state plus the times it toggled.
struct SwitchRecord {
  double start = 0.0;
  double end = 0.0;
  bool initial_state = false;
  std::vector<double> transitions;

  bool state_at(double t) const {
    const auto n = std::upper_bound(transitions.begin(), transitions.end(), t) - transitions.begin();
    return initial_state ^ static_cast<bool>(n & 1);
  }
};

struct QrngSimOptions {
  /// Transitions are kept for [0, switch_record_span); a full-rate record of
  /// a long run would not fit in memory.
  double switch_record_span = 2e-3;
  bool initial_state = false;
};

struct QrngRun {
  BitStream bits;
  SwitchRecord switches;
};

/// Event-by-event telegraph simulation, sampled every `sample_period`.
inline QrngRun simulate_qrng(const TelegraphQrngConfig& cfg, double duration, std::uint64_t seed,
                             const QrngSimOptions& opt = {}) {
  cfg.validate();
  if (!(duration >= 100.0 * cfg.sample_period))
    throw ConfigError("QRNG simulation must span at least 100 sample periods");
  auto rng = derive_engine(seed, "qrng");
  const double inf = std::numeric_limits<double>::infinity();
  auto wait = [&](double rate) {
    if (rate <= 0.0) return inf;
    return std::exponential_distribution<double>(rate)(rng);
  };

  QrngRun run;
  run.bits = BitStream(cfg.sample_phase, cfg.sample_period);
  run.switches.start = 0.0;
  run.switches.end = std::min(duration, opt.switch_record_span);
  run.switches.initial_state = opt.initial_state;

  bool state = opt.initial_state;
  // From 0 only a set event changes the state; from 1 only a reset does.
  double next = wait(state ? cfg.reset_rate : cfg.set_rate);
  const std::size_t n_samples =
      static_cast<std::size_t>(std::floor((duration - cfg.sample_phase) / cfg.sample_period));
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = cfg.sample_phase + static_cast<double>(k) * cfg.sample_period;
    while (next <= t) {
      state = !state;
      if (next < run.switches.end) run.switches.transitions.push_back(next);
      next += wait(state ? cfg.reset_rate : cfg.set_rate);
    }
    run.bits.push_back(state);
  }
  while (next < run.switches.end) {
    state = !state;
    run.switches.transitions.push_back(next);
    next += wait(state ? cfg.reset_rate : cfg.set_rate);
  }
  return run;
}

// ---------------------------------------------------------------------------

inline double bit_bias(const BitStream& s) {
  if (s.empty()) throw InsufficientData("empty bit stream");
  return static_cast<double>(s.count_ones()) / static_cast<double>(s.size());
}

/// Pearson correlation between consecutive bits.
inline double lag1_correlation(const BitStream& s) {
  if (s.size() < 3) throw InsufficientData("need at least 3 bits for a lag-1 correlation");
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double x = s[i], y = s[i + 1];
    sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  if (vx <= 0 || vy <= 0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

/// Counts of maximal runs of each bit value. Bucket i - 1 holds runs of
/// length i (1..16); bucket 16 holds longer runs. Runs touching either end of
/// the stream are included.
struct RunLengthHistogram {
  static constexpr int kMaxLength = 16;
  std::array<std::array<std::uint64_t, kMaxLength + 1>, 2> counts{};

  std::uint64_t total_runs() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
      for (auto c : row) t += c;
    return t;
  }
};

inline RunLengthHistogram run_length_histogram(const BitStream& s) {
  RunLengthHistogram h;
  if (s.empty()) return h;
  bool current = s[0];
  std::size_t len = 1;
  auto close = [&] {
    const std::size_t bucket = std::min<std::size_t>(len, RunLengthHistogram::kMaxLength + 1) - 1;
    ++h.counts[current][bucket];
  };
  for (std::size_t i = 1; i < s.size(); ++i) {
    const bool b = s[i];
    if (b == current) {
      ++len;
    } else {
      close();
      current = b;
      len = 1;
    }
  }
  close();
  return h;
}

inline std::uint64_t transition_count(const BitStream& s) {
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < s.size(); ++i) n += s[i] != s[i - 1];
  return n;
}

enum class ChiSquareMode { unbiased, biased };

struct ChiSquareResult {
  double chi2 = 0.0;
  int dof = 0;
  std::uint64_t runs = 0;
  double bias = 0.5;  ///< P(bit = 1) used for the expected law
};

/// Run-length chi-square over lengths 1..16 for both bit values.
///
/// Expected share of runs of value k and length i among all runs:
/// P_th = 1/2 (1 - p_k) p_k^(i - 1), where p_k is the probability of bit k
/// (1/2 in unbiased mode, the measured fraction in biased mode). Measured
/// shares are run counts over all runs. The statistic is
/// runs * sum (P - P_th)^2 / P_th, a Pearson chi-square on run counts.
/// Degrees of freedom: 32 unbiased, 31 biased (one estimated parameter).
inline ChiSquareResult chi_square_runs(const BitStream& s, ChiSquareMode mode) {
  if (s.size() < 10000) throw InsufficientData("run-length chi-square needs at least 10^4 bits");
  const auto h = run_length_histogram(s);
  ChiSquareResult r;
  r.runs = h.total_runs();
  r.bias = mode == ChiSquareMode::unbiased ? 0.5 : bit_bias(s);
  r.dof = mode == ChiSquareMode::unbiased ? 32 : 31;
  const double n = static_cast<double>(r.runs);
  for (int k = 0; k < 2; ++k) {
    const double pk = k == 1 ? r.bias : 1.0 - r.bias;
    if (pk <= 0.0 || pk >= 1.0) {
      r.chi2 = std::numeric_limits<double>::infinity();
      return r;
    }
    for (int i = 1; i <= RunLengthHistogram::kMaxLength; ++i) {
      const double expected = 0.5 * (1.0 - pk) * std::pow(pk, i - 1);
      const double measured = static_cast<double>(h.counts[k][i - 1]) / n;
      r.chi2 += n * (measured - expected) * (measured - expected) / expected;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

struct AutocorrelationFit {
  double tau = 0.0;        ///< seconds
  double amplitude = 0.0;
  double residual = 0.0;   ///< RMS of data minus fit over the fitted lags
  double lag_step = 0.0;
  std::vector<double> autocorrelation;  ///< empirical C at lags 0, dt, 2dt, ...
};

struct AutocorrelationOptions {
  double max_residual = 0.05;
  double min_span_in_tau = 1000.0;
  int samples_per_tau = 10;
  int lags_in_tau = 6;
};

/// Empirical autocorrelation of the continuous flip-flop signal, fitted with
/// A exp(-t / tau).
inline AutocorrelationFit autocorrelation_fit(const SwitchRecord& rec, const AutocorrelationOptions& opt = {}) {
  if (rec.transitions.size() < 4) throw FitFailed("flip-flop signal is (nearly) constant");
  // Dwell-time estimate of tau sets the lag grid.
  double dwell[2] = {0, 0};
  std::uint64_t visits[2] = {0, 0};
  bool st = rec.initial_state ^ true;  // state after the first transition
  for (std::size_t i = 0; i + 1 < rec.transitions.size(); ++i) {
    dwell[st] += rec.transitions[i + 1] - rec.transitions[i];
    ++visits[st];
    st = !st;
  }
  if (!visits[0] || !visits[1]) throw FitFailed("flip-flop never completed a dwell in both states");
  const double rate_leave0 = visits[0] / dwell[0];
  const double rate_leave1 = visits[1] / dwell[1];
  const double tau0 = 1.0 / (rate_leave0 + rate_leave1);
  const double span = rec.end - rec.start;
  if (span < opt.min_span_in_tau * tau0)
    throw InsufficientData("switch record spans fewer than " + std::to_string(opt.min_span_in_tau) +
                           " correlation times");

  const double dt = tau0 / opt.samples_per_tau;
  const std::size_t n = static_cast<std::size_t>(span / dt);
  std::vector<double> x(n);
  {
    std::size_t next = 0;
    bool state = rec.initial_state;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = rec.start + (static_cast<double>(i) + 0.5) * dt;
      while (next < rec.transitions.size() && rec.transitions[next] <= t) {
        state = !state;
        ++next;
      }
      x[i] = state ? 1.0 : 0.0;
    }
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double& v : x) {
    v -= mean;
    var += v * v;
  }
  var /= static_cast<double>(n);
  if (var <= 0.0) throw FitFailed("flip-flop signal has zero variance");

  const int max_lag = opt.samples_per_tau * opt.lags_in_tau;
  AutocorrelationFit fit;
  fit.lag_step = dt;
  fit.autocorrelation.resize(max_lag + 1);
  for (int l = 0; l <= max_lag; ++l) {
    double acc = 0.0;
    for (std::size_t i = 0; i + l < n; ++i) acc += x[i] * x[i + l];
    fit.autocorrelation[l] = acc / static_cast<double>(n - l) / var;
  }

  // Gauss-Newton on A exp(-t / tau), started from the log-linear fit.
  double sl = 0, sll = 0, sy = 0, sly = 0;
  int m = 0;
  for (int l = 1; l <= max_lag; ++l) {
    const double c = fit.autocorrelation[l];
    if (c <= 0.05) break;
    const double t = l * dt;
    sl += t, sll += t * t, sy += std::log(c), sly += t * std::log(c);
    ++m;
  }
  if (m < 3) throw FitFailed("autocorrelation decays within fewer than three lags");
  const double slope = (m * sly - sl * sy) / (m * sll - sl * sl);
  double amp = std::exp((sy - slope * sl) / m);
  double tau = -1.0 / slope;
  for (int iter = 0; iter < 50 && std::isfinite(tau) && tau > 0; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int l = 0; l <= max_lag; ++l) {
      const double t = l * dt;
      const double e = std::exp(-t / tau);
      const Eigen::Vector2d g(e, amp * e * t / (tau * tau));
      jtj += g * g.transpose();
      jtr += g * (fit.autocorrelation[l] - amp * e);
    }
    const Eigen::Vector2d step = jtj.ldlt().solve(jtr);
    amp += step(0);
    tau += step(1);
    if (std::abs(step(1)) < 1e-9 * std::abs(tau)) break;
  }
  if (!std::isfinite(tau) || tau <= 0) throw FitFailed("exponential fit diverged");
  double ss = 0.0;
  for (int l = 0; l <= max_lag; ++l) {
    const double d = fit.autocorrelation[l] - amp * std::exp(-l * dt / tau);
    ss += d * d;
  }
  fit.tau = tau;
  fit.amplitude = amp;
  fit.residual = std::sqrt(ss / (max_lag + 1));
  if (fit.residual > opt.max_residual)
    throw FitFailed("exponential fit residual " + std::to_string(fit.residual) + " exceeds threshold");
  return fit;
}

// ---------------------------------------------------------------------------

struct TransportCheck {
  std::uint64_t errors = 0;
  std::uint64_t compared = 0;
};

/// Compares a transmitted bit record with the received one on a common time
/// axis. `link_delay` is subtracted from the received record's start time.
inline TransportCheck verify_transport(const BitStream& sent, const BitStream& received, double link_delay = 0.0) {
  if (std::abs(sent.sample_period() - received.sample_period()) > 1e-12 * sent.sample_period())
    throw MalformedInput("bit records have different sample periods");
  const double shift = (received.start_time() - link_delay - sent.start_time()) / sent.sample_period();
  const auto offset = static_cast<long long>(std::llround(shift));
  const long long begin = std::max<long long>(0, offset);
  const long long end = std::min<long long>(static_cast<long long>(sent.size()),
                                            offset + static_cast<long long>(received.size()));
  if (end <= begin) throw NoOverlap("bit records do not overlap in time");
  TransportCheck c;
  for (long long i = begin; i < end; ++i) {
    c.errors += sent[static_cast<std::size_t>(i)] != received[static_cast<std::size_t>(i - offset)];
    ++c.compared;
  }
  return c;
}

// ---------------------------------------------------------------------------

/// Packed little-endian bit order (bit i is bit i % 8 of byte i / 8) plus a
/// JSON sidecar at `path + ".json"` with {start_time, sample_period, count}.
inline void write_bit_stream(const std::string& path, const BitStream& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedInput("cannot write '" + path + "'");
  const std::size_t n_bytes = (s.size() + 7) / 8;
  for (std::size_t b = 0; b < n_bytes; ++b) {
    const auto byte = static_cast<char>((s.words()[b / 8] >> (8 * (b % 8))) & 0xff);
    out.put(byte);
  }
  std::ofstream side(path + ".json");
  side << nlohmann::json{{"start_time", s.start_time()}, {"sample_period", s.sample_period()}, {"count", s.size()}}.dump(2)
       << '\n';
}

inline BitStream read_bit_stream(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw MalformedInput("missing sidecar '" + path + ".json'");
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const std::exception& e) {
    throw MalformedInput("bad sidecar JSON: " + std::string(e.what()));
  }
  const auto count = meta.at("count").get<std::size_t>();
  BitStream s(meta.at("start_time").get<double>(), meta.at("sample_period").get<double>());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInput("cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < (count + 7) / 8) throw MalformedInput("bit file shorter than its sidecar count");
  for (std::size_t i = 0; i < count; ++i)
    s.push_back((static_cast<unsigned char>(bytes[i / 8]) >> (i % 8)) & 1u);
  return s;
}

}  // namespace ghzlab
