#pragma once

// Monte Carlo of the distributed experiment.
//
// A pulsed source emits four-photon events (trigger + one photon per station).
// Each station photon survives its link with the station efficiency, reaches
// the Pockels cell after the pre-measurement delay, is measured in the basis
// in effect there, and is time-tagged after the measurement delay. Background
// singles and dark counts are independent Poisson processes. All times are
// seconds from the first pulse.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ghzlab/counts.hpp"
#include "ghzlab/errors.hpp"
#include "ghzlab/qrng.hpp"
#include "ghzlab/quantum.hpp"
#include "ghzlab/random.hpp"
#include "ghzlab/schedule.hpp"
#include "ghzlab/timetag.hpp"
#include "ghzlab/uncertain.hpp"

namespace ghzlab {

struct SourceConfig {
  double pulse_rate = 80e6;
  double fourfold_rate = 39.0;  ///< four-photon events per second at the source
  double phase = -std::numbers::pi / 2;
  double visibility = 1.0;  ///< Werner weight of the GHZ component
  std::optional<DensityMatrix> state;  ///< replaces phase and visibility when set
  double trigger_delay = 57e-9;
  double trigger_background_rate = 505e3;
  double trigger_dark_rate = 300.0;

  DensityMatrix density() const {
    if (state) return *state;
    return DensityMatrix::werner(ghz_state(phase), visibility);
  }

  void validate() const {
    if (!(pulse_rate > 0.0)) throw ConfigError("pulse rate must be positive");
    if (!(fourfold_rate >= 0.0) || fourfold_rate > pulse_rate)
      throw ConfigError("four-fold rate must lie in [0, pulse rate]");
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw ConfigError("visibility must lie in [0, 1]");
    if (!(trigger_delay >= 0.0) || !(trigger_background_rate >= 0.0) || !(trigger_dark_rate >= 0.0))
      throw ConfigError("trigger delay and rates must be nonnegative");
  }
};

struct StationConfig {
  std::string name;
  Uncertain photon_delay;  ///< creation to time-tag; sigma is a per-run systematic spread
  double measurement_delay = 47.2e-9;  ///< Pockels cell to time-tag
  double efficiency = 1.0;
  SwitchingMode switching = SwitchingMode::qrng;
  TelegraphQrngConfig qrng;
  double periodic_frequency = 500e3;
  Uncertain basis_delay_min;  ///< sample to Pockels cell, shortest path
  Uncertain basis_delay_max;
  double pockels_delay = 140e-9;  ///< part of basis_delay_min spent in the cell driver
  double background_rate = 0.0;   ///< singles not belonging to a four-photon event
  double dark_rate = 300.0;       ///< per detector
  double detection_jitter = 0.2e-9;

  void validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw ConfigError("station '" + name + "' efficiency outside [0, 1]");
    if (basis_delay_min.value > basis_delay_max.value)
      throw ConfigError("station '" + name + "' basis delay min exceeds max");
    if (!(photon_delay.value >= measurement_delay) || !(measurement_delay >= 0.0) || !(photon_delay.sigma >= 0.0))
      throw ConfigError("station '" + name + "' photon delay must cover the measurement delay");
    if (!(background_rate >= 0.0) || !(dark_rate >= 0.0) || !(detection_jitter >= 0.0))
      throw ConfigError("station '" + name + "' rates and jitter must be nonnegative");
    if (switching == SwitchingMode::qrng) qrng.validate();
    if (switching == SwitchingMode::periodic && !(periodic_frequency > 0.0))
      throw ConfigError("station '" + name + "' periodic frequency must be positive");
  }
};

struct SimulationConfig {
  SourceConfig source;
  std::array<StationConfig, 3> stations;  ///< Alice, Bob, Charlie
  double duration = 0.0;
  /// Multiplies every background singles rate (not dark counts).
  double background_scale = 1.0;
  double pockels_settle = 10e-9;
  /// Span of the Randy-side and Alice-side bit records kept in the artifacts.
  double bit_record_span = 10.0;

  void validate() const {
    source.validate();
    for (const auto& s : stations) s.validate();
    if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be a finite nonnegative number");
    if (!(background_scale >= 0.0)) throw ConfigError("background scale must be nonnegative");
    if (!(pockels_settle >= 0.0) || !(bit_record_span >= 0.0)) throw ConfigError("settle time and record span must be nonnegative");
  }
};

/// Station parameters of the published layout (delays, efficiencies,
/// singles rates, QRNG and switching budgets).
inline std::array<StationConfig, 3> published_stations() {
  std::array<StationConfig, 3> s;
  s[0].name = "alice";
  s[0].photon_delay = {2926.3e-9, 5.1e-9};
  s[0].efficiency = 0.14;
  s[0].basis_delay_min = {2218e-9, 25e-9};
  s[0].basis_delay_max = {3431e-9, 25e-9};
  s[0].background_rate = 78e3;
  s[1].name = "bob";
  s[1].photon_delay = {3078.7e-9, 24e-9};
  s[1].efficiency = 0.33;
  s[1].basis_delay_min = {665e-9, 6e-9};
  s[1].basis_delay_max = {1865e-9, 6e-9};
  s[1].background_rate = 126e3;
  s[2].name = "charlie";
  s[2].photon_delay = {2791.5e-9, 24e-9};
  s[2].efficiency = 0.32;
  s[2].basis_delay_min = {663e-9, 6e-9};
  s[2].basis_delay_max = {1863e-9, 6e-9};
  s[2].background_rate = 131e3;
  return s;
}

// --- schedules -------------------------------------------------------------

namespace detail {
inline std::string schedule_stream_name(const SimulationConfig& cfg, int station) {
  // Alice's bits come from Randy's generator.
  return station == 0 ? "randy" : cfg.stations[station].name;
}
}  // namespace detail

/// Basis bits in effect at a station's Pockels cell. Alice's schedule is
/// Randy's sampled bits arriving after the radio path.
inline BasisSchedule basis_schedule(const SimulationConfig& cfg, int station, std::uint64_t seed) {
  const auto& st = cfg.stations.at(station);
  st.validate();
  const double start = -1e-3, end = cfg.duration + 1e-3;
  if (st.switching == SwitchingMode::periodic)
    return BasisSchedule::periodic(st.periodic_frequency, 0.0, start, end, st.basis_delay_min.value);
  return BasisSchedule::telegraph(st.qrng, derive_key(seed, detail::schedule_stream_name(cfg, station)), start, end,
                                  st.basis_delay_min.value);
}

/// Standalone form: schedule of one station for `duration` seconds.
inline BasisSchedule basis_schedule(const StationConfig& st, double duration, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.duration = duration;
  cfg.stations[1] = st;
  return basis_schedule(cfg, 1, seed);
}

// --- run -------------------------------------------------------------------

struct GroundTruthEvent {
  double creation = 0.0;
  std::uint8_t detected = 0;  ///< bit s set when station s recorded the photon
  std::array<int, 3> basis{};
  std::array<int, 3> outcome{};  ///< 1 means the -1 outcome
  std::uint64_t trigger_tick = 0;
  std::array<std::uint64_t, 3> tick{};
};

struct RunArtifacts {
  /// Trigger, Alice, Bob, Charlie; each sorted by tick.
  std::array<TimeTagStream, 4> streams;
  BitStream randy_bits;  ///< as sampled at Randy
  BitStream alice_bits;  ///< as received at Alice
  double randy_to_alice_delay = 0.0;
  std::vector<GroundTruthEvent> ground_truth;
  std::array<double, 3> systematic_delay{};  ///< drawn offset of each photon delay
};

namespace detail {

inline double truncated_normal(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const double x = n(rng);
    if (std::abs(x) <= 4.0 * sigma) return x;
  }
}

inline std::vector<double> poisson_times(std::mt19937_64& rng, double rate, double t0, double t1) {
  std::vector<double> t;
  if (rate <= 0.0 || t1 <= t0) return t;
  const auto n = std::poisson_distribution<std::uint64_t>(rate * (t1 - t0))(rng);
  std::uniform_real_distribution<double> u(t0, t1);
  t.resize(n);
  for (auto& x : t) x = u(rng);
  std::sort(t.begin(), t.end());
  return t;
}

inline std::uint64_t to_tick(double t) { return static_cast<std::uint64_t>(std::max<std::int64_t>(0, seconds_to_ticks(t))); }

}  // namespace detail

/// Simulates `cfg.duration` seconds of data taking.
inline RunArtifacts run_experiment(const SimulationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RunArtifacts art;
  const auto rho = cfg.source.density();
  // Born table for each basis triple (bit per station, 0 = R/L, 1 = D/A).
  const auto mermin = standard_mermin_settings();
  std::array<std::discrete_distribution<int>, 8> born;
  for (int t = 0; t < 8; ++t) {
    const auto p = outcome_probabilities(rho, triple_settings(mermin, t));
    born[t] = std::discrete_distribution<int>(p.begin(), p.end());
  }
  std::array<BasisSchedule, 3> sched{basis_schedule(cfg, 0, seed), basis_schedule(cfg, 1, seed), basis_schedule(cfg, 2, seed)};

  auto delay_rng = derive_engine(seed, "systematic-delays");
  for (int s = 0; s < 3; ++s) art.systematic_delay[s] = detail::truncated_normal(delay_rng, cfg.stations[s].photon_delay.sigma);

  auto basis_at = [&](int s, double tag_time) {
    const auto b = sched[s].bit_at(tag_time - cfg.stations[s].measurement_delay - cfg.pockels_settle);
    return b.value_or(0);
  };

  // Four-photon events, one geometric skip per event.
  auto src = derive_engine(seed, "source");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<std::normal_distribution<double>, 3> jitter;
  for (int s = 0; s < 3; ++s) jitter[s] = std::normal_distribution<double>(0.0, std::max(cfg.stations[s].detection_jitter, 1e-300));
  const double p = cfg.source.fourfold_rate / cfg.source.pulse_rate;
  if (p > 0.0 && cfg.duration > 0.0) {
    std::geometric_distribution<std::int64_t> skip(std::min(p, 1.0));
    for (std::int64_t pulse = skip(src);; pulse += 1 + skip(src)) {
      const double t = static_cast<double>(pulse) / cfg.source.pulse_rate;
      if (t >= cfg.duration) break;
      GroundTruthEvent ev;
      ev.creation = t;
      ev.trigger_tick = detail::to_tick(t + cfg.source.trigger_delay);
      art.streams[0].push_back({ev.trigger_tick, TimeTagRecord::make_tag(kTriggerDetector, 0, 0)});
      std::array<double, 3> tag_time{};
      for (int s = 0; s < 3; ++s) {
        const auto& st = cfg.stations[s];
        double j = 0.0;
        if (st.detection_jitter > 0.0)
          do j = jitter[s](src);
          while (std::abs(j) > 4.0 * st.detection_jitter);
        const double pc_time = t + st.photon_delay.value + art.systematic_delay[s] - st.measurement_delay;
        tag_time[s] = pc_time + st.measurement_delay + j;
        ev.basis[s] = sched[s].bit_at(pc_time - cfg.pockels_settle).value_or(0);
        if (unit(src) < st.efficiency) ev.detected |= static_cast<std::uint8_t>(1u << s);
      }
      const int triple = (ev.basis[0] << 2) | (ev.basis[1] << 1) | ev.basis[2];
      const int outcome = born[triple](src);
      for (int s = 0; s < 3; ++s) {
        ev.outcome[s] = (outcome >> (2 - s)) & 1;
        if (!(ev.detected >> s & 1u)) continue;
        ev.tick[s] = detail::to_tick(tag_time[s]);
        const int channel = ev.outcome[s] ? kMinusDetector : kPlusDetector;
        art.streams[s + 1].push_back({ev.tick[s], TimeTagRecord::make_tag(channel, ev.basis[s], ev.outcome[s])});
      }
      art.ground_truth.push_back(ev);
    }
  }

  // Background singles and dark counts.
  const double horizon = cfg.duration + 5e-6;
  if (cfg.duration > 0.0) {
    auto bg = derive_engine(seed, "background/trigger");
    for (double rate : {cfg.source.trigger_background_rate * cfg.background_scale, cfg.source.trigger_dark_rate})
      for (double t : detail::poisson_times(bg, rate, 0.0, horizon))
        art.streams[0].push_back({detail::to_tick(t), TimeTagRecord::make_tag(kTriggerDetector, 0, 0)});
    for (int s = 0; s < 3; ++s) {
      const auto& st = cfg.stations[s];
      auto rng = derive_engine(seed, "background/" + st.name);
      for (double rate : {st.background_rate * cfg.background_scale, 2.0 * st.dark_rate})
        for (double t : detail::poisson_times(rng, rate, 0.0, horizon)) {
          const int outcome = unit(rng) < 0.5 ? 1 : 0;
          art.streams[s + 1].push_back({detail::to_tick(t), TimeTagRecord::make_tag(outcome ? kMinusDetector : kPlusDetector,
                                                                                 basis_at(s, t), outcome)});
        }
    }
  }
  for (auto& s : art.streams) std::sort(s.begin(), s.end());

  // Randy's record and Alice's copy of it after the radio link.
  if (cfg.stations[0].switching == SwitchingMode::qrng && cfg.duration > 0.0) {
    const double span = std::min(cfg.duration, cfg.bit_record_span);
    art.randy_bits = sched[0].record(0.0, span);
    art.randy_to_alice_delay = cfg.stations[0].basis_delay_min.value - cfg.stations[0].pockels_delay;
    art.alice_bits = BitStream(art.randy_bits.start_time() + art.randy_to_alice_delay, art.randy_bits.sample_period());
    for (std::size_t i = 0; i < art.randy_bits.size(); ++i) art.alice_bits.push_back(art.randy_bits[i]);
  }
  return art;
}

/// Analysis settings matching a run: the trigger-relative offset of each
/// station stream is its nominal photon delay.
inline CoincidenceQuery nominal_query(const SimulationConfig& cfg, double window = 3e-9) {
  CoincidenceQuery q;
  q.window = window;
  q.offsets = {cfg.source.trigger_delay, cfg.stations[0].photon_delay.value, cfg.stations[1].photon_delay.value,
               cfg.stations[2].photon_delay.value};
  return q;
}

/// Latches for schedule-based tagging of a run's events.
inline std::array<StationLatch, 3> station_latches(const SimulationConfig& cfg, std::uint64_t seed) {
  std::array<StationLatch, 3> l;
  for (int s = 0; s < 3; ++s) {
    l[s].schedule = basis_schedule(cfg, s, seed);
    l[s].lookup_offset = cfg.stations[s].measurement_delay + cfg.pockels_settle;
  }
  return l;
}

struct PipelineResult {
  std::array<double, 3> offsets{};  ///< calibrated station offsets relative to the trigger
  std::vector<CoincidenceEvent> events;
  CountsTable counts;
};

/// Offset calibration against the trigger, four-fold search and tagging with
/// the latched basis bits.
inline PipelineResult analyze_run(const RunArtifacts& art, double window = 3e-9, double search_range = 5e-6,
                                  double bin = kTickSeconds) {
  PipelineResult r;
  CoincidenceQuery q;
  q.window = window;
  q.offsets = {0.0, 0.0, 0.0, 0.0};
  for (int s = 0; s < 3; ++s) {
    r.offsets[s] = find_offset(art.streams[0], art.streams[s + 1], search_range, bin).offset;
    q.offsets[s + 1] = r.offsets[s];
  }
  std::vector<std::span<const TimeTagRecord>> views(art.streams.begin(), art.streams.end());
  r.events = coincidences_parallel(views, q);
  r.counts = tag_outcomes(r.events);
  return r;
}

// --- scenarios -------------------------------------------------------------

struct ScenarioExpectation {
  MerminForm form = MerminForm::m;
  int sign_abc = +1;  ///< sign of E(a,b,c) expected for the configured state
  double analytic_mermin = 0.0;
};

struct Scenario {
  std::string label;
  SimulationConfig config;
  ScenarioExpectation expected;
};

/// Ready-made configurations of the published runs. Background singles are
/// scaled to 1% of the measured rates so that a full run fits in memory.
inline std::vector<Scenario> scenario_suite(const std::string& name) {
  auto base = [](double phase, double visibility, double duration) {
    SimulationConfig c;
    c.stations = published_stations();
    c.source.phase = phase;
    c.source.visibility = visibility;
    c.duration = duration;
    c.background_scale = 0.01;
    return c;
  };
  auto expect = [](const SimulationConfig& c, MerminForm f) {
    const auto rho = c.source.density();
    ScenarioExpectation e;
    e.form = f;
    e.analytic_mermin = mermin_parameter(rho, standard_mermin_settings(), f);
    e.sign_abc = correlation(rho, triple_settings(standard_mermin_settings(), 0)) >= 0 ? +1 : -1;
    return e;
  };
  constexpr double pi = std::numbers::pi;
  std::vector<Scenario> out;
  if (name == "main_run") {
    auto c = base(-pi / 2, 0.693, 4740.0);
    out.push_back({"main_run", c, expect(c, MerminForm::m)});
  } else if (name == "phase_scan") {
    for (auto [label, phase, vis, form] : {std::tuple{"phase_minus_pi_2", -pi / 2, 0.6925, MerminForm::m},
                                           std::tuple{"phase_plus_pi_2", pi / 2, 0.634, MerminForm::m},
                                           std::tuple{"phase_zero", 0.0, 0.6225, MerminForm::m_prime}}) {
      auto c = base(phase, vis, 1800.0);
      out.push_back({label, c, expect(c, form)});
    }
  } else if (name == "random_vs_deterministic") {
    auto rnd = base(-pi / 2, 0.63, 900.0);
    out.push_back({"random", rnd, expect(rnd, MerminForm::m)});
    auto det = base(-pi / 2, 0.6475, 900.0);
    for (auto& s : det.stations) s.switching = SwitchingMode::periodic;
    out.push_back({"deterministic", det, expect(det, MerminForm::m)});
  } else {
    throw UnknownScenario("'" + name + "' (known: main_run, phase_scan, random_vs_deterministic)");
  }
  return out;
}

// --- config I/O ------------------------------------------------------------

inline nlohmann::json to_json(const SimulationConfig& c) {
  using nlohmann::json;
  json j;
  j["duration_s"] = c.duration;
  j["background_scale"] = c.background_scale;
  j["pockels_settle_ns"] = c.pockels_settle * 1e9;
  j["bit_record_span_s"] = c.bit_record_span;
  j["source"] = {{"pulse_rate_hz", c.source.pulse_rate},
                 {"fourfold_rate_hz", c.source.fourfold_rate},
                 {"phase_rad", c.source.phase},
                 {"visibility", c.source.visibility},
                 {"trigger_delay_ns", c.source.trigger_delay * 1e9},
                 {"trigger_background_rate_hz", c.source.trigger_background_rate},
                 {"trigger_dark_rate_hz", c.source.trigger_dark_rate}};
  if (c.source.state) j["source"]["custom_state"] = true;
  for (const auto& s : c.stations) {
    json st = {{"name", s.name},
               {"photon_delay_ns", {{"value", s.photon_delay.value * 1e9}, {"sigma", s.photon_delay.sigma * 1e9}}},
               {"measurement_delay_ns", s.measurement_delay * 1e9},
               {"efficiency", s.efficiency},
               {"switching", s.switching == SwitchingMode::qrng ? "qrng" : "periodic"},
               {"qrng", {{"set_rate_hz", s.qrng.set_rate}, {"reset_rate_hz", s.qrng.reset_rate}, {"sample_period_ns", s.qrng.sample_period * 1e9}}},
               {"periodic_frequency_hz", s.periodic_frequency},
               {"basis_delay_min_ns", {{"value", s.basis_delay_min.value * 1e9}, {"sigma", s.basis_delay_min.sigma * 1e9}}},
               {"basis_delay_max_ns", {{"value", s.basis_delay_max.value * 1e9}, {"sigma", s.basis_delay_max.sigma * 1e9}}},
               {"pockels_delay_ns", s.pockels_delay * 1e9},
               {"background_rate_hz", s.background_rate},
               {"dark_rate_hz", s.dark_rate},
               {"detection_jitter_ns", s.detection_jitter * 1e9}};
    j["stations"].push_back(st);
  }
  return j;
}

/// Reads the format written by to_json(SimulationConfig). Missing keys keep
/// the published-layout defaults.
inline SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
  SimulationConfig c;
  c.stations = published_stations();
  try {
    auto ns = [](const nlohmann::json& o, const char* k, double def) { return o.contains(k) ? o.at(k).get<double>() * 1e-9 : def; };
    auto unc = [](const nlohmann::json& o, const char* k, Uncertain def) {
      if (!o.contains(k)) return def;
      return Uncertain{o.at(k).at("value").get<double>() * 1e-9, o.at(k).value("sigma", 0.0) * 1e-9};
    };
    c.duration = j.value("duration_s", c.duration);
    c.background_scale = j.value("background_scale", c.background_scale);
    c.pockels_settle = ns(j, "pockels_settle_ns", c.pockels_settle);
    c.bit_record_span = j.value("bit_record_span_s", c.bit_record_span);
    if (j.contains("source")) {
      const auto& s = j.at("source");
      c.source.pulse_rate = s.value("pulse_rate_hz", c.source.pulse_rate);
      c.source.fourfold_rate = s.value("fourfold_rate_hz", c.source.fourfold_rate);
      c.source.phase = s.value("phase_rad", c.source.phase);
      c.source.visibility = s.value("visibility", c.source.visibility);
      c.source.trigger_delay = ns(s, "trigger_delay_ns", c.source.trigger_delay);
      c.source.trigger_background_rate = s.value("trigger_background_rate_hz", c.source.trigger_background_rate);
      c.source.trigger_dark_rate = s.value("trigger_dark_rate_hz", c.source.trigger_dark_rate);
    }
    if (j.contains("stations")) {
      if (j.at("stations").size() != 3) throw ConfigError("exactly three stations (alice, bob, charlie) are required");
      for (std::size_t i = 0; i < 3; ++i) {
        const auto& o = j.at("stations").at(i);
        auto& s = c.stations[i];
        s.name = o.value("name", s.name);
        s.photon_delay = unc(o, "photon_delay_ns", s.photon_delay);
        s.measurement_delay = ns(o, "measurement_delay_ns", s.measurement_delay);
        s.efficiency = o.value("efficiency", s.efficiency);
        const auto mode = o.value("switching", std::string("qrng"));
        if (mode != "qrng" && mode != "periodic") throw ConfigError("switching must be 'qrng' or 'periodic'");
        s.switching = mode == "qrng" ? SwitchingMode::qrng : SwitchingMode::periodic;
        if (o.contains("qrng")) {
          s.qrng.set_rate = o.at("qrng").value("set_rate_hz", s.qrng.set_rate);
          s.qrng.reset_rate = o.at("qrng").value("reset_rate_hz", s.qrng.reset_rate);
          s.qrng.sample_period = ns(o.at("qrng"), "sample_period_ns", s.qrng.sample_period);
        }
        s.periodic_frequency = o.value("periodic_frequency_hz", s.periodic_frequency);
        s.basis_delay_min = unc(o, "basis_delay_min_ns", s.basis_delay_min);
        s.basis_delay_max = unc(o, "basis_delay_max_ns", s.basis_delay_max);
        s.pockels_delay = ns(o, "pockels_delay_ns", s.pockels_delay);
        s.background_rate = o.value("background_rate_hz", s.background_rate);
        s.dark_rate = o.value("dark_rate_hz", s.dark_rate);
        s.detection_jitter = ns(o, "detection_jitter_ns", s.detection_jitter);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- artifacts on disk -----------------------------------------------------

inline void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruthEvent>& gt) {
  out << "creation_s,detected_mask,alice_basis,bob_basis,charlie_basis,alice_outcome,bob_outcome,charlie_outcome,"
         "trigger_tick,alice_tick,bob_tick,charlie_tick\n";
  char buf[64];
  for (const auto& e : gt) {
    std::snprintf(buf, sizeof buf, "%.12f", e.creation);
    out << buf << ',' << int(e.detected);
    for (int b : e.basis) out << ',' << b;
    for (int o : e.outcome) out << ',' << o;
    out << ',' << e.trigger_tick;
    for (auto t : e.tick) out << ',' << t;
    out << '\n';
  }
}

/// Writes trigger/alice/bob/charlie .ttag files, the two bit records, the
/// ground-truth log and manifest.json into `dir`. Returns the manifest.
inline nlohmann::json write_artifacts(const std::filesystem::path& dir, const RunArtifacts& art,
                                      const SimulationConfig& cfg, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  static const std::array<const char*, 4> names = {"trigger", "alice", "bob", "charlie"};
  nlohmann::json m;
  m["seed"] = seed;
  m["config"] = to_json(cfg);
  for (int i = 0; i < 4; ++i) {
    TtagHeader h;
    h.channel_map[kPlusDetector] = i == 0 ? 0 : 1;
    h.channel_map[kMinusDetector] = i == 0 ? 0 : 2;
    h.channel_map[kTriggerDetector] = i == 0 ? 3 : 0;
    const std::string file = std::string(names[i]) + ".ttag";
    write_ttag((dir / file).string(), art.streams[i], h);
    m["streams"][names[i]] = {{"file", file}, {"records", art.streams[i].size()}};
  }
  if (!art.randy_bits.empty()) {
    write_bit_stream((dir / "randy_bits.bin").string(), art.randy_bits);
    write_bit_stream((dir / "alice_bits.bin").string(), art.alice_bits);
    m["bit_records"] = {{"randy", "randy_bits.bin"}, {"alice", "alice_bits.bin"}, {"bits", art.randy_bits.size()},
                        {"link_delay_ns", art.randy_to_alice_delay * 1e9}};
  }
  {
    std::ofstream gt(dir / "ground_truth.csv");
    write_ground_truth_csv(gt, art.ground_truth);
  }
  std::size_t fourfold = 0;
  for (const auto& e : art.ground_truth) fourfold += e.detected == 7;
  m["ground_truth"] = {{"file", "ground_truth.csv"}, {"events", art.ground_truth.size()}, {"fully_detected", fourfold}};
  m["systematic_delay_ns"] = {art.systematic_delay[0] * 1e9, art.systematic_delay[1] * 1e9, art.systematic_delay[2] * 1e9};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  return m;
}

/// Reads the four streams written by write_artifacts.
inline std::array<TimeTagStream, 4> read_streams(const std::filesystem::path& dir) {
  return {read_ttag((dir / "trigger.ttag").string()), read_ttag((dir / "alice.ttag").string()),
          read_ttag((dir / "bob.ttag").string()), read_ttag((dir / "charlie.ttag").string())};
}

}  // namespace ghzlab
