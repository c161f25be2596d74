#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "ghzlab/simulator.hpp"

using namespace ghzlab;

namespace {

SimulationConfig nominal_config(double duration, double visibility = 0.7) {
  SimulationConfig c;
  c.stations = published_stations();
  c.source.visibility = visibility;
  c.duration = duration;
  c.background_scale = 0.01;
  return c;
}

SimulationConfig ideal_config(double duration) {
  auto c = nominal_config(duration, 1.0);
  for (auto& s : c.stations) {
    s.efficiency = 1.0;
    s.dark_rate = 0.0;
  }
  c.source.trigger_dark_rate = 0.0;
  c.background_scale = 0.0;
  return c;
}

std::size_t fully_detected(const RunArtifacts& a) {
  std::size_t n = 0;
  for (const auto& e : a.ground_truth) n += e.detected == 7;
  return n;
}

DensityMatrix random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Operator g;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) g(i, j) = Complex(n(rng), n(rng));
  // Mix towards a GHZ state so that the Mermin value is not buried in noise.
  const Ket k = ghz_state(n(rng)).amplitudes();
  Operator m = g * g.adjoint();
  m = 0.4 * m / m.trace().real() + 0.6 * k * k.adjoint();
  return DensityMatrix(m);
}

}  // namespace

TEST(Config, Validation) {
  auto c = nominal_config(1.0);
  EXPECT_NO_THROW(c.validate());
  c.stations[1].efficiency = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = nominal_config(1.0);
  c.source.visibility = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = nominal_config(-1.0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = nominal_config(1.0);
  c.stations[0].basis_delay_min.value = 5e-6;  // above the maximum
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = nominal_config(12.5, 0.66);
  c.stations[2].switching = SwitchingMode::periodic;
  const auto j = to_json(c).flatten();
  const auto back = to_json(simulation_config_from_json(to_json(c))).flatten();
  ASSERT_EQ(j.size(), back.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    ASSERT_TRUE(back.contains(it.key())) << it.key();
    if (it->is_number())
      EXPECT_NEAR(back[it.key()].get<double>(), it->get<double>(), 1e-12 * std::max(1.0, std::abs(it->get<double>()))) << it.key();
    else
      EXPECT_EQ(back[it.key()], *it) << it.key();
  }
  EXPECT_THROW(simulation_config_from_json(nlohmann::json{{"duration_s", "x"}}), ConfigError);
}

TEST(Run, ZeroDurationIsEmpty) {
  const auto a = run_experiment(nominal_config(0.0), 1);
  for (const auto& s : a.streams) EXPECT_TRUE(s.empty());
  EXPECT_TRUE(a.ground_truth.empty());
}

TEST(Run, Deterministic) {
  const auto a = run_experiment(nominal_config(5.0), 3);
  const auto b = run_experiment(nominal_config(5.0), 3);
  const auto c = run_experiment(nominal_config(5.0), 4);
  EXPECT_EQ(a.streams, b.streams);
  EXPECT_EQ(a.randy_bits, b.randy_bits);
  EXPECT_NE(a.streams[0], c.streams[0]);
}

TEST(Run, StreamsSortedAndTagged) {
  const auto a = run_experiment(nominal_config(5.0), 5);
  for (const auto& s : a.streams) EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  for (const auto& r : a.streams[0]) ASSERT_EQ(r.channel(), kTriggerDetector);
  for (int i = 1; i < 4; ++i)
    for (const auto& r : a.streams[i]) ASSERT_EQ(r.outcome_bit(), outcome_bit_of(r));
}

TEST(Run, FourFoldRateAtPublishedParameters) {
  const double t = 300.0;
  const auto a = run_experiment(nominal_config(t), 6);
  const double analytic = 39.0 * 0.14 * 0.33 * 0.32 * t;
  const double n = static_cast<double>(fully_detected(a));
  EXPECT_NEAR(n / t, 0.5, 0.1);
  EXPECT_NEAR(n, analytic, 3.0 * std::sqrt(analytic));
}

TEST(Run, SinglesRatesMatchConfiguration) {
  const double t = 100.0;
  const auto cfg = nominal_config(t);
  const auto a = run_experiment(cfg, 7);
  const double horizon = t + 5e-6;
  const double trig = (39.0 + cfg.source.trigger_background_rate * 0.01 + cfg.source.trigger_dark_rate) * horizon;
  EXPECT_NEAR(static_cast<double>(a.streams[0].size()), trig, 3.0 * std::sqrt(trig));
  for (int s = 0; s < 3; ++s) {
    const auto& st = cfg.stations[s];
    const double want = (39.0 * st.efficiency + st.background_rate * 0.01 + 2 * st.dark_rate) * horizon;
    EXPECT_NEAR(static_cast<double>(a.streams[s + 1].size()), want, 3.0 * std::sqrt(want)) << st.name;
  }
}

TEST(Run, RandyToAliceLinkIsLossless) {
  const auto a = run_experiment(nominal_config(3.0), 8);
  ASSERT_EQ(a.randy_bits.size(), 3000000u);
  const auto r = verify_transport(a.randy_bits, a.alice_bits, a.randy_to_alice_delay);
  EXPECT_EQ(r.errors, 0u);
  EXPECT_GT(r.compared, a.randy_bits.size() - 10);
  EXPECT_NEAR(bit_bias(a.randy_bits), 0.5, 0.005);
}

TEST(Run, AliceBasisIsRandysBitAfterTheLink) {
  const auto cfg = nominal_config(2.0);
  const auto a = run_experiment(cfg, 9);
  const auto& st = cfg.stations[0];
  const double latency = st.basis_delay_min.value;
  std::size_t checked = 0;
  for (const auto& e : a.ground_truth) {
    const double pc = e.creation + st.photon_delay.value + a.systematic_delay[0] - st.measurement_delay;
    const double sampled = pc - cfg.pockels_settle - latency - a.randy_bits.start_time();
    if (sampled < 0) continue;
    const auto k = static_cast<std::size_t>(std::floor(sampled / a.randy_bits.sample_period()));
    if (k >= a.randy_bits.size()) continue;
    ASSERT_EQ(e.basis[0], a.randy_bits[k] ? 1 : 0);
    ++checked;
  }
  EXPECT_GT(checked, 60u);
}

TEST(Pipeline, OffsetsRecovered) {
  const auto cfg = nominal_config(60.0);
  const auto a = run_experiment(cfg, 10);
  const auto r = analyze_run(a);
  for (int s = 0; s < 3; ++s)
    EXPECT_NEAR(r.offsets[s], cfg.stations[s].photon_delay.value + a.systematic_delay[s] - cfg.source.trigger_delay, 0.5e-9);
}

TEST(Pipeline, FindsEveryFullyDetectedEvent) {
  const auto a = run_experiment(nominal_config(120.0), 11);
  const auto r = analyze_run(a);
  const auto n = fully_detected(a);
  EXPECT_GE(r.events.size(), n);
  EXPECT_LE(r.events.size(), n + 2);
  EXPECT_EQ(r.counts.total(), r.events.size());
}

TEST(Pipeline, ScheduleTaggingAgreesWithLatchedBits) {
  const auto cfg = nominal_config(120.0);
  const auto a = run_experiment(cfg, 12);
  const auto r = analyze_run(a);
  const auto scheduled = tag_outcomes(r.events, station_latches(cfg, 12));
  std::uint64_t diff = 0;
  for (int c = 0; c < CountsTable::kCells; ++c)
    diff += static_cast<std::uint64_t>(std::abs(static_cast<long long>(scheduled.cells()[c]) - static_cast<long long>(r.counts.cells()[c])));
  EXPECT_LE(diff, 2u);
}

TEST(Pipeline, IdealStateGivesFour) {
  const auto a = run_experiment(ideal_config(30.0), 13);
  const auto m = mermin_from_counts(analyze_run(a).counts, MerminForm::m);
  EXPECT_NEAR(m.m_value, 4.0, 1e-12);
}

TEST(Pipeline, ClosureForRandomStates) {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 5; ++k) {
    auto cfg = ideal_config(40.0);
    cfg.source.state = random_state(rng);
    const auto m = mermin_from_counts(analyze_run(run_experiment(cfg, 100 + k)).counts, MerminForm::m);
    const double want = mermin_parameter(*cfg.source.state, standard_mermin_settings());
    EXPECT_NEAR(m.m_value, want, 3.0 * m.m_sigma) << "state " << k;
  }
}

TEST(Pipeline, PublishedStatisticsBand) {
  // |E| = 0.69 on the four Mermin triples; ~2,500 events.
  auto cfg = ideal_config(65.0);
  cfg.source.visibility = 0.69;
  const auto r = analyze_run(run_experiment(cfg, 15));
  EXPECT_NEAR(static_cast<double>(r.counts.total()), 2535.0, 200.0);
  const auto m = mermin_from_counts(r.counts, MerminForm::m);
  EXPECT_GE(m.m_value, 2.5);
  EXPECT_LE(m.m_value, 3.0);
}

TEST(Schedules, PeriodicStationAndDeterminism) {
  auto st = published_stations()[1];
  st.switching = SwitchingMode::periodic;
  const auto s = basis_schedule(st, 1.0, 1);
  EXPECT_EQ(s.mode(), SwitchingMode::periodic);
  EXPECT_DOUBLE_EQ(s.sample_period(), 1e-6);
  st.switching = SwitchingMode::qrng;
  EXPECT_EQ(basis_schedule(st, 1.0, 5).record(0, 1e-3), basis_schedule(st, 1.0, 5).record(0, 1e-3));
}

TEST(Scenarios, Suites) {
  EXPECT_THROW(scenario_suite("nope"), UnknownScenario);
  const auto main = scenario_suite("main_run");
  ASSERT_EQ(main.size(), 1u);
  EXPECT_DOUBLE_EQ(main[0].config.duration, 4740.0);
  const auto scan = scenario_suite("phase_scan");
  ASSERT_EQ(scan.size(), 3u);
  EXPECT_EQ(scan[0].expected.sign_abc, +1);
  EXPECT_EQ(scan[1].expected.sign_abc, -1);
  EXPECT_EQ(scan[2].expected.form, MerminForm::m_prime);
  for (const auto& s : scan) EXPECT_GT(s.expected.analytic_mermin, 2.0) << s.label;
  const auto rvd = scenario_suite("random_vs_deterministic");
  ASSERT_EQ(rvd.size(), 2u);
  for (const auto& s : rvd.back().config.stations) EXPECT_EQ(s.switching, SwitchingMode::periodic);
  for (const auto& s : rvd) EXPECT_GT(s.expected.analytic_mermin, 2.0);
}

TEST(Artifacts, WriteAndReadBack) {
  const auto dir = std::filesystem::temp_directory_path() / "ghzlab_artifacts_test";
  std::filesystem::remove_all(dir);
  const auto cfg = nominal_config(3.0);
  const auto a = run_experiment(cfg, 16);
  const auto m1 = write_artifacts(dir, a, cfg, 16);
  EXPECT_EQ(read_streams(dir), a.streams);
  EXPECT_EQ(read_bit_stream((dir / "randy_bits.bin").string()), a.randy_bits);
  const auto m2 = write_artifacts(dir / "again", run_experiment(cfg, 16), cfg, 16);
  EXPECT_EQ(m1, m2);
  std::filesystem::remove_all(dir);
}
