#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "ghzlab/counts.hpp"
#include "oracles.hpp"

using namespace ghzlab;
constexpr double kPi = std::numbers::pi;

namespace {

CountsTable table_s4() { return read_counts_csv(std::string(GHZLAB_TEST_DATA_DIR) + "/table_s4.csv"); }

std::map<std::string, std::uint64_t> as_keys(const CountsTable& t) {
  std::map<std::string, std::uint64_t> m;
  for (int c = 0; c < CountsTable::kCells; ++c) m[CountsTable::key(c)] = t.cells()[c];
  return m;
}

CountsTable sampled_table(const DensityMatrix& rho, std::uint64_t per_triple, std::mt19937_64& rng) {
  CountsTable t;
  const auto ms = standard_mermin_settings();
  for (int tr = 0; tr < 8; ++tr) {
    const auto p = outcome_probabilities(rho, triple_settings(ms, tr));
    std::discrete_distribution<int> d(p.begin(), p.end());
    for (std::uint64_t i = 0; i < per_triple; ++i) t.add(tr, d(rng));
  }
  return t;
}

CountsTable expected_table(const DensityMatrix& rho, double per_triple) {
  CountsTable t;
  const auto ms = standard_mermin_settings();
  for (int tr = 0; tr < 8; ++tr) {
    const auto p = outcome_probabilities(rho, triple_settings(ms, tr));
    for (int o = 0; o < 8; ++o) t.set(tr, o, static_cast<std::uint64_t>(std::llround(p[o] * per_triple)));
  }
  return t;
}

}  // namespace

TEST(CountsTable, KeysRoundTrip) {
  for (int c = 0; c < CountsTable::kCells; ++c) EXPECT_EQ(CountsTable::cell(CountsTable::key(c)), c);
  EXPECT_EQ(CountsTable::key(0), "RRR");
  EXPECT_EQ(CountsTable::key(CountsTable::cell(triple_index(1, 1, 1), 7)), "AAA");
  EXPECT_THROW(CountsTable::cell("RRX"), MalformedInput);
  EXPECT_THROW(CountsTable::cell("RR"), MalformedInput);
}

TEST(CountsTable, CsvRoundTrip) {
  const auto t = table_s4();
  EXPECT_EQ(t.total(), 2472u);
  std::stringstream s;
  write_counts_csv(s, t);
  EXPECT_EQ(read_counts_csv(s), t);
}

TEST(CountsTable, CsvErrors) {
  std::istringstream empty("");
  EXPECT_THROW(read_counts_csv(empty), MalformedInput);
  std::istringstream no_header("RRR,1\n");
  EXPECT_THROW(read_counts_csv(no_header), MalformedInput);
  std::istringstream partial("setting,count\nRRR,1\n");
  EXPECT_THROW(read_counts_csv(partial), MalformedInput);
  std::stringstream dup;
  write_counts_csv(dup, CountsTable{});
  dup.seekp(0, std::ios::end);
  dup << "RRR,5\n";
  EXPECT_THROW(read_counts_csv(dup), MalformedInput);
  std::stringstream neg;
  write_counts_csv(neg, CountsTable{});
  std::string text = neg.str();
  text.replace(text.find("RRR,0"), 5, "RRR,-3");
  std::istringstream bad(text);
  EXPECT_THROW(read_counts_csv(bad), MalformedInput);
  EXPECT_THROW(read_counts_csv(std::string("/nonexistent/table.csv")), MalformedInput);
}

TEST(Correlation, TableS4AbcGolden) {
  const auto e = correlation_from_counts(table_s4(), 0);
  EXPECT_EQ(e.n_events, 55u + 9 + 18 + 92 + 9 + 53 + 77 + 15);
  EXPECT_NEAR(e.value, 0.6890, 5e-5);
  EXPECT_NEAR(e.sigma, 0.0400, 5e-5);
}

TEST(Correlation, TableS4PublishedCaptionValues) {
  const auto all = all_correlations(table_s4());
  // Published values that the bundled counts reproduce.
  EXPECT_NEAR(all[triple_index(0, 0, 1)].value, -0.2444, 5e-5);
  EXPECT_NEAR(all[triple_index(0, 0, 1)].sigma, 0.0546, 5e-5);
  EXPECT_NEAR(all[triple_index(0, 1, 0)].value, -0.2665, 5e-5);
  EXPECT_NEAR(all[triple_index(0, 1, 0)].sigma, 0.0540, 5e-5);
  EXPECT_NEAR(all[triple_index(0, 1, 1)].value, -0.7101, 5e-5);
  EXPECT_NEAR(all[triple_index(0, 1, 1)].sigma, 0.0424, 5e-5);
  EXPECT_NEAR(all[triple_index(1, 0, 0)].value, -0.1900, 5e-5);
  EXPECT_NEAR(all[triple_index(1, 0, 1)].value, -0.7176, 5e-5);
  EXPECT_NEAR(all[triple_index(1, 0, 1)].sigma, 0.0378, 5e-5);
  EXPECT_NEAR(all[triple_index(1, 1, 1)].value, 0.0737, 5e-5);
  EXPECT_NEAR(all[triple_index(1, 1, 1)].sigma, 0.0591, 5e-5);
}

TEST(Correlation, TableS4CountsOfAPrimeBPrimeC) {
  // 48 even-parity and 240 odd-parity events in the bundled table.
  const auto e = correlation_from_counts(table_s4(), triple_index(1, 1, 0));
  EXPECT_EQ(e.n_plus, 48u);
  EXPECT_EQ(e.n_minus, 240u);
  EXPECT_NEAR(e.value, -192.0 / 288.0, 1e-12);
  EXPECT_NEAR(e.sigma, std::sqrt(4.0 * 48 * 240 / (288.0 * 288 * 288)), 1e-12);
}

TEST(Correlation, MerminTriplesSumTo1232Events) {
  const auto t = table_s4();
  std::uint64_t n = 0;
  for (const auto& term : mermin_terms(MerminForm::m)) n += correlation_from_counts(t, term.triple).n_events;
  EXPECT_EQ(n, 1232u);
}

TEST(Correlation, TrivialTables) {
  CountsTable t;
  for (int c = 0; c < CountsTable::kCells; ++c) t.set(CountsTable::key(c), 7);
  for (const auto& e : all_correlations(t)) EXPECT_NEAR(e.value, 0.0, 1e-15);

  CountsTable d;
  d.set("RRR", 10);
  const auto e = correlation_from_counts(d, 0);
  EXPECT_EQ(e.value, 1.0);
  EXPECT_EQ(e.sigma, 0.0);
  EXPECT_NEAR(correlation_from_counts(d, 0, {true}).sigma, 0.2, 1e-15);
  EXPECT_THROW(correlation_from_counts(d, 1), EmptySetting);
}

TEST(Mermin, TableS4MatchesKeyOracle) {
  const auto t = table_s4();
  for (bool primed : {false, true}) {
    const auto r = mermin_from_counts(t, primed ? MerminForm::m_prime : MerminForm::m);
    const auto [value, sigma] = oracle::mermin_from_keys(as_keys(t), primed);
    EXPECT_NEAR(r.m_value, value, 1e-12);
    EXPECT_NEAR(r.m_sigma, sigma, 1e-12);
  }
}

TEST(Mermin, TableS4FrozenValues) {
  const auto t = table_s4();
  const auto m = mermin_from_counts(t, MerminForm::m);
  EXPECT_NEAR(m.m_value, 2.7835, 5e-5);
  EXPECT_NEAR(m.m_sigma, 0.0822, 5e-5);
  const auto mp = mermin_from_counts(t, MerminForm::m_prime);
  EXPECT_NEAR(mp.m_value, 0.7746, 5e-5);
  EXPECT_NEAR(mp.m_sigma, 0.1113, 5e-5);
  EXPECT_GT(m.violation_sigmas(), 9.0);
}

TEST(Mermin, FormsShareNoCorrelation) {
  const auto t = table_s4();
  const auto a = mermin_from_counts(t, MerminForm::m), b = mermin_from_counts(t, MerminForm::m_prime);
  std::array<int, 8> used{};
  for (int k = 0; k < 4; ++k) ++used[a.triples[k]], ++used[b.triples[k]];
  for (int u : used) EXPECT_EQ(u, 1);
}

TEST(Mermin, IdealGhzTableGivesFour) {
  const auto rho = DensityMatrix::pure(ghz_state(-kPi / 2));
  const auto r = mermin_from_counts(expected_table(rho, 1000), MerminForm::m);
  EXPECT_NEAR(r.m_value, 4.0, 1e-12);
  std::mt19937_64 rng(1);
  EXPECT_NEAR(mermin_from_counts(sampled_table(rho, 1000, rng), MerminForm::m).m_value, 4.0, 1e-12);
}

TEST(Correlation, ConvergesToBornValueAsOneOverRootN) {
  const auto rho = DensityMatrix::werner(ghz_state(-kPi / 2), 0.7);
  const auto ms = standard_mermin_settings();
  std::mt19937_64 rng(17);
  std::vector<double> scaled;
  for (std::uint64_t n : {100ull, 10000ull, 1000000ull}) {
    double ss = 0;
    const int reps = n == 1000000 ? 3 : 20;
    for (int r = 0; r < reps; ++r) {
      // Sample only one triple to keep the 10^6 case fast.
      const auto p = outcome_probabilities(rho, triple_settings(ms, 0));
      std::discrete_distribution<int> d(p.begin(), p.end());
      CountsTable t;
      for (std::uint64_t i = 0; i < n; ++i) t.add(0, d(rng));
      const double err = correlation_from_counts(t, 0).value - correlation(rho, triple_settings(ms, 0));
      ss += err * err;
    }
    scaled.push_back(std::sqrt(ss / reps) * std::sqrt(static_cast<double>(n)));
  }
  // sqrt(1 - E^2) = 0.714 for E = 0.7; rms error * sqrt(N) stays near it.
  for (double s : scaled) {
    EXPECT_GT(s, 0.714 / 3.0);
    EXPECT_LT(s, 0.714 * 3.0);
  }
}

TEST(Correlation, SigmaAgreesWithPoissonBootstrap) {
  const auto t = table_s4();
  std::mt19937_64 rng(99);
  for (int tr = 0; tr < 8; ++tr) {
    const auto e = correlation_from_counts(t, tr);
    std::poisson_distribution<std::uint64_t> plus(static_cast<double>(e.n_plus)), minus(static_cast<double>(e.n_minus));
    double s = 0, ss = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const double p = static_cast<double>(plus(rng)), m = static_cast<double>(minus(rng));
      const double v = (p - m) / (p + m);
      s += v, ss += v * v;
    }
    const double boot = std::sqrt(ss / n - (s / n) * (s / n));
    EXPECT_NEAR(boot / e.sigma, 1.0, 0.10) << triple_label(tr);
  }
}

TEST(PhaseScan, PicksMinusHalfPi) {
  std::vector<PhaseScanPoint> scan;
  for (double phase : {-kPi / 2, 0.0, kPi / 2, kPi})
    scan.push_back({phase, expected_table(DensityMatrix::pure(ghz_state(phase)), 1000)});
  const auto r = phase_scan_objective(scan);
  EXPECT_DOUBLE_EQ(r.phase, -kPi / 2);
  EXPECT_FALSE(r.flat_warning);
  EXPECT_NEAR(r.objective, 1.0, 1e-12);
}

TEST(PhaseScan, SingleTableWarnsAndEmptyThrows) {
  std::vector<PhaseScanPoint> one{{0.3, expected_table(DensityMatrix::pure(ghz_state(0.3)), 100)}};
  const auto r = phase_scan_objective(one);
  EXPECT_TRUE(r.flat_warning);
  EXPECT_DOUBLE_EQ(r.phase, 0.3);
  std::vector<PhaseScanPoint> zeros{{0.0, CountsTable{}}, {1.0, CountsTable{}}};
  EXPECT_THROW(phase_scan_objective(zeros), DegenerateScan);
  std::vector<PhaseScanPoint> flat{{0.0, expected_table(DensityMatrix::maximally_mixed(), 100)},
                                   {1.0, expected_table(DensityMatrix::maximally_mixed(), 100)}};
  EXPECT_THROW(phase_scan_objective(flat), DegenerateScan);
}

TEST(Report, JsonFields) {
  const auto j = mermin_report_json(table_s4(), MerminForm::m);
  EXPECT_EQ(j["form"], "M");
  EXPECT_EQ(j["correlations"].size(), 8u);
  EXPECT_EQ(j["total_events"], 2472);
  int in_form = 0;
  for (const auto& c : j["correlations"]) in_form += c["in_form"].get<bool>();
  EXPECT_EQ(in_form, 4);
}
