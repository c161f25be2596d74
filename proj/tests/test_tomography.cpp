#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "ghzlab/tomography.hpp"

using namespace ghzlab;
constexpr double kPi = std::numbers::pi;

namespace {

TomographyDataset ghz_pi_data(double trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return synthesize_dataset(DensityMatrix::pure(ghz_state(kPi)), trials, rng);
}

}  // namespace

TEST(TomographyDataset, KeysAndGroups) {
  EXPECT_EQ(TomographyDataset::key(0), "HHH");
  EXPECT_EQ(TomographyDataset::key(215), "LLL");
  for (int i = 0; i < TomographyDataset::kSettings; ++i) EXPECT_EQ(TomographyDataset::index(TomographyDataset::key(i)), i);
  std::array<int, 27> members{};
  for (int i = 0; i < TomographyDataset::kSettings; ++i) ++members[TomographyDataset::group(i)];
  for (int m : members) EXPECT_EQ(m, 8);
  EXPECT_THROW(TomographyDataset::index("HHX"), MalformedInput);
}

TEST(TomographyDataset, CsvRoundTripAndErrors) {
  const auto d = ghz_pi_data(50, 1);
  std::stringstream s;
  write_tomography_csv(s, d);
  const auto back = read_tomography_csv(s);
  for (int i = 0; i < TomographyDataset::kSettings; ++i) EXPECT_EQ(back.count(i), d.count(i));
  std::istringstream empty("");
  EXPECT_THROW(read_tomography_csv(empty), MalformedInput);
  std::istringstream partial("setting,count\nHHH,3\n");
  EXPECT_THROW(read_tomography_csv(partial), MalformedInput);
}

TEST(Mle, GhzPiFidelityAbove099) {
  const auto res = mle_reconstruct(ghz_pi_data(1e5, 2));
  EXPECT_TRUE(res.converged);
  EXPECT_GT(fidelity(res.rho, ghz_state(kPi)), 0.99);
}

TEST(Mle, LikelihoodNeverDecreases) {
  for (double vis : {1.0, 0.8, 0.3}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(vis * 100));
    const auto d = synthesize_dataset(DensityMatrix::werner(ghz_state(0.4), vis), 300, rng);
    MleOptions opt;
    opt.record_history = true;
    const auto res = mle_reconstruct(d, opt);
    ASSERT_GE(res.log_likelihood_history.size(), 2u);
    for (std::size_t i = 1; i < res.log_likelihood_history.size(); ++i)
      ASSERT_GE(res.log_likelihood_history[i], res.log_likelihood_history[i - 1]) << "iteration " << i << " V=" << vis;
  }
}

TEST(Mle, MaximallyMixedCounts) {
  std::mt19937_64 rng(3);
  const auto d = synthesize_dataset(DensityMatrix::maximally_mixed(), 1e5, rng);
  const auto res = mle_reconstruct(d);
  EXPECT_LT(trace_distance(res.rho, DensityMatrix::maximally_mixed()), 0.02);
}

TEST(Mle, FlatQubitGivesMixedMarginal) {
  const auto src = ghz_pi_data(2000, 4);
  TomographyDataset flat;
  for (int lb = 0; lb < 6; ++lb)
    for (int lc = 0; lc < 6; ++lc) {
      std::uint64_t sum = 0;
      for (int la = 0; la < 6; ++la) sum += src.count(TomographyDataset::index(la, lb, lc));
      for (int la = 0; la < 6; ++la) flat.set(TomographyDataset::index(la, lb, lc), sum);
    }
  const auto res = mle_reconstruct(flat);
  EXPECT_LT((reduced_state(res.rho, Party::alice) - 0.5 * QubitOperator::Identity()).norm(), 0.02);
}

TEST(Mle, PermutationCovariant) {
  std::mt19937_64 rng(5);
  Operator m = Operator::Zero();
  const auto ket = ghz_state(0.9).amplitudes();
  m = 0.7 * ket * ket.adjoint();
  m(1, 1) += 0.2;
  m(2, 2) += 0.1;
  const auto d = synthesize_dataset(DensityMatrix(m), 500, rng);
  const std::array<int, 3> perm{2, 0, 1};
  const auto a = mle_reconstruct(d);
  const auto b = mle_reconstruct(d.permuted(perm));
  EXPECT_LT(trace_distance(DensityMatrix(permute_parties(a.rho.matrix(), perm)), b.rho), 1e-8);
}

TEST(Mle, RejectsBadOptionsAndEmptyData) {
  MleOptions opt;
  opt.tol = 0;
  EXPECT_THROW(mle_reconstruct(ghz_pi_data(10, 1), opt), ConfigError);
  EXPECT_THROW(mle_reconstruct(TomographyDataset{}), Error);
}

TEST(MaxMermin, GhzAnyPhaseGivesFour) {
  for (double phase : {0.0, 1.0, -kPi / 2, kPi})
    EXPECT_NEAR(max_mermin(DensityMatrix::pure(ghz_state(phase))).m_max, 4.0, 1e-6) << phase;
}

TEST(MaxMermin, MixedGivesZero) { EXPECT_NEAR(max_mermin(DensityMatrix::maximally_mixed()).m_max, 0.0, 1e-9); }

TEST(MaxMermin, WernerFamilyIsFourV) {
  for (double v : {0.5, 0.77, 0.9})
    EXPECT_NEAR(max_mermin(DensityMatrix::werner(ghz_state(0.3), v)).m_max, 4.0 * v, 1e-6) << v;
}

TEST(MaxMermin, ReturnedSettingsReproduceValue) {
  const auto rho = DensityMatrix::werner(ghz_state(2.0), 0.8);
  const auto r = max_mermin(rho);
  EXPECT_EQ(r.angles.size(), 6u);
  EXPECT_NEAR(mermin_parameter(rho, r.settings), r.m_max, 1e-12);
}

TEST(MonteCarlo, TinyDataGivesFinitePositiveSigma) {
  MonteCarloOptions opt;
  opt.n_samples = 10;
  const auto r = monte_carlo_errors(ghz_pi_data(5, 6), opt);
  EXPECT_GT(r.sigma, 0.0);
  EXPECT_TRUE(std::isfinite(r.sigma));
  opt.n_samples = 9;
  EXPECT_THROW(monte_carlo_errors(ghz_pi_data(5, 6), opt), ConfigError);
}

TEST(MonteCarlo, DoublingCountsScalesSigmaByRootHalf) {
  std::mt19937_64 rng(7);
  const auto d = synthesize_dataset(DensityMatrix::werner(ghz_state(kPi), 0.8), 400, rng);
  MonteCarloOptions opt;
  opt.n_samples = 100;
  opt.seed = 8;
  const double s1 = monte_carlo_errors(d, opt).sigma;
  const double s2 = monte_carlo_errors(d.scaled(2), opt).sigma;
  EXPECT_NEAR(s2 / s1, 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
}
