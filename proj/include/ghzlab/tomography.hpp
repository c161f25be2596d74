#pragma once

// Three-qubit maximum-likelihood state tomography from 216 projective
// settings (every combination of H, V, D, A, R, L on each photon).

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ghzlab/counts.hpp"
#include "ghzlab/errors.hpp"
#include "ghzlab/quantum.hpp"
#include "ghzlab/random.hpp"

namespace ghzlab {

/// Letters in their canonical order; letter index / 2 is the basis
/// (0 = H/V, 1 = D/A, 2 = R/L) and letter index % 2 selects the -1 outcome.
inline constexpr std::array<char, 6> kTomographyLetters = {'H', 'V', 'D', 'A', 'R', 'L'};

inline int tomography_letter_index(char c) {
  for (int i = 0; i < 6; ++i)
    if (kTomographyLetters[i] == c) return i;
  throw MalformedInput(std::string("tomography letter '") + c + "' not in {H,V,D,A,R,L}");
}

/// Single-photon ket for a tomography letter.
inline Eigen::Vector2cd letter_ket(int letter) {
  const double s = 1.0 / std::numbers::sqrt2;
  switch (letter) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {s, s};
    case 3: return {s, -s};
    case 4: return {Complex(s), Complex(0, s)};
    case 5: return {Complex(s), Complex(0, -s)};
  }
  throw MalformedInput("letter index out of range");
}

class TomographyDataset {
 public:
  static constexpr int kSettings = 216;
  static constexpr int kGroups = 27;

  TomographyDataset() { counts_.fill(0); }

  static constexpr int index(int la, int lb, int lc) noexcept { return 36 * la + 6 * lb + lc; }

  static int index(std::string_view key) {
    if (key.size() != 3) throw MalformedInput("tomography setting '" + std::string(key) + "' must have 3 letters");
    return index(tomography_letter_index(key[0]), tomography_letter_index(key[1]),
                 tomography_letter_index(key[2]));
  }

  static std::string key(int idx) {
    return {kTomographyLetters[idx / 36], kTomographyLetters[(idx / 6) % 6], kTomographyLetters[idx % 6]};
  }

  /// Basis-triple group (27 of them) that a setting belongs to.
  static constexpr int group(int idx) noexcept {
    return 9 * ((idx / 36) / 2) + 3 * (((idx / 6) % 6) / 2) + (idx % 6) / 2;
  }

  std::uint64_t count(int idx) const { return counts_[idx]; }
  std::uint64_t at(std::string_view k) const { return counts_[index(k)]; }
  void set(int idx, std::uint64_t n) { counts_[idx] = n; }
  void set(std::string_view k, std::uint64_t n) { counts_[index(k)] = n; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  /// Moves the data of photon k into slot perm[k].
  TomographyDataset permuted(const std::array<int, 3>& perm) const {
    TomographyDataset out = *this;
    for (int idx = 0; idx < kSettings; ++idx) {
      const std::array<int, 3> l = {idx / 36, (idx / 6) % 6, idx % 6};
      std::array<int, 3> m{};
      for (int k = 0; k < 3; ++k) m[perm[k]] = l[k];
      out.counts_[index(m[0], m[1], m[2])] = counts_[idx];
    }
    return out;
  }

  TomographyDataset scaled(std::uint64_t factor) const {
    TomographyDataset out = *this;
    for (auto& c : out.counts_) c *= factor;
    return out;
  }

  double seconds_per_setting = 5.0;
  int repetitions = 10;

 private:
  std::array<std::uint64_t, kSettings> counts_;
};

/// Rank-1 measurement kets, one per setting, in dataset order.
inline const std::array<Ket, TomographyDataset::kSettings>& tomography_kets() {
  static const auto kets = [] {
    std::array<Ket, TomographyDataset::kSettings> out;
    for (int idx = 0; idx < TomographyDataset::kSettings; ++idx) {
      const auto a = letter_ket(idx / 36), b = letter_ket((idx / 6) % 6), c = letter_ket(idx % 6);
      for (int i = 0; i < kDim; ++i) out[idx](i) = a(i >> 2) * b((i >> 1) & 1) * c(i & 1);
    }
    return out;
  }();
  return kets;
}

/// Poisson counts with means trials_per_setting * Tr(rho Pi_j).
template <class Rng>
TomographyDataset synthesize_dataset(const DensityMatrix& rho, double trials_per_setting, Rng& rng) {
  TomographyDataset data;
  const auto& kets = tomography_kets();
  for (int j = 0; j < TomographyDataset::kSettings; ++j) {
    const double p = std::max(0.0, (kets[j].adjoint() * rho.matrix() * kets[j])(0, 0).real());
    const double mean = trials_per_setting * p;
    if (mean > 0.0) {
      std::poisson_distribution<std::uint64_t> pois(mean);
      data.set(j, pois(rng));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------

struct MleOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  double probability_floor = 1e-12;
  bool record_history = false;
};

struct ReconstructionResult {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Iterations in which some p_j had to be floored.
  int regularized_iterations = 0;
  /// Iterations in which the plain R.rho.R step lowered the likelihood and a
  /// diluted step was taken instead.
  int diluted_steps = 0;
  std::vector<double> log_likelihood_history;
};

namespace detail {

struct MleProblem {
  std::array<double, TomographyDataset::kSettings> freq{};
  int active_groups = 0;

  explicit MleProblem(const TomographyDataset& data) {
    std::array<std::uint64_t, TomographyDataset::kGroups> totals{};
    for (int j = 0; j < TomographyDataset::kSettings; ++j) totals[TomographyDataset::group(j)] += data.count(j);
    for (auto t : totals) active_groups += t > 0;
    if (active_groups == 0) throw InsufficientData("tomography dataset has no counts");
    for (int j = 0; j < TomographyDataset::kSettings; ++j) {
      const auto t = totals[TomographyDataset::group(j)];
      freq[j] = t ? static_cast<double>(data.count(j)) / static_cast<double>(t) : 0.0;
    }
  }

  double log_likelihood(const Operator& rho, double floor) const {
    const auto& kets = tomography_kets();
    double ll = 0.0;
    for (int j = 0; j < TomographyDataset::kSettings; ++j) {
      if (freq[j] == 0.0) continue;
      const double p = (kets[j].adjoint() * rho * kets[j])(0, 0).real();
      ll += freq[j] * std::log(std::max(p, floor));
    }
    return ll;
  }

  /// R(rho) / active_groups; equals the identity at the fixed point.
  Operator r_operator(const Operator& rho, double floor, bool& floored) const {
    const auto& kets = tomography_kets();
    Operator r = Operator::Zero();
    for (int j = 0; j < TomographyDataset::kSettings; ++j) {
      if (freq[j] == 0.0) continue;
      double p = (kets[j].adjoint() * rho * kets[j])(0, 0).real();
      if (p < floor) {
        p = floor;
        floored = true;
      }
      r.noalias() += (freq[j] / p) * (kets[j] * kets[j].adjoint());
    }
    return r / static_cast<double>(active_groups);
  }
};

inline Operator normalized_sandwich(const Operator& m, const Operator& rho) {
  Operator next = m * rho * m.adjoint();
  next = 0.5 * (next + next.adjoint()).eval();
  return next / next.trace().real();
}

}  // namespace detail

/// Iterative R.rho.R maximum-likelihood reconstruction.
///
/// Frequencies are normalized within each of the 27 basis triples. Each step
/// is the plain update rho -> N[R rho R]; if that would lower the likelihood
/// the step is diluted, rho -> N[(I + e R) rho (I + e R)] with e halved until
/// the likelihood does not decrease. Stops when the largest entry change is
/// below `tol`.
inline ReconstructionResult mle_reconstruct(const TomographyDataset& data, const MleOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw ConfigError("tomography tolerance must be positive");
  const detail::MleProblem prob(data);
  Operator rho = Operator::Identity() / static_cast<double>(kDim);
  double ll = prob.log_likelihood(rho, opt.probability_floor);

  ReconstructionResult res{DensityMatrix::maximally_mixed()};
  if (opt.record_history) res.log_likelihood_history.push_back(ll);

  for (int it = 1; it <= opt.max_iter; ++it) {
    bool floored = false;
    const Operator r = prob.r_operator(rho, opt.probability_floor, floored);
    res.regularized_iterations += floored;

    Operator next = detail::normalized_sandwich(r, rho);
    double next_ll = prob.log_likelihood(next, opt.probability_floor);
    if (next_ll < ll) {
      ++res.diluted_steps;
      double eps = 1.0;
      bool accepted = false;
      for (int k = 0; k < 60; ++k, eps *= 0.5) {
        const Operator m = Operator::Identity() + eps * r;
        next = detail::normalized_sandwich(m, rho);
        next_ll = prob.log_likelihood(next, opt.probability_floor);
        if (next_ll >= ll) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // No ascent direction left at double precision.
        res.iterations = it;
        res.converged = true;
        break;
      }
    }
    const double change = (next - rho).cwiseAbs().maxCoeff();
    rho = next;
    ll = next_ll;
    res.iterations = it;
    if (opt.record_history) res.log_likelihood_history.push_back(ll);
    if (change < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.rho = DensityMatrix(rho);
  res.log_likelihood = ll;
  return res;
}

// ---------------------------------------------------------------------------

enum class MerminSearch { equatorial, full_sphere };

struct MaxMerminOptions {
  MerminSearch search = MerminSearch::equatorial;
  int starts = 32;
  std::uint64_t seed = 20130101;
  int max_evals_per_start = 4000;
  double simplex_size_tol = 1e-10;
};

struct MaxMerminResult {
  double m_max = 0.0;
  /// 6 angles (equatorial) or 12 polar/azimuth pairs (full sphere), ordered
  /// a, a', b, b', c, c'.
  std::vector<double> angles;
  MerminSettings settings = standard_mermin_settings();
};

inline MerminSettings mermin_settings_from_angles(const std::vector<double>& x, MerminSearch search) {
  auto dir = [&](int k) {
    return search == MerminSearch::equatorial ? MeasurementSetting::equatorial(x[k])
                                              : MeasurementSetting::bloch(x[2 * k], x[2 * k + 1]);
  };
  return {PartySettings{dir(0), dir(1)}, PartySettings{dir(2), dir(3)}, PartySettings{dir(4), dir(5)}};
}

namespace detail {

struct SimplexObjective {
  const DensityMatrix* rho;
  MerminSearch search;
  std::vector<double> buf;
};

inline double negative_mermin(const gsl_vector* v, void* params) {
  auto* obj = static_cast<SimplexObjective*>(params);
  for (std::size_t i = 0; i < v->size; ++i) obj->buf[i] = gsl_vector_get(v, i);
  return -mermin_parameter(*obj->rho, mermin_settings_from_angles(obj->buf, obj->search));
}

/// Nelder-Mead (GSL nmsimplex2) from `start`; returns the best point found.
inline std::pair<double, std::vector<double>> simplex_maximize(SimplexObjective& obj, std::vector<double> start,
                                                               double step, int max_evals, double size_tol) {
  const std::size_t n = start.size();
  gsl_multimin_function f{&negative_mermin, n, &obj};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, start[i]);
  gsl_vector_set_all(ss, step);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &f, x, ss);
  for (int it = 0; it < max_evals; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) break;
  }
  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = gsl_vector_get(s->x, i);
  const double value = -s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return {value, std::move(best)};
}

}  // namespace detail

/// Largest Mermin parameter reachable with local two-setting analyzers.
///
/// Multi-start Nelder-Mead over the per-party setting angles, followed by a
/// restart from the best point with a small simplex.
inline MaxMerminResult max_mermin(const DensityMatrix& rho, const MaxMerminOptions& opt = {}) {
  const std::size_t n = opt.search == MerminSearch::equatorial ? 6 : 12;
  detail::SimplexObjective obj{&rho, opt.search, std::vector<double>(n)};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> cosine(-1.0, 1.0);

  MaxMerminResult best;
  best.m_max = -1.0;
  for (int s = 0; s < std::max(1, opt.starts); ++s) {
    std::vector<double> start(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (opt.search == MerminSearch::full_sphere && k % 2 == 0)
        start[k] = std::acos(cosine(rng));
      else
        start[k] = angle(rng);
    }
    auto [value, x] = detail::simplex_maximize(obj, std::move(start), 0.5, opt.max_evals_per_start,
                                               opt.simplex_size_tol);
    if (value > best.m_max) {
      best.m_max = value;
      best.angles = std::move(x);
    }
  }
  for (double step : {1e-2, 1e-4}) {
    auto [value, x] = detail::simplex_maximize(obj, best.angles, step, opt.max_evals_per_start,
                                               opt.simplex_size_tol * 1e-2);
    if (value > best.m_max) {
      best.m_max = value;
      best.angles = std::move(x);
    }
  }
  best.settings = mermin_settings_from_angles(best.angles, opt.search);
  best.m_max = mermin_parameter(rho, best.settings);
  return best;
}

// ---------------------------------------------------------------------------

enum class TomographyStatistic { fidelity, max_mermin };

struct MonteCarloOptions {
  int n_samples = 100;
  std::uint64_t seed = 1;
  TomographyStatistic statistic = TomographyStatistic::fidelity;
  /// Fidelity target; defaults to GHZ with phase pi.
  std::optional<PolarizationKet> target;
  MleOptions mle{1e-8, 10000, 1e-12, false};
  MaxMerminOptions mermin{};
  unsigned threads = 1;
};

struct MonteCarloResult {
  double mean = 0.0;
  double sigma = 0.0;
  int not_converged = 0;
  std::vector<double> samples;
};

/// Poisson-resamples every count, reconstructs each resample and reports the
/// sample mean and standard deviation of the chosen statistic. Resample i
/// draws from its own seeded stream, so results do not depend on `threads`.
inline MonteCarloResult monte_carlo_errors(const TomographyDataset& data, const MonteCarloOptions& opt) {
  if (opt.n_samples < 10) throw ConfigError("Monte Carlo error estimation needs at least 10 samples");
  const PolarizationKet target = opt.target.value_or(ghz_state(std::numbers::pi));
  MonteCarloResult out;
  out.samples.assign(opt.n_samples, 0.0);
  std::vector<char> converged(opt.n_samples, 1);

  auto run = [&](int i) {
    auto rng = derive_engine(opt.seed, "tomography-mc/" + std::to_string(i));
    TomographyDataset resample = data;
    for (int j = 0; j < TomographyDataset::kSettings; ++j) {
      const auto c = data.count(j);
      if (c == 0) continue;
      std::poisson_distribution<std::uint64_t> pois(static_cast<double>(c));
      resample.set(j, pois(rng));
    }
    const auto rec = mle_reconstruct(resample, opt.mle);
    converged[i] = rec.converged;
    out.samples[i] = opt.statistic == TomographyStatistic::fidelity ? fidelity(rec.rho, target)
                                                                    : max_mermin(rec.rho, opt.mermin).m_max;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(opt.n_samples)));
  if (threads == 1) {
    for (int i = 0; i < opt.n_samples; ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int i = static_cast<int>(t); i < opt.n_samples; i += static_cast<int>(threads)) run(i);
      });
  }

  double sum = 0.0;
  for (double v : out.samples) sum += v;
  out.mean = sum / opt.n_samples;
  double ss = 0.0;
  for (double v : out.samples) ss += (v - out.mean) * (v - out.mean);
  out.sigma = std::sqrt(ss / (opt.n_samples - 1));
  for (char c : converged) out.not_converged += !c;
  return out;
}

// ---------------------------------------------------------------------------

inline TomographyDataset read_tomography_csv(std::istream& in) {
  TomographyDataset data;
  std::array<bool, TomographyDataset::kSettings> seen{};
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos)
      throw MalformedInput("line " + std::to_string(line_no) + ": expected 'setting,count'");
    const std::string k = detail::trim(t.substr(0, comma));
    const std::string v = detail::trim(t.substr(comma + 1));
    if (!header) {
      if (k != "setting" || v != "count") throw MalformedInput("missing 'setting,count' header");
      header = true;
      continue;
    }
    const int idx = TomographyDataset::index(k);
    if (seen[idx]) throw MalformedInput("duplicate tomography setting '" + k + "'");
    seen[idx] = true;
    data.set(idx, detail::parse_count(v, "line " + std::to_string(line_no)));
  }
  if (!header) throw MalformedInput("empty tomography file");
  for (int i = 0; i < TomographyDataset::kSettings; ++i)
    if (!seen[i]) throw MalformedInput("missing tomography setting '" + TomographyDataset::key(i) + "'");
  return data;
}

inline TomographyDataset read_tomography_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open tomography file '" + path + "'");
  return read_tomography_csv(in);
}

inline void write_tomography_csv(std::ostream& out, const TomographyDataset& data) {
  out << "setting,count\n";
  for (int i = 0; i < TomographyDataset::kSettings; ++i) out << TomographyDataset::key(i) << ',' << data.count(i) << '\n';
}

inline nlohmann::json density_matrix_json(const DensityMatrix& rho) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (int i = 0; i < kDim; ++i) {
    nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
    for (int j = 0; j < kDim; ++j) {
      rr.push_back(rho(i, j).real());
      ii.push_back(rho(i, j).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ii));
  }
  return {{"basis", {"HHH", "HHV", "HVH", "HVV", "VHH", "VHV", "VVH", "VVV"}}, {"real", re}, {"imag", im}};
}

inline nlohmann::json to_json(const ReconstructionResult& r) {
  return {{"rho", density_matrix_json(r.rho)},
          {"log_likelihood", r.log_likelihood},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"regularized_iterations", r.regularized_iterations},
          {"diluted_steps", r.diluted_steps}};
}

}  // namespace ghzlab
