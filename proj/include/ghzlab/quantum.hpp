#pragma once

// Exact three-qubit polarization mechanics.
//
// Qubit ordering is fixed everywhere in the library: tensor slot 0 is Alice,
// slot 1 Bob, slot 2 Charlie. Product-basis index = 4*a + 2*b + c with
// H = 0 and V = 1, so the basis order is HHH, HHV, HVH, HVV, VHH, VHV, VVH, VVV.
//
// Outcome convention: the +1 outcome of a setting with Bloch direction n is
// the +1 eigenvector of n.sigma. H (+z), D (+x) and R (+y) are +1;
// V, A and L are -1. Outcome triples are indexed the same way as kets:
// bit (2 - party) of the index set means that party saw -1.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "ghzlab/errors.hpp"

namespace ghzlab {

using Complex = std::complex<double>;
inline constexpr int kParties = 3;
inline constexpr int kDim = 8;

using Ket = Eigen::Matrix<Complex, kDim, 1>;
using Operator = Eigen::Matrix<Complex, kDim, kDim>;
using QubitOperator = Eigen::Matrix2cd;

enum class Party : int { alice = 0, bob = 1, charlie = 2 };

/// Sign (+1 / -1) that `party` reports for outcome-triple index `outcome`.
constexpr int outcome_sign(int outcome, int party) noexcept {
  return ((outcome >> (kParties - 1 - party)) & 1) ? -1 : 1;
}

constexpr int outcome_index(const std::array<int, 3>& signs) noexcept {
  return (signs[0] < 0 ? 4 : 0) | (signs[1] < 0 ? 2 : 0) | (signs[2] < 0 ? 1 : 0);
}

/// Product of the three outcome signs for an outcome-triple index.
constexpr int outcome_parity(int outcome) noexcept {
  return outcome_sign(outcome, 0) * outcome_sign(outcome, 1) * outcome_sign(outcome, 2);
}

namespace pauli {
inline QubitOperator identity() { return QubitOperator::Identity(); }
inline QubitOperator x() {
  QubitOperator m;
  m << 0, 1, 1, 0;
  return m;
}
inline QubitOperator y() {
  QubitOperator m;
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}
inline QubitOperator z() {
  QubitOperator m;
  m << 1, 0, 0, -1;
  return m;
}
}  // namespace pauli

/// A ⊗ B ⊗ C in the fixed (Alice, Bob, Charlie) slot order.
inline Operator kron3(const QubitOperator& a, const QubitOperator& b, const QubitOperator& c) {
  Operator out;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      out(i, j) = a(i >> 2, j >> 2) * b((i >> 1) & 1, (j >> 1) & 1) * c(i & 1, j & 1);
  return out;
}

// ---------------------------------------------------------------------------

class PolarizationKet {
 public:
  static constexpr double kNormTolerance = 1e-12;

  /// Throws InvalidState unless the amplitudes have unit norm.
  explicit PolarizationKet(const Ket& amplitudes) : amps_(amplitudes) {
    if (!std::isfinite(amps_.norm()) || std::abs(amps_.norm() - 1.0) > kNormTolerance)
      throw InvalidState("ket norm " + std::to_string(amps_.norm()) + " is not 1");
  }

  static PolarizationKet normalized(const Ket& amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0)) throw InvalidState("cannot normalize a zero ket");
    return PolarizationKet(amplitudes / n);
  }

  const Ket& amplitudes() const noexcept { return amps_; }
  Complex operator[](int i) const { return amps_(i); }

  Complex inner(const PolarizationKet& other) const { return amps_.dot(other.amps_); }

  PolarizationKet with_global_phase(double phase) const {
    return PolarizationKet(amps_ * std::polar(1.0, phase));
  }

 private:
  Ket amps_;
};

/// (|HHH> + e^{i phase}|VVV>) / sqrt(2).
inline PolarizationKet ghz_state(double phase) {
  if (!std::isfinite(phase)) throw InvalidState("GHZ phase must be finite");
  Ket k = Ket::Zero();
  k(0) = 1.0 / std::numbers::sqrt2;
  k(7) = std::polar(1.0 / std::numbers::sqrt2, phase);
  return PolarizationKet(k);
}

// ---------------------------------------------------------------------------

class DensityMatrix {
 public:
  static constexpr double kHermitianTolerance = 1e-10;
  static constexpr double kTraceTolerance = 1e-10;
  static constexpr double kEigenTolerance = 1e-9;

  /// Validates Hermiticity, unit trace and positivity; throws InvalidState.
  explicit DensityMatrix(const Operator& m) : m_(m) {
    std::string why;
    if (!is_valid(m_, &why)) throw InvalidState(why);
    m_ = 0.5 * (m_ + m_.adjoint()).eval();
  }

  static DensityMatrix pure(const PolarizationKet& ket) {
    return DensityMatrix(ket.amplitudes() * ket.amplitudes().adjoint());
  }

  static DensityMatrix maximally_mixed() {
    return DensityMatrix(Operator::Identity() / static_cast<double>(kDim));
  }

  /// visibility * |ket><ket| + (1 - visibility) * I/8.
  static DensityMatrix werner(const PolarizationKet& ket, double visibility) {
    if (!(visibility >= 0.0 && visibility <= 1.0))
      throw InvalidState("Werner visibility must lie in [0, 1]");
    const Operator pure_part = ket.amplitudes() * ket.amplitudes().adjoint();
    return DensityMatrix(visibility * pure_part +
                         (1.0 - visibility) * Operator::Identity() / static_cast<double>(kDim));
  }

  static bool is_valid(const Operator& m, std::string* why = nullptr) {
    auto fail = [&](std::string msg) {
      if (why) *why = std::move(msg);
      return false;
    };
    if (!m.allFinite()) return fail("density matrix has non-finite entries");
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > kHermitianTolerance)
      return fail("density matrix is not Hermitian");
    if (std::abs(m.trace() - Complex(1.0)) > kTraceTolerance)
      return fail("density matrix trace is not 1");
    Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kEigenTolerance)
      return fail("density matrix has a negative eigenvalue");
    return true;
  }

  const Operator& matrix() const noexcept { return m_; }
  Complex operator()(int i, int j) const { return m_(i, j); }

  /// Eigenvalues sorted ascending.
  Eigen::Matrix<double, kDim, 1> eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Operator> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  /// Tr(rho * op) for a Hermitian op; real by construction.
  double expectation(const Operator& op) const {
    return (m_.transpose().cwiseProduct(op)).sum().real();
  }

  double purity() const { return (m_ * m_).trace().real(); }

 private:
  Operator m_;
};

/// Convex combination w*a + (1-w)*b.
inline DensityMatrix mix(const DensityMatrix& a, const DensityMatrix& b, double w) {
  return DensityMatrix(w * a.matrix() + (1.0 - w) * b.matrix());
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  Eigen::SelfAdjointEigenSolver<Operator> es(a.matrix() - b.matrix(), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/// <target| rho |target>.
inline double fidelity(const DensityMatrix& rho, const PolarizationKet& target) {
  const Ket& t = target.amplitudes();
  return (t.adjoint() * rho.matrix() * t)(0, 0).real();
}

/// Relabel tensor slots: slot `perm[k]` of the result holds slot k of `m`.
inline Operator permute_parties(const Operator& m, const std::array<int, 3>& perm) {
  auto map_index = [&](int idx) {
    int out = 0;
    for (int k = 0; k < kParties; ++k) {
      const int bit = (idx >> (kParties - 1 - k)) & 1;
      out |= bit << (kParties - 1 - perm[k]);
    }
    return out;
  };
  Operator out;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) out(map_index(i), map_index(j)) = m(i, j);
  return out;
}

/// Reduced single-qubit state of `party`.
inline QubitOperator reduced_state(const DensityMatrix& rho, Party party) {
  const int p = static_cast<int>(party);
  const int shift = kParties - 1 - p;
  QubitOperator out = QubitOperator::Zero();
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) {
      const int rest_i = i & ~(1 << shift);
      const int rest_j = j & ~(1 << shift);
      if (rest_i != rest_j) continue;
      out((i >> shift) & 1, (j >> shift) & 1) += rho(i, j);
    }
  return out;
}

// ---------------------------------------------------------------------------

enum class Basis { hv, da, rl };

inline const char* to_string(Basis b) {
  switch (b) {
    case Basis::hv: return "HV";
    case Basis::da: return "DA";
    case Basis::rl: return "RL";
  }
  return "?";
}

/// A two-outcome polarization analyzer, described by the Bloch direction of
/// its +1 outcome.
class MeasurementSetting {
 public:
  static constexpr double kUnitTolerance = 1e-12;

  static MeasurementSetting basis(Basis b) {
    switch (b) {
      case Basis::hv: return MeasurementSetting({0.0, 0.0, 1.0});
      case Basis::da: return MeasurementSetting({1.0, 0.0, 0.0});
      case Basis::rl: return MeasurementSetting({0.0, 1.0, 0.0});
    }
    throw InvalidState("unknown basis");
  }

  /// Direction (cos theta, sin theta, 0): theta = 0 is D/A, theta = pi/2 is R/L.
  static MeasurementSetting equatorial(double theta) {
    return MeasurementSetting({std::cos(theta), std::sin(theta), 0.0});
  }

  /// Polar angle from +z (H), azimuth from +x (D) towards +y (R).
  static MeasurementSetting bloch(double polar, double azimuth) {
    return MeasurementSetting({std::sin(polar) * std::cos(azimuth),
                               std::sin(polar) * std::sin(azimuth), std::cos(polar)});
  }

  /// Throws InvalidState unless `n` is a unit vector within 1e-12.
  static MeasurementSetting direction(const std::array<double, 3>& n) {
    const double norm = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitTolerance)
      throw InvalidState("Bloch direction is not a unit vector");
    return MeasurementSetting(n);
  }

  const std::array<double, 3>& bloch_vector() const noexcept { return n_; }

  /// n . sigma
  QubitOperator observable() const {
    return n_[0] * pauli::x() + n_[1] * pauli::y() + n_[2] * pauli::z();
  }

  /// Projector onto the outcome with the given sign: (I + sign * n.sigma) / 2.
  QubitOperator projector(int sign) const {
    return 0.5 * (pauli::identity() + static_cast<double>(sign) * observable());
  }

 private:
  explicit MeasurementSetting(const std::array<double, 3>& n) : n_(n) {}
  std::array<double, 3> n_;
};

using SettingTriple = std::array<MeasurementSetting, 3>;

inline SettingTriple settings(Basis a, Basis b, Basis c) {
  return {MeasurementSetting::basis(a), MeasurementSetting::basis(b), MeasurementSetting::basis(c)};
}

/// Rank-1 projector for the joint outcome (signs +1/-1 per party).
inline Operator projector(const SettingTriple& s, const std::array<int, 3>& signs) {
  return kron3(s[0].projector(signs[0]), s[1].projector(signs[1]), s[2].projector(signs[2]));
}

/// Born probabilities of the eight joint outcomes, indexed by outcome triple.
inline std::array<double, 8> outcome_probabilities(const DensityMatrix& rho, const SettingTriple& s) {
  std::array<double, 8> p{};
  for (int o = 0; o < 8; ++o) {
    const double v = rho.expectation(
        projector(s, {outcome_sign(o, 0), outcome_sign(o, 1), outcome_sign(o, 2)}));
    p[o] = v < 0.0 ? 0.0 : v;
  }
  return p;
}

/// E = P+ - P-, summed over the projectors of all eight outcomes.
inline double correlation(const DensityMatrix& rho, const SettingTriple& s) {
  double e = 0.0;
  for (int o = 0; o < 8; ++o)
    e += outcome_parity(o) *
         rho.expectation(projector(s, {outcome_sign(o, 0), outcome_sign(o, 1), outcome_sign(o, 2)}));
  return e;
}

// ---------------------------------------------------------------------------

enum class MerminForm { m, m_prime };

inline const char* to_string(MerminForm f) { return f == MerminForm::m ? "M" : "M_prime"; }

struct PartySettings {
  MeasurementSetting unprimed;
  MeasurementSetting primed;
};

using MerminSettings = std::array<PartySettings, 3>;

/// Unprimed settings R/L, primed settings D/A for every party.
inline MerminSettings standard_mermin_settings() {
  const PartySettings p{MeasurementSetting::basis(Basis::rl), MeasurementSetting::basis(Basis::da)};
  return {p, p, p};
}

/// Which settings (unprimed = 0, primed = 1) each party uses in a triple.
/// Triple index = 4*alice + 2*bob + charlie.
constexpr std::array<int, 3> triple_primes(int triple) noexcept {
  return {(triple >> 2) & 1, (triple >> 1) & 1, triple & 1};
}

/// The four triples entering a Mermin form, with the sign each carries inside
/// the absolute value.
struct MerminTerm {
  int triple;
  int sign;
};

constexpr std::array<MerminTerm, 4> mermin_terms(MerminForm form) noexcept {
  if (form == MerminForm::m)
    // E(a,b,c) - E(a,b',c') - E(a',b,c') - E(a',b',c)
    return {{{0b000, +1}, {0b011, -1}, {0b101, -1}, {0b110, -1}}};
  // E(a',b',c') - E(a,b,c') - E(a,b',c) - E(a',b,c)
  return {{{0b111, +1}, {0b001, -1}, {0b010, -1}, {0b100, -1}}};
}

inline SettingTriple triple_settings(const MerminSettings& ms, int triple) {
  const auto primes = triple_primes(triple);
  auto pick = [&](int party) {
    return primes[party] ? ms[party].primed : ms[party].unprimed;
  };
  return {pick(0), pick(1), pick(2)};
}

inline double mermin_parameter(const DensityMatrix& rho, const MerminSettings& ms,
                               MerminForm form = MerminForm::m) {
  double sum = 0.0;
  for (const auto& term : mermin_terms(form))
    sum += term.sign * correlation(rho, triple_settings(ms, term.triple));
  return std::abs(sum);
}

}  // namespace ghzlab
