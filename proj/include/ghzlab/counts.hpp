#pragma once

// Coincidence-count tables and the correlation / Mermin statistics derived
// from them.
//
// A table holds 64 cells keyed by three letters over {R, L, D, A} in the
// order (Alice, Bob, Charlie). R/L is the unprimed setting and D/A the primed
// one; R and D report +1, L and A report -1.

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ghzlab/errors.hpp"
#include "ghzlab/quantum.hpp"

namespace ghzlab {

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::uint64_t parse_count(const std::string& text, const std::string& where) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw MalformedInput(where + ": count '" + text + "' is not a nonnegative integer");
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw MalformedInput(where + ": count '" + text + "' out of range");
  }
}
}  // namespace detail

/// One analyzer letter: which setting (unprimed R/L = 0, primed D/A = 1) and
/// which sign.
struct AnalyzerLetter {
  int primed;
  int sign;
};

inline std::optional<AnalyzerLetter> parse_mermin_letter(char c) {
  switch (c) {
    case 'R': return AnalyzerLetter{0, +1};
    case 'L': return AnalyzerLetter{0, -1};
    case 'D': return AnalyzerLetter{1, +1};
    case 'A': return AnalyzerLetter{1, -1};
    default: return std::nullopt;
  }
}

inline char mermin_letter(int primed, int sign) {
  if (primed) return sign > 0 ? 'D' : 'A';
  return sign > 0 ? 'R' : 'L';
}

class CountsTable {
 public:
  static constexpr int kCells = 64;

  CountsTable() { counts_.fill(0); }

  /// Cell index for a (setting triple, outcome triple) pair. Cells of one
  /// triple are contiguous, ordered by outcome index.
  static constexpr int cell(int triple, int outcome) noexcept { return triple * 8 + outcome; }

  static int cell(std::string_view key) {
    if (key.size() != 3) throw MalformedInput("setting key '" + std::string(key) + "' must have 3 letters");
    int triple = 0;
    std::array<int, 3> signs{};
    for (int p = 0; p < 3; ++p) {
      const auto l = parse_mermin_letter(key[p]);
      if (!l) throw MalformedInput("setting key '" + std::string(key) + "' uses letters outside {R,L,D,A}");
      triple |= l->primed << (2 - p);
      signs[p] = l->sign;
    }
    return cell(triple, outcome_index(signs));
  }

  static std::string key(int cell_index) {
    const int triple = cell_index / 8;
    const int outcome = cell_index % 8;
    const auto primes = triple_primes(triple);
    std::string k(3, '?');
    for (int p = 0; p < 3; ++p) k[p] = mermin_letter(primes[p], outcome_sign(outcome, p));
    return k;
  }

  std::uint64_t at(std::string_view k) const { return counts_[cell(k)]; }
  std::uint64_t at(int triple, int outcome) const { return counts_[cell(triple, outcome)]; }
  void set(std::string_view k, std::uint64_t n) { counts_[cell(k)] = n; }
  void set(int triple, int outcome, std::uint64_t n) { counts_[cell(triple, outcome)] = n; }
  void add(int triple, int outcome, std::uint64_t n = 1) { counts_[cell(triple, outcome)] += n; }

  std::array<std::uint64_t, 8> triple_counts(int triple) const {
    std::array<std::uint64_t, 8> out{};
    for (int o = 0; o < 8; ++o) out[o] = at(triple, o);
    return out;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  const std::array<std::uint64_t, kCells>& cells() const noexcept { return counts_; }

  bool operator==(const CountsTable&) const = default;

 private:
  std::array<std::uint64_t, kCells> counts_;
};

/// Reads the `setting,count` CSV format. Every one of the 64 keys must appear
/// exactly once.
inline CountsTable read_counts_csv(std::istream& in) {
  CountsTable table;
  std::array<bool, CountsTable::kCells> seen{};
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
      if (k != "setting" || v != "count")
        throw MalformedInput("missing 'setting,count' header");
      header = true;
      continue;
    }
    const int c = CountsTable::cell(k);
    if (seen[c]) throw MalformedInput("duplicate setting '" + k + "'");
    seen[c] = true;
    table.set(k, detail::parse_count(v, "line " + std::to_string(line_no)));
  }
  if (!header) throw MalformedInput("empty counts file");
  for (int c = 0; c < CountsTable::kCells; ++c)
    if (!seen[c]) throw MalformedInput("missing setting '" + CountsTable::key(c) + "'");
  return table;
}

inline CountsTable read_counts_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open counts file '" + path + "'");
  return read_counts_csv(in);
}

inline void write_counts_csv(std::ostream& out, const CountsTable& table) {
  out << "setting,count\n";
  for (int c = 0; c < CountsTable::kCells; ++c) out << CountsTable::key(c) << ',' << table.cells()[c] << '\n';
}

// ---------------------------------------------------------------------------

struct CorrelationEstimate {
  double value = 0.0;
  double sigma = 0.0;
  std::uint64_t n_events = 0;
  std::uint64_t n_plus = 0;
  std::uint64_t n_minus = 0;
};

struct CorrelationOptions {
  /// When N+ * N- = 0 the first-order Poisson variance vanishes. With this
  /// flag set such triples report sigma = 2/N instead of 0.
  bool zero_variance_floor = false;
};

/// E = (N+ - N-) / N with sigma^2 = 4 N+ N- / N^3.
inline CorrelationEstimate correlation_estimate(std::uint64_t n_plus, std::uint64_t n_minus,
                                                const CorrelationOptions& opt = {}) {
  const std::uint64_t n = n_plus + n_minus;
  if (n == 0) throw EmptySetting("all eight counts of the setting triple are zero");
  const double np = static_cast<double>(n_plus);
  const double nm = static_cast<double>(n_minus);
  const double nn = static_cast<double>(n);
  CorrelationEstimate e;
  e.n_events = n;
  e.n_plus = n_plus;
  e.n_minus = n_minus;
  e.value = (np - nm) / nn;
  e.sigma = std::sqrt(4.0 * np * nm / (nn * nn * nn));
  if (opt.zero_variance_floor && n_plus * n_minus == 0) e.sigma = 2.0 / nn;
  return e;
}

/// Correlation of one setting triple (index 4*a' + 2*b' + c', 1 = primed).
inline CorrelationEstimate correlation_from_counts(const CountsTable& table, int triple,
                                                   const CorrelationOptions& opt = {}) {
  std::uint64_t plus = 0, minus = 0;
  for (int o = 0; o < 8; ++o) (outcome_parity(o) > 0 ? plus : minus) += table.at(triple, o);
  return correlation_estimate(plus, minus, opt);
}

/// Triple index from per-party primes, e.g. {0, 1, 1} for (a, b', c').
constexpr int triple_index(int a_primed, int b_primed, int c_primed) noexcept {
  return (a_primed << 2) | (b_primed << 1) | c_primed;
}

/// Human label such as "a,b',c'".
inline std::string triple_label(int triple) {
  const auto primes = triple_primes(triple);
  const char names[3] = {'a', 'b', 'c'};
  std::string s;
  for (int p = 0; p < 3; ++p) {
    if (p) s += ',';
    s += names[p];
    if (primes[p]) s += '\'';
  }
  return s;
}

inline std::array<CorrelationEstimate, 8> all_correlations(const CountsTable& table,
                                                           const CorrelationOptions& opt = {}) {
  std::array<CorrelationEstimate, 8> out;
  for (int t = 0; t < 8; ++t) out[t] = correlation_from_counts(table, t, opt);
  return out;
}

struct MerminResult {
  double m_value = 0.0;
  double m_sigma = 0.0;
  MerminForm form = MerminForm::m;
  std::array<int, 4> triples{};
  std::array<int, 4> signs{};
  std::array<CorrelationEstimate, 4> components{};

  /// (M - 2) / sigma; how far the local bound is exceeded.
  double violation_sigmas() const { return m_sigma > 0 ? (m_value - 2.0) / m_sigma : 0.0; }
};

inline MerminResult mermin_from_counts(const CountsTable& table, MerminForm form,
                                       const CorrelationOptions& opt = {}) {
  MerminResult r;
  r.form = form;
  double sum = 0.0, var = 0.0;
  const auto terms = mermin_terms(form);
  for (int k = 0; k < 4; ++k) {
    r.triples[k] = terms[k].triple;
    r.signs[k] = terms[k].sign;
    r.components[k] = correlation_from_counts(table, terms[k].triple, opt);
    sum += terms[k].sign * r.components[k].value;
    var += r.components[k].sigma * r.components[k].sigma;
  }
  r.m_value = std::abs(sum);
  r.m_sigma = std::sqrt(var);
  return r;
}

// ---------------------------------------------------------------------------

struct PhaseScanPoint {
  double phase = 0.0;
  CountsTable table;
};

struct PhaseScanResult {
  double phase = 0.0;
  double objective = 0.0;
  double objective_sigma = 0.0;
  std::vector<double> objectives;
  /// Set when the scan cannot distinguish its best point from the rest.
  bool flat_warning = false;
};

/// Fraction of R/L-R/L-R/L events landing in RRR, RLL, LRL or LLR (the even
/// parity outcomes), with its binomial sigma. Returns nullopt on no counts.
inline std::optional<std::pair<double, double>> phase_objective(const CountsTable& table) {
  const auto c = table.triple_counts(0);
  std::uint64_t n = 0, hit = 0;
  for (int o = 0; o < 8; ++o) {
    n += c[o];
    if (outcome_parity(o) > 0) hit += c[o];
  }
  if (n == 0) return std::nullopt;
  const double f = static_cast<double>(hit) / static_cast<double>(n);
  return std::pair{f, std::sqrt(std::max(f * (1.0 - f), 0.25 / static_cast<double>(n)) /
                                static_cast<double>(n))};
}

/// Picks the phase whose table maximizes the phase objective.
///
/// Throws DegenerateScan if no table has counts, or if the best and worst
/// points are within `flat_sigmas` combined standard deviations of each other
/// (for scans of two or more points).
inline PhaseScanResult phase_scan_objective(const std::vector<PhaseScanPoint>& scan,
                                            double flat_sigmas = 2.0) {
  PhaseScanResult r;
  int best = -1, worst = -1, valid = 0;
  std::vector<double> sig(scan.size(), 0.0);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto obj = phase_objective(scan[i].table);
    r.objectives.push_back(obj ? obj->first : std::numeric_limits<double>::quiet_NaN());
    if (!obj) continue;
    sig[i] = obj->second;
    ++valid;
    if (best < 0 || obj->first > r.objectives[best]) best = static_cast<int>(i);
    if (worst < 0 || obj->first < r.objectives[worst]) worst = static_cast<int>(i);
  }
  if (best < 0) throw DegenerateScan("no phase-scan table contains R/L-R/L-R/L counts");
  r.phase = scan[best].phase;
  r.objective = r.objectives[best];
  r.objective_sigma = sig[best];
  if (valid == 1) {
    r.flat_warning = true;
    return r;
  }
  const double spread = r.objectives[best] - r.objectives[worst];
  const double combined = std::hypot(sig[best], sig[worst]);
  if (spread <= flat_sigmas * combined)
    throw DegenerateScan("phase-scan objective is flat within statistical error");
  return r;
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const CorrelationEstimate& e) {
  return {{"value", e.value}, {"sigma", e.sigma}, {"n_events", e.n_events}};
}

/// Report with fields {form, value, sigma, violation_sigmas, correlations[8]}.
inline nlohmann::json mermin_report_json(const CountsTable& table, MerminForm form,
                                         const CorrelationOptions& opt = {}) {
  const MerminResult r = mermin_from_counts(table, form, opt);
  const auto all = all_correlations(table, opt);
  nlohmann::json corr = nlohmann::json::array();
  for (int t = 0; t < 8; ++t) {
    auto j = to_json(all[t]);
    j["settings"] = triple_label(t);
    bool used = false;
    int sign = 0;
    for (int k = 0; k < 4; ++k)
      if (r.triples[k] == t) used = true, sign = r.signs[k];
    j["in_form"] = used;
    if (used) j["sign"] = sign;
    corr.push_back(std::move(j));
  }
  return {{"form", to_string(form)},
          {"value", r.m_value},
          {"sigma", r.m_sigma},
          {"violation_sigmas", r.violation_sigmas()},
          {"total_events", table.total()},
          {"correlations", std::move(corr)}};
}

}  // namespace ghzlab
