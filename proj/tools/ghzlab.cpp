// ghzlab command-line front end.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "ghzlab/ghzlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path data_dir() {
  if (const char* env = std::getenv("GHZLAB_DATA_DIR"); env && *env) return env;
  return GHZLAB_DEFAULT_DATA_DIR;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

ghzlab::MerminForm parse_form(const std::string& s) {
  if (s == "M") return ghzlab::MerminForm::m;
  if (s == "Mprime") return ghzlab::MerminForm::m_prime;
  throw ghzlab::ConfigError("--form must be M or Mprime");
}

void emit(bool as_json, const json& j, const std::string& text) {
  if (as_json)
    std::cout << j.dump(2) << '\n';
  else
    std::cout << text;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string scenario = "main_run";
  std::string config;
  std::uint64_t seed = 1;
  std::string out = "run";
  double duration = -1;
  double background_scale = -1;
  bool json = false;
};

int cmd_simulate(const SimulateArgs& a) {
  std::vector<ghzlab::Scenario> runs;
  if (!a.config.empty()) {
    runs.push_back({"config", ghzlab::simulation_config_from_json(ghzlab::read_json_file(a.config)), {}});
  } else {
    runs = ghzlab::scenario_suite(a.scenario);
  }
  json summary = json::array();
  std::ostringstream text;
  for (auto& r : runs) {
    if (a.duration >= 0) r.config.duration = a.duration;
    if (a.background_scale >= 0) r.config.background_scale = a.background_scale;
    const auto art = ghzlab::run_experiment(r.config, a.seed);
    const fs::path dir = runs.size() == 1 ? fs::path(a.out) : fs::path(a.out) / r.label;
    auto manifest = ghzlab::write_artifacts(dir, art, r.config, a.seed);
    summary.push_back({{"label", r.label}, {"dir", dir.string()}, {"manifest", manifest}});
    text << r.label << ": " << dir.string() << "  trigger " << art.streams[0].size() << ", alice " << art.streams[1].size()
         << ", bob " << art.streams[2].size() << ", charlie " << art.streams[3].size() << " records; "
         << manifest["ground_truth"]["fully_detected"].get<std::size_t>() << " four-photon events fully detected\n";
  }
  emit(a.json, summary, text.str());
  return 0;
}

// --- coincide --------------------------------------------------------------

struct CoincideArgs {
  std::string in = "run";
  std::string out;
  std::string events_csv;
  double window_ns = 3.0;
  double search_ns = 5000.0;
  bool json = false;
};

int cmd_coincide(const CoincideArgs& a) {
  ghzlab::RunArtifacts art;
  art.streams = ghzlab::read_streams(a.in);
  const auto res = ghzlab::analyze_run(art, a.window_ns * 1e-9, a.search_ns * 1e-9);
  const fs::path counts_path = a.out.empty() ? fs::path(a.in) / "counts.csv" : fs::path(a.out);
  {
    std::ofstream out(counts_path);
    if (!out) throw ghzlab::MalformedInput("cannot write '" + counts_path.string() + "'");
    ghzlab::write_counts_csv(out, res.counts);
  }
  if (!a.events_csv.empty()) {
    std::ofstream ev(a.events_csv);
    ghzlab::write_events_csv(ev, res.events);
  }
  json j = {{"events", res.events.size()},
            {"counts_csv", counts_path.string()},
            {"offsets_ns", {res.offsets[0] * 1e9, res.offsets[1] * 1e9, res.offsets[2] * 1e9}},
            {"window_ns", a.window_ns}};
  std::ostringstream t;
  t << "offsets (ns): alice " << res.offsets[0] * 1e9 << ", bob " << res.offsets[1] * 1e9 << ", charlie "
    << res.offsets[2] * 1e9 << "\n"
    << res.events.size() << " four-fold events in a " << a.window_ns << " ns window -> " << counts_path.string() << "\n";
  emit(a.json, j, t.str());
  return 0;
}

// --- mermin ----------------------------------------------------------------

struct MerminArgs {
  std::string counts;
  std::string form = "M";
  std::string plot_csv;
  bool zero_variance_floor = false;
  bool json = false;
};

int cmd_mermin(const MerminArgs& a) {
  const std::string path = a.counts.empty() ? (data_dir() / "table_s4.csv").string() : a.counts;
  const auto table = ghzlab::read_counts_csv(path);
  const auto form = parse_form(a.form);
  ghzlab::CorrelationOptions opt;
  opt.zero_variance_floor = a.zero_variance_floor;
  const auto res = ghzlab::mermin_from_counts(table, form, opt);
  const auto all = ghzlab::all_correlations(table, opt);
  if (!a.plot_csv.empty()) {
    std::ofstream out(a.plot_csv);
    out << "setting,correlation,sigma,in_form\n";
    for (int t = 0; t < 8; ++t) {
      bool used = false;
      for (int k : res.triples) used |= k == t;
      out << '"' << ghzlab::triple_label(t) << "\"," << all[t].value << ',' << all[t].sigma << ',' << used << '\n';
    }
  }
  std::ostringstream t;
  for (int k = 0; k < 8; ++k)
    t << "E(" << ghzlab::triple_label(k) << ")" << std::string(9 - ghzlab::triple_label(k).size(), ' ')
      << fmt("% .4f ± %.4f\n", all[k].value, all[k].sigma);
  t << (form == ghzlab::MerminForm::m ? "M  = " : "M' = ") << fmt("%.4f ± %.4f", res.m_value, res.m_sigma) << "  ("
    << fmt("%+.1f sigma vs the local bound %.0f)\n", res.violation_sigmas(), 2.0);
  emit(a.json, ghzlab::mermin_report_json(table, form, opt), t.str());
  return 0;
}

// --- tomo ------------------------------------------------------------------

struct TomoArgs {
  std::string in;
  std::string write_synthetic;
  double phase = std::numbers::pi;
  double visibility = 1.0;
  double trials = 1950;
  std::uint64_t seed = 1;
  int mc_samples = 0;
  bool json = false;
};

int cmd_tomo(const TomoArgs& a) {
  ghzlab::TomographyDataset data;
  if (!a.in.empty()) {
    data = ghzlab::read_tomography_csv(a.in);
  } else {
    auto rng = ghzlab::derive_engine(a.seed, "tomography-data");
    data = ghzlab::synthesize_dataset(ghzlab::DensityMatrix::werner(ghzlab::ghz_state(a.phase), a.visibility), a.trials, rng);
    if (!a.write_synthetic.empty()) {
      std::ofstream out(a.write_synthetic);
      ghzlab::write_tomography_csv(out, data);
    }
  }
  const auto rec = ghzlab::mle_reconstruct(data);
  if (!rec.converged) throw ghzlab::NotConverged("reconstruction did not converge in " + std::to_string(rec.iterations) + " iterations");
  const double f = ghzlab::fidelity(rec.rho, ghzlab::ghz_state(a.phase));
  ghzlab::MaxMerminOptions mo;
  mo.seed = a.seed;
  const auto mm = ghzlab::max_mermin(rec.rho, mo);
  json j = ghzlab::to_json(rec);
  j["fidelity"] = f;
  j["target_phase"] = a.phase;
  j["max_mermin"] = mm.m_max;
  std::ostringstream t;
  t << "iterations " << rec.iterations << ", log-likelihood " << rec.log_likelihood << "\n"
    << fmt("fidelity with GHZ(phase %.4f) = %.4f\n", a.phase, f) << fmt("max Mermin %.4f\n", mm.m_max, 0);
  if (a.mc_samples > 0) {
    ghzlab::MonteCarloOptions mc;
    mc.n_samples = a.mc_samples;
    mc.seed = a.seed;
    mc.target = ghzlab::ghz_state(a.phase);
    const auto err = ghzlab::monte_carlo_errors(data, mc);
    j["fidelity_sigma"] = err.sigma;
    t << fmt("Monte Carlo fidelity sigma %.4f over %.0f resamples\n", err.sigma, a.mc_samples);
  }
  emit(a.json, j, t.str());
  return 0;
}

// --- spacetime -------------------------------------------------------------

struct SpacetimeArgs {
  std::string geometry;
  std::string delays;
  std::vector<std::string> pair;
  bool geo_distances = false;
  std::string plot_csv;
  bool json = false;
};

int cmd_spacetime(const SpacetimeArgs& a) {
  const std::string gpath = a.geometry.empty() ? (data_dir() / "geometry.json").string() : a.geometry;
  const std::string dpath = a.delays.empty() ? (data_dir() / "delays.json").string() : a.delays;
  const auto geo = ghzlab::geometry_from_json(ghzlab::read_json_file(gpath), !a.geo_distances);
  const auto budgets = ghzlab::budgets_from_json(ghzlab::read_json_file(dpath));
  const auto report = ghzlab::full_report(geo, budgets);
  if (!a.plot_csv.empty()) {
    std::ofstream out(a.plot_csv);
    ghzlab::write_event_coordinates_csv(out, report, geo, budgets.source_site);
  }
  if (!a.pair.empty()) {
    const auto* e = report.find(a.pair[0], a.pair[1]);
    if (!e) throw ghzlab::ConfigError("no tolerance computed from '" + a.pair[0] + "' to '" + a.pair[1] + "'");
    std::ostringstream t;
    ghzlab::print_entry(t, *e);
    emit(a.json,
         {{"kind", ghzlab::to_string(e->kind)}, {"from", e->from}, {"to", e->to}, {"distance_m", ghzlab::to_json(e->distance)},
          {"tolerance_ns", ghzlab::to_json(e->tolerance)}},
         t.str());
    return 0;
  }
  std::ostringstream t;
  ghzlab::print_report(t, report);
  emit(a.json, ghzlab::to_json(report), t.str());
  return 0;
}

// --- qrng-test -------------------------------------------------------------

struct QrngArgs {
  std::string in;
  double duration = 1.0;
  double set_rate = 14e6;
  double reset_rate = 14e6;
  std::uint64_t seed = 1;
  bool json = false;
};

int cmd_qrng(const QrngArgs& a) {
  json j;
  ghzlab::BitStream bits;
  std::ostringstream t;
  if (!a.in.empty()) {
    bits = ghzlab::read_bit_stream(a.in);
  } else {
    ghzlab::TelegraphQrngConfig cfg;
    cfg.set_rate = a.set_rate;
    cfg.reset_rate = a.reset_rate;
    const auto run = ghzlab::simulate_qrng(cfg, a.duration, a.seed);
    bits = run.bits;
    const auto fit = ghzlab::autocorrelation_fit(run.switches);
    j["autocorrelation_tau_ns"] = fit.tau * 1e9;
    j["analytic_tau_ns"] = cfg.correlation_time() * 1e9;
    t << fmt("autocorrelation time %.2f ns (analytic %.2f ns)\n", fit.tau * 1e9, cfg.correlation_time() * 1e9);
  }
  const auto chi_u = ghzlab::chi_square_runs(bits, ghzlab::ChiSquareMode::unbiased);
  const auto chi_b = ghzlab::chi_square_runs(bits, ghzlab::ChiSquareMode::biased);
  j["bits"] = bits.size();
  j["bias"] = ghzlab::bit_bias(bits);
  j["lag1_correlation"] = ghzlab::lag1_correlation(bits);
  j["chi2_unbiased"] = {{"value", chi_u.chi2}, {"dof", chi_u.dof}};
  j["chi2_biased"] = {{"value", chi_b.chi2}, {"dof", chi_b.dof}};
  t << bits.size() << " bits\n"
    << fmt("bias P(1) = %.5f, lag-1 correlation %.2e\n", j["bias"].get<double>(), j["lag1_correlation"].get<double>())
    << fmt("run-length chi2 %.2f (unbiased, %.0f dof)\n", chi_u.chi2, chi_u.dof)
    << fmt("run-length chi2 %.2f (biased, %.0f dof)\n", chi_b.chi2, chi_b.dof);
  emit(a.json, j, t.str());
  return 0;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string in;
  double window_ns = 3.0;
  bool json = false;
};

int cmd_report(const ReportArgs& a) {
  json j;
  std::ostringstream t;
  ghzlab::CountsTable table;
  if (a.in.empty()) {
    table = ghzlab::read_counts_csv((data_dir() / "table_s4.csv").string());
    j["counts"] = (data_dir() / "table_s4.csv").string();
  } else {
    ghzlab::RunArtifacts art;
    art.streams = ghzlab::read_streams(a.in);
    const auto res = ghzlab::analyze_run(art, a.window_ns * 1e-9);
    table = res.counts;
    j["counts"] = a.in;
    j["events"] = res.events.size();
    t << res.events.size() << " four-fold events\n";
    const fs::path randy = fs::path(a.in) / "randy_bits.bin";
    if (fs::exists(randy)) {
      const auto manifest = ghzlab::read_json_file((fs::path(a.in) / "manifest.json").string());
      const auto check = ghzlab::verify_transport(ghzlab::read_bit_stream(randy.string()),
                                                  ghzlab::read_bit_stream((fs::path(a.in) / "alice_bits.bin").string()),
                                                  manifest["bit_records"]["link_delay_ns"].get<double>() * 1e-9);
      j["transport"] = {{"compared", check.compared}, {"errors", check.errors}};
      t << "Randy -> Alice bits: " << check.errors << " errors in " << check.compared << "\n";
    }
  }
  for (auto form : {ghzlab::MerminForm::m, ghzlab::MerminForm::m_prime}) {
    const auto r = ghzlab::mermin_from_counts(table, form);
    j[ghzlab::to_string(form)] = {{"value", r.m_value}, {"sigma", r.m_sigma}};
    t << ghzlab::to_string(form) << fmt(" = %.4f ± %.4f\n", r.m_value, r.m_sigma);
  }
  const auto geo = ghzlab::geometry_from_json(ghzlab::read_json_file((data_dir() / "geometry.json").string()), true);
  const auto budgets = ghzlab::budgets_from_json(ghzlab::read_json_file((data_dir() / "delays.json").string()));
  const auto rep = ghzlab::full_report(geo, budgets);
  const auto foc = rep.minimum(ghzlab::Loophole::freedom_of_choice).tolerance;
  const auto loc = rep.minimum(ghzlab::Loophole::locality).tolerance;
  j["min_foc_ns"] = ghzlab::to_json(foc);
  j["min_locality_ns"] = ghzlab::to_json(loc);
  t << fmt("min FoC %.1f ± %.1f ns\n", foc.value, foc.sigma) << fmt("min locality %.1f ± %.1f ns\n", loc.value, loc.sigma);
  emit(a.json, j, t.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ghzlab: three-party GHZ experiment analysis and simulation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate a run and write .ttag files and a manifest");
  s->add_option("--scenario", sim.scenario, "main_run, phase_scan or random_vs_deterministic");
  s->add_option("--config", sim.config, "simulation config JSON (replaces --scenario)");
  s->add_option("--seed", sim.seed);
  s->add_option("--out", sim.out, "output directory");
  s->add_option("--duration", sim.duration, "override duration, seconds");
  s->add_option("--background-scale", sim.background_scale, "override background singles scale");
  s->add_flag("--json", sim.json);

  CoincideArgs co;
  auto* c = app.add_subcommand("coincide", "find four-fold events in a simulated or recorded run");
  c->add_option("--in", co.in, "run directory with trigger/alice/bob/charlie .ttag files");
  c->add_option("--out", co.out, "counts CSV (default <in>/counts.csv)");
  c->add_option("--events", co.events_csv, "also write the events as CSV");
  c->add_option("--window-ns", co.window_ns);
  c->add_option("--search-ns", co.search_ns, "offset search half-range");
  c->add_flag("--json", co.json);

  MerminArgs me;
  auto* m = app.add_subcommand("mermin", "Mermin parameter from a 64-setting counts CSV");
  m->add_option("counts", me.counts, "counts CSV (default: bundled table)");
  m->add_option("--form", me.form, "M or Mprime");
  m->add_option("--plot-csv", me.plot_csv, "write correlation bars as CSV");
  m->add_flag("--zero-variance-floor", me.zero_variance_floor, "sigma = 2/N for settings with one-sided outcomes");
  m->add_flag("--json", me.json);

  TomoArgs to;
  auto* t = app.add_subcommand("tomo", "maximum-likelihood tomography");
  t->add_option("--in", to.in, "216-setting counts CSV; synthesizes data when omitted");
  t->add_option("--write-synthetic", to.write_synthetic, "save the synthesized counts");
  t->add_option("--phase", to.phase, "GHZ phase of the target (and of synthetic data)");
  t->add_option("--visibility", to.visibility, "Werner visibility of synthetic data");
  t->add_option("--trials", to.trials, "expected events per setting for synthetic data");
  t->add_option("--seed", to.seed);
  t->add_option("--mc", to.mc_samples, "Monte Carlo resamples for the fidelity error");
  t->add_flag("--json", to.json);

  SpacetimeArgs sp;
  auto* st = app.add_subcommand("spacetime", "light-cone tolerances from geometry and delay budgets");
  st->add_option("--geometry", sp.geometry, "geometry JSON (default: bundled)");
  st->add_option("--delays", sp.delays, "delay budget JSON (default: bundled)");
  st->add_option("--pair", sp.pair, "report one site pair, e.g. --pair randy charlie")->expected(2);
  st->add_flag("--geo-distances", sp.geo_distances, "ignore reference distances, use coordinates only");
  st->add_option("--plot-csv", sp.plot_csv, "write event coordinates as CSV");
  st->add_flag("--json", sp.json);

  QrngArgs qr;
  auto* q = app.add_subcommand("qrng-test", "randomness diagnostics of a bit record or a simulated QRNG");
  q->add_option("--in", qr.in, "packed bit file with .json sidecar");
  q->add_option("--duration", qr.duration, "simulated seconds");
  q->add_option("--set-rate", qr.set_rate, "Hz");
  q->add_option("--reset-rate", qr.reset_rate, "Hz");
  q->add_option("--seed", qr.seed);
  q->add_flag("--json", qr.json);

  ReportArgs re;
  auto* r = app.add_subcommand("report", "summary of Mermin parameters and tolerances");
  r->add_option("--in", re.in, "run directory (default: bundled counts)");
  r->add_option("--window-ns", re.window_ns);
  r->add_flag("--json", re.json);

  try {
    app.parse(argc, argv);
    if (s->parsed()) return cmd_simulate(sim);
    if (c->parsed()) return cmd_coincide(co);
    if (m->parsed()) return cmd_mermin(me);
    if (t->parsed()) return cmd_tomo(to);
    if (st->parsed()) return cmd_spacetime(sp);
    if (q->parsed()) return cmd_qrng(qr);
    if (r->parsed()) return cmd_report(re);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const ghzlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.category() == ghzlab::Error::Category::numerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
