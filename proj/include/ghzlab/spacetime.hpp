#pragma once

// Site geometry, event timeline and light-cone tolerances.
//
// Times are in ns relative to the creation of the photons, distances in m.
// A tolerance is the margin by which a light-speed signal misses the
// forbidden event pair; positive means the pair is space-like separated.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ghzlab/errors.hpp"
#include "ghzlab/uncertain.hpp"

namespace ghzlab {

inline constexpr double kSpeedOfLight = 0.299792;  ///< m/ns

struct GeoCoordinate {
  std::string name;
  double latitude = 0.0;        ///< degrees north
  double longitude_west = 0.0;  ///< degrees west
  double elevation = 0.0;       ///< metres above the ellipsoid
  double sigma = 5.0;           ///< metres per axis

  void validate() const {
    if (!(std::abs(latitude) <= 90.0) || !(std::abs(longitude_west) <= 180.0) || !std::isfinite(elevation) ||
        !(sigma >= 0.0))
      throw ConfigError("invalid coordinate for '" + name + "'");
  }
};

/// WGS84 geodetic to Earth-centred Cartesian.
inline Eigen::Vector3d geodetic_to_ecef(const GeoCoordinate& g) {
  g.validate();
  constexpr double a = 6378137.0;
  constexpr double f = 1.0 / 298.257223563;
  constexpr double e2 = f * (2.0 - f);
  const double lat = g.latitude * M_PI / 180.0;
  const double lon = -g.longitude_west * M_PI / 180.0;
  const double n = a / std::sqrt(1.0 - e2 * std::sin(lat) * std::sin(lat));
  return {(n + g.elevation) * std::cos(lat) * std::cos(lon), (n + g.elevation) * std::cos(lat) * std::sin(lon),
          (n * (1.0 - e2) + g.elevation) * std::sin(lat)};
}

/// East-North-Up coordinates of each point in the tangent frame at `origin`.
inline std::vector<Eigen::Vector3d> geo_to_local(const std::vector<GeoCoordinate>& coords, const GeoCoordinate& origin) {
  const Eigen::Vector3d o = geodetic_to_ecef(origin);
  const double lat = origin.latitude * M_PI / 180.0;
  const double lon = -origin.longitude_west * M_PI / 180.0;
  Eigen::Matrix3d r;
  r << -std::sin(lon), std::cos(lon), 0.0,                                                   //
      -std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon), std::cos(lat),         //
      std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat);
  std::vector<Eigen::Vector3d> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(r * (geodetic_to_ecef(c) - o));
  return out;
}

/// Straight-line distance; sigma from independent per-axis errors at both ends.
inline Uncertain site_distance(const GeoCoordinate& a, const GeoCoordinate& b) {
  return {(geodetic_to_ecef(a) - geodetic_to_ecef(b)).norm(), std::hypot(a.sigma, b.sigma)};
}

/// Location derived from surveyed points (e.g. building corners): their mean
/// latitude, longitude and elevation.
inline GeoCoordinate derived_location(const std::string& name, const std::vector<GeoCoordinate>& points) {
  if (points.empty()) throw ConfigError("derived location '" + name + "' has no input points");
  GeoCoordinate g;
  g.name = name;
  g.latitude = g.longitude_west = g.elevation = 0.0;
  for (const auto& p : points) {
    p.validate();
    g.latitude += p.latitude;
    g.longitude_west += p.longitude_west;
    g.elevation += p.elevation;
  }
  const double n = static_cast<double>(points.size());
  g.latitude /= n;
  g.longitude_west /= n;
  g.elevation /= n;
  g.sigma = points.front().sigma;
  return g;
}

// --- geometry config -------------------------------------------------------

struct Geometry {
  std::map<std::string, GeoCoordinate> sites;
  /// Pair distances that replace the coordinate-derived ones, keyed by the
  /// two site ids in either order.
  std::map<std::pair<std::string, std::string>, Uncertain> distance_overrides;

  const GeoCoordinate& site(const std::string& id) const {
    const auto it = sites.find(id);
    if (it == sites.end()) throw ConfigError("unknown site '" + id + "'");
    return it->second;
  }

  Uncertain distance(const std::string& a, const std::string& b) const {
    if (auto it = distance_overrides.find({a, b}); it != distance_overrides.end()) return it->second;
    if (auto it = distance_overrides.find({b, a}); it != distance_overrides.end()) return it->second;
    if (a == b) return {0.0, 0.0};
    return site_distance(site(a), site(b));
  }
};

/// Reads {"position_sigma", "sites": [{id, name, latitude, longitude_west,
/// elevation}], "derived": [{id, name, from: [ids]}],
/// "reference_distances": [{from, to, distance}]}.
/// Reference distances are loaded only when `with_reference_distances` is set.
inline Geometry geometry_from_json(const nlohmann::json& j, bool with_reference_distances) {
  Geometry g;
  try {
    const double sigma = j.value("position_sigma", 5.0);
    for (const auto& s : j.at("sites")) {
      GeoCoordinate c{s.value("name", s.at("id").get<std::string>()), s.at("latitude").get<double>(),
                      s.at("longitude_west").get<double>(), s.at("elevation").get<double>(), sigma};
      c.validate();
      g.sites[s.at("id").get<std::string>()] = c;
    }
    if (j.contains("derived"))
      for (const auto& d : j.at("derived")) {
        std::vector<GeoCoordinate> pts;
        for (const auto& id : d.at("from")) pts.push_back(g.site(id.get<std::string>()));
        g.sites[d.at("id").get<std::string>()] = derived_location(d.value("name", d.at("id").get<std::string>()), pts);
      }
    if (with_reference_distances && j.contains("reference_distances"))
      for (const auto& d : j.at("reference_distances"))
        g.distance_overrides[{d.at("from").get<std::string>(), d.at("to").get<std::string>()}] = {
            d.at("distance").get<double>(), d.value("sigma", 0.0)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("geometry config: ") + e.what());
  }
  return g;
}

// --- delay budgets ---------------------------------------------------------

/// One itemized delay; fixed items have min == max.
struct DelayItem {
  std::string label;
  Uncertain min;
  Uncertain max;
};

/// Delays from photon creation to the time-tag of a detection.
struct PhotonBudget {
  std::vector<DelayItem> items;
  std::optional<Uncertain> stated_total;
  std::string measurement_label = "Measurement";

  const DelayItem& measurement() const {
    for (const auto& i : items)
      if (i.label == measurement_label) return i;
    throw MissingBudget("photon budget has no '" + measurement_label + "' item");
  }

  Uncertain total() const {
    if (stated_total) return *stated_total;
    if (items.empty()) throw MissingBudget("photon budget is empty");
    Uncertain t;
    for (const auto& i : items) t = t + i.max;
    return t;
  }

  /// Arrival at the Pockels cell: total minus the measurement item. Its
  /// uncertainty combines only the items before the cell.
  Uncertain pockels_cell_time() const {
    const auto m = measurement();
    double var = 0.0;
    for (const auto& i : items)
      if (i.label != measurement_label) var += i.max.sigma * i.max.sigma;
    return {total().value - m.max.value, items.size() > 1 ? std::sqrt(var) : total().sigma};
  }
};

/// Delays from a basis choice to the Pockels cell acting on it.
struct BasisBudget {
  std::string chooser;  ///< site id where the choice is made
  std::vector<DelayItem> items;
  std::optional<Uncertain> stated_min;
  std::optional<Uncertain> stated_max;

  Uncertain minimum() const {
    if (stated_min) return *stated_min;
    if (items.empty()) throw MissingBudget("basis budget for chooser '" + chooser + "' is empty");
    Uncertain t;
    for (const auto& i : items) t = t + i.min;
    return t;
  }
  Uncertain maximum() const {
    if (stated_max) return *stated_max;
    if (items.empty()) throw MissingBudget("basis budget for chooser '" + chooser + "' is empty");
    Uncertain t;
    for (const auto& i : items) t = t + i.max;
    return t;
  }
};

struct StationTiming {
  std::string name;  ///< station id
  std::string site;  ///< site id where the photon is measured
  PhotonBudget photon;
  BasisBudget basis;
};

struct Budgets {
  std::string source_site = "source";
  std::vector<StationTiming> stations;
};

namespace detail {
inline DelayItem delay_item_from_json(const nlohmann::json& j) {
  DelayItem d;
  d.label = j.at("label").get<std::string>();
  const double sigma = j.value("sigma", 0.0);
  if (j.contains("value")) {
    d.min = d.max = {j.at("value").get<double>(), sigma};
  } else {
    d.min = {j.at("min").get<double>(), sigma};
    d.max = {j.at("max").get<double>(), sigma};
  }
  if (d.min.value > d.max.value) throw ConfigError("delay item '" + d.label + "' has min > max");
  return d;
}
inline std::optional<Uncertain> uncertain_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return Uncertain{j.at(key).at("value").get<double>(), j.at(key).value("sigma", 0.0)};
}
}  // namespace detail

/// Reads {"source_site", "stations": [{name, photon: {items, total},
/// basis: {chooser, items, total_min, total_max}}]}.
inline Budgets budgets_from_json(const nlohmann::json& j) {
  Budgets b;
  try {
    b.source_site = j.value("source_site", std::string("source"));
    for (const auto& s : j.at("stations")) {
      StationTiming st;
      st.name = s.at("name").get<std::string>();
      st.site = s.value("site", st.name);
      if (!s.contains("photon")) throw MissingBudget("station '" + st.name + "' has no photon budget");
      if (!s.contains("basis")) throw MissingBudget("station '" + st.name + "' has no basis budget");
      for (const auto& i : s.at("photon").at("items")) st.photon.items.push_back(detail::delay_item_from_json(i));
      st.photon.stated_total = detail::uncertain_from_json(s.at("photon"), "total");
      st.basis.chooser = s.at("basis").value("chooser", st.site);
      for (const auto& i : s.at("basis").at("items")) st.basis.items.push_back(detail::delay_item_from_json(i));
      st.basis.stated_min = detail::uncertain_from_json(s.at("basis"), "total_min");
      st.basis.stated_max = detail::uncertain_from_json(s.at("basis"), "total_max");
      b.stations.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("delay config: ") + e.what());
  }
  return b;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

// --- events and tolerances -------------------------------------------------

enum class EventKind { creation, measurement, basis_early, basis_late };

struct SpacetimeEvent {
  std::string label;
  std::string site;
  std::string station;
  EventKind kind = EventKind::creation;
  Uncertain time;  ///< ns
};

/// State creation at the source, then per station its measurement and the
/// earliest and latest basis choice at the choosing site.
inline std::vector<SpacetimeEvent> event_timeline(const Budgets& b) {
  std::vector<SpacetimeEvent> ev;
  ev.push_back({"state creation", b.source_site, "", EventKind::creation, {0.0, 0.0}});
  for (const auto& st : b.stations) {
    const auto pc = st.photon.pockels_cell_time();
    auto title = [](std::string t) {
      if (!t.empty()) t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
      return t;
    };
    const auto& chooser = st.basis.chooser;
    ev.push_back({title(st.name) + " measurement", st.site, st.name, EventKind::measurement, st.photon.total()});
    ev.push_back({title(chooser) + " basis early", chooser, st.name, EventKind::basis_early, pc - st.basis.maximum()});
    ev.push_back({title(chooser) + " basis late", chooser, st.name, EventKind::basis_late, pc - st.basis.minimum()});
  }
  return ev;
}

inline Uncertain light_time(Uncertain distance) {
  return {distance.value / kSpeedOfLight, distance.sigma / kSpeedOfLight};
}

/// distance / c - t_late: how late a light signal from the creation event
/// arrives after the latest basis choice.
inline Uncertain foc_tolerance(const SpacetimeEvent& source, const SpacetimeEvent& basis_late, Uncertain distance) {
  return source.time + light_time(distance) - basis_late.time;
}

/// (t_early + distance / c) - t_measurement: how late a light signal from the
/// earliest basis choice reaches the remote measurement.
inline Uncertain locality_tolerance(const SpacetimeEvent& basis_early, const SpacetimeEvent& measurement,
                                    Uncertain distance) {
  return basis_early.time + light_time(distance) - measurement.time;
}

enum class Loophole { freedom_of_choice, locality };

inline const char* to_string(Loophole l) { return l == Loophole::freedom_of_choice ? "FoC" : "locality"; }

struct ToleranceEntry {
  Loophole kind = Loophole::freedom_of_choice;
  std::string from;  ///< event label
  std::string to;    ///< event label
  std::string from_site;
  std::string to_site;
  Uncertain distance;
  Uncertain tolerance;
};

struct ToleranceReport {
  std::vector<SpacetimeEvent> events;
  std::vector<ToleranceEntry> entries;
  std::size_t min_foc = 0;
  std::size_t min_locality = 0;

  const ToleranceEntry& minimum(Loophole kind) const {
    return entries.at(kind == Loophole::freedom_of_choice ? min_foc : min_locality);
  }

  /// First entry whose sites match the given pair, in that order.
  const ToleranceEntry* find(const std::string& from_site, const std::string& to_site) const {
    for (const auto& e : entries)
      if (e.from_site == from_site && e.to_site == to_site) return &e;
    return nullptr;
  }
};

/// Freedom-of-choice tolerances from the source to each choosing site, and
/// locality tolerances from each early choice to every other station's
/// measurement.
inline ToleranceReport full_report(const Geometry& geo, const Budgets& b) {
  if (b.stations.empty()) throw MissingBudget("no stations in delay budget");
  ToleranceReport r;
  r.events = event_timeline(b);
  const auto& creation = r.events.front();
  auto find = [&](const std::string& station, EventKind k) -> const SpacetimeEvent& {
    for (const auto& e : r.events)
      if (e.station == station && e.kind == k) return e;
    throw MissingBudget("no event for station '" + station + "'");
  };
  for (const auto& st : b.stations) {
    const auto& late = find(st.name, EventKind::basis_late);
    const auto d = geo.distance(creation.site, late.site);
    r.entries.push_back({Loophole::freedom_of_choice, creation.label, late.label, creation.site, late.site, d,
                         foc_tolerance(creation, late, d)});
  }
  for (const auto& chooser : b.stations) {
    const auto& early = find(chooser.name, EventKind::basis_early);
    for (const auto& target : b.stations) {
      if (target.name == chooser.name) continue;
      const auto& meas = find(target.name, EventKind::measurement);
      const auto d = geo.distance(early.site, meas.site);
      r.entries.push_back({Loophole::locality, early.label, meas.label, early.site, meas.site, d,
                           locality_tolerance(early, meas, d)});
    }
  }
  bool have_foc = false, have_loc = false;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    auto& slot = r.entries[i].kind == Loophole::freedom_of_choice ? r.min_foc : r.min_locality;
    auto& have = r.entries[i].kind == Loophole::freedom_of_choice ? have_foc : have_loc;
    if (!have || r.entries[i].tolerance.value < r.entries[slot].tolerance.value) slot = i, have = true;
  }
  return r;
}

inline nlohmann::json to_json(const Uncertain& u) { return {{"value", u.value}, {"sigma", u.sigma}}; }

inline nlohmann::json to_json(const ToleranceReport& r) {
  nlohmann::json j;
  for (const auto& e : r.events) j["events"].push_back({{"label", e.label}, {"site", e.site}, {"time_ns", to_json(e.time)}});
  for (const auto& e : r.entries)
    j["tolerances"].push_back({{"kind", to_string(e.kind)},
                               {"from", e.from},
                               {"to", e.to},
                               {"from_site", e.from_site},
                               {"to_site", e.to_site},
                               {"distance_m", to_json(e.distance)},
                               {"tolerance_ns", to_json(e.tolerance)}});
  j["min_foc_ns"] = to_json(r.minimum(Loophole::freedom_of_choice).tolerance);
  j["min_locality_ns"] = to_json(r.minimum(Loophole::locality).tolerance);
  return j;
}

inline void print_entry(std::ostream& out, const ToleranceEntry& e) {
  char line[200];
  std::snprintf(line, sizeof line, "%-9s %-22s -> %-22s %9.2f m %9.1f +- %5.1f ns\n", to_string(e.kind), e.from.c_str(),
                e.to.c_str(), e.distance.value, e.tolerance.value, e.tolerance.sigma);
  out << line;
}

inline void print_report(std::ostream& out, const ToleranceReport& r) {
  char line[160];
  out << "events (ns after state creation)\n";
  for (const auto& e : r.events) {
    std::snprintf(line, sizeof line, "  %-22s %9.1f +- %5.1f\n", e.label.c_str(), e.time.value, e.time.sigma);
    out << line;
  }
  out << "tolerances\n";
  for (const auto& e : r.entries) print_entry(out, e);
  std::snprintf(line, sizeof line, "min FoC      %7.1f +- %4.1f ns\nmin locality %7.1f +- %4.1f ns\n",
                r.minimum(Loophole::freedom_of_choice).tolerance.value,
                r.minimum(Loophole::freedom_of_choice).tolerance.sigma, r.minimum(Loophole::locality).tolerance.value,
                r.minimum(Loophole::locality).tolerance.sigma);
  out << line;
}

/// Plot-ready event coordinates: label, east, north, up (m), time (ns).
inline void write_event_coordinates_csv(std::ostream& out, const ToleranceReport& r, const Geometry& geo,
                                        const std::string& origin_site) {
  out << "label,site,east_m,north_m,up_m,time_ns,time_sigma_ns\n";
  for (const auto& e : r.events) {
    const auto p = geo_to_local({geo.site(e.site)}, geo.site(origin_site)).front();
    out << e.label << ',' << e.site << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << e.time.value << ','
        << e.time.sigma << '\n';
  }
}

}  // namespace ghzlab
