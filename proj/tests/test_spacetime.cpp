#include <gtest/gtest.h>

#include "ghzlab/spacetime.hpp"
#include "oracles.hpp"

using namespace ghzlab;

namespace {

const std::string kData = GHZLAB_TEST_DATA_DIR;

Geometry geometry(bool reference) { return geometry_from_json(read_json_file(kData + "/geometry.json"), reference); }
Budgets budgets() { return budgets_from_json(read_json_file(kData + "/delays.json")); }

const SpacetimeEvent& event(const ToleranceReport& r, const std::string& label) {
  for (const auto& e : r.events)
    if (e.label == label) return e;
  throw std::runtime_error("no event " + label);
}

/// Budgets with every stated total removed so that item edits take effect.
Budgets itemized() {
  auto b = budgets();
  for (auto& st : b.stations) {
    st.photon.stated_total.reset();
    st.basis.stated_min.reset();
    st.basis.stated_max.reset();
  }
  return b;
}

StationTiming& station(Budgets& b, const std::string& name) {
  for (auto& s : b.stations)
    if (s.name == name) return s;
  throw std::runtime_error("no station " + name);
}

Budgets zero_budgets() {
  Budgets b;
  for (std::string name : {"alice", "bob", "charlie"}) {
    StationTiming st;
    st.name = st.site = name;
    st.photon.items = {{"Measurement", {}, {}}};
    st.basis.chooser = name;
    st.basis.items = {{"PC", {}, {}}};
    b.stations.push_back(st);
  }
  b.source_site = "alice";
  return b;
}

}  // namespace

TEST(Geo, OriginMapsToZero) {
  const auto g = geometry(false);
  const auto local = geo_to_local({g.site("source")}, g.site("source"));
  EXPECT_LT(local[0].norm(), 1e-6);
}

TEST(Geo, PublishedStraightLineDistances) {
  const auto g = geometry(false);
  EXPECT_NEAR(g.distance("source", "bob").value, 801.0, 7.0);
  EXPECT_NEAR(g.distance("source", "charlie").value, 721.0, 7.0);
  EXPECT_NEAR(g.distance("source", "randy").value, 446.0, 7.0);
}

TEST(Geo, AgreesWithHaversineOracle) {
  const auto g = geometry(false);
  for (auto [a, b] : {std::pair{"source", "bob"}, {"source", "charlie"}, {"source", "randy"}, {"randy", "charlie"}}) {
    const auto& p = g.site(a);
    const auto& q = g.site(b);
    const double want = oracle::haversine_distance(p.latitude, p.longitude_west, p.elevation, q.latitude, q.longitude_west,
                                                   q.elevation);
    EXPECT_NEAR(g.distance(a, b).value / want, 1.0, 4e-3) << a << "-" << b;
  }
}

TEST(Geo, SymmetryAndTriangleInequality) {
  const auto g = geometry(false);
  const std::vector<std::string> ids{"source", "bob", "charlie", "randy", "dome", "rac_centroid"};
  for (const auto& a : ids)
    for (const auto& b : ids) {
      EXPECT_DOUBLE_EQ(g.distance(a, b).value, g.distance(b, a).value);
      for (const auto& c : ids) EXPECT_LE(g.distance(a, c).value, g.distance(a, b).value + g.distance(b, c).value + 1e-9);
    }
}

TEST(Geo, LocalFrameOriginDoesNotChangeDistances) {
  const auto g = geometry(false);
  std::vector<GeoCoordinate> pts;
  for (const auto& id : {"source", "bob", "charlie", "randy"}) pts.push_back(g.site(id));
  const auto a = geo_to_local(pts, g.site("source"));
  const auto b = geo_to_local(pts, g.site("dome"));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double da = (a[i] - a[j]).norm(), db = (b[i] - b[j]).norm();
      EXPECT_NEAR(da / db, 1.0, 1e-9);
      EXPECT_NEAR(da / site_distance(pts[i], pts[j]).value, 1.0, 1e-9);
    }
}

TEST(Geo, DerivedLocationIsCornerMean) {
  const auto g = geometry(false);
  const auto& c = g.site("rac_centroid");
  double lat = 0;
  for (const auto& id : {"rac_se", "rac_sw", "rac_nw", "rac_ne"}) lat += g.site(id).latitude / 4;
  EXPECT_NEAR(c.latitude, lat, 1e-12);
  EXPECT_LT(g.distance("rac_centroid", "source").value, 20.0);
  EXPECT_THROW(g.site("nowhere"), ConfigError);
}

TEST(Geo, ReferenceDistancesOverride) {
  EXPECT_DOUBLE_EQ(geometry(true).distance("bob", "source").value, 800.6);
  EXPECT_DOUBLE_EQ(geometry(true).distance("randy", "charlie").value, 1081.45);
  EXPECT_NE(geometry(false).distance("randy", "charlie").value, 1081.45);
}

TEST(Timeline, PublishedIntermediateValues) {
  const auto r = full_report(geometry(true), budgets());
  EXPECT_NEAR(event(r, "Bob basis late").time.value, 2366.5, 0.05);
  EXPECT_NEAR(event(r, "Randy basis early").time.value, -551.9, 0.05);
  EXPECT_NEAR(event(r, "Bob basis early").time.value, 1166.5, 0.05);
  EXPECT_NEAR(event(r, "Bob measurement").time.value, 3078.7, 1e-9);
}

TEST(Tolerance, PublishedValues) {
  const auto r = full_report(geometry(true), budgets());
  const auto* bob = r.find("source", "bob");
  ASSERT_NE(bob, nullptr);
  EXPECT_NEAR(light_time(bob->distance).value, 2670.5, 0.05);
  EXPECT_NEAR(bob->tolerance.value, 304.0, 0.05);
  const auto* rc = r.find("randy", "charlie");
  ASSERT_NE(rc, nullptr);
  EXPECT_NEAR(rc->tolerance.value + event(r, "Charlie measurement").time.value, 3055.4, 0.05);
  EXPECT_NEAR(rc->tolerance.value, 263.9, 0.05);
  const auto* ba = r.find("bob", "source");
  ASSERT_NE(ba, nullptr);
  EXPECT_NEAR(ba->tolerance.value, 911.0, 0.5);
  EXPECT_EQ(&r.minimum(Loophole::freedom_of_choice), bob);
  EXPECT_EQ(&r.minimum(Loophole::locality), rc);
}

TEST(Tolerance, SigmaNearPublished) {
  const auto r = full_report(geometry(true), budgets());
  EXPECT_NEAR(r.minimum(Loophole::freedom_of_choice).tolerance.sigma / 25.0, 1.0, 0.4);
  EXPECT_NEAR(r.minimum(Loophole::locality).tolerance.sigma / 28.0, 1.0, 0.4);
}

TEST(Tolerance, GeoDistancesWithin10ns) {
  const auto ref = full_report(geometry(true), budgets());
  const auto geo = full_report(geometry(false), budgets());
  ASSERT_EQ(ref.entries.size(), geo.entries.size());
  EXPECT_NEAR(geo.minimum(Loophole::freedom_of_choice).tolerance.value, 304.0, 10.0);
  EXPECT_NEAR(geo.minimum(Loophole::locality).tolerance.value, 263.9, 10.0);
}

TEST(Tolerance, TrivialCases) {
  const SpacetimeEvent source{"s", "a", "", EventKind::creation, {0, 0}};
  const SpacetimeEvent late{"l", "a", "", EventKind::basis_late, {123.0, 0}};
  EXPECT_DOUBLE_EQ(foc_tolerance(source, late, {0, 0}).value, -123.0);
  const SpacetimeEvent early{"e", "a", "", EventKind::basis_early, {50.0, 0}};
  const SpacetimeEvent meas{"m", "a", "", EventKind::measurement, {50.0, 0}};
  EXPECT_DOUBLE_EQ(locality_tolerance(early, meas, {0, 0}).value, 0.0);
}

TEST(Tolerance, ZeroBudgetsColocated) {
  Geometry g;
  for (std::string id : {"alice", "bob", "charlie"}) g.sites[id] = GeoCoordinate{id, 43.0, 80.0, 300.0, 0.0};
  const auto r = full_report(g, zero_budgets());
  for (const auto& e : r.entries) EXPECT_NEAR(e.tolerance.value, 0.0, 1e-9);
}

TEST(Tolerance, ZeroBasisBudgetPutsChoicesAtCell) {
  auto b = itemized();
  for (auto& st : b.stations)
    for (auto& i : st.basis.items) i.min = i.max = {};
  for (const auto& e : event_timeline(b)) {
    if (e.kind != EventKind::basis_early && e.kind != EventKind::basis_late) continue;
    EXPECT_NEAR(e.time.value, station(b, e.station).photon.pockels_cell_time().value, 1e-9) << e.label;
  }
}

TEST(Monotonicity, PhotonDelayDecreasesFoc) {
  const auto geo = geometry(true);
  const double before = full_report(geo, itemized()).find("source", "bob")->tolerance.value;
  auto b = itemized();
  station(b, "bob").photon.items[2].max.value += 10.0;
  EXPECT_NEAR(full_report(geo, b).find("source", "bob")->tolerance.value, before - 10.0, 1e-9);
}

TEST(Monotonicity, MinimumBasisDelayIncreasesFoc) {
  const auto geo = geometry(true);
  auto base = itemized();
  for (std::size_t k = 0; k < station(base, "bob").basis.items.size(); ++k) {
    auto b = itemized();
    auto& item = station(b, "bob").basis.items[k];
    item.min.value += 5.0;
    item.max.value += 5.0;
    EXPECT_GT(full_report(geo, b).find("source", "bob")->tolerance.value,
              full_report(geo, base).find("source", "bob")->tolerance.value)
        << item.label;
  }
}

TEST(Monotonicity, MaximumBasisDelayDecreasesLocality) {
  const auto geo = geometry(true);
  const auto base = itemized();
  auto b = itemized();
  station(b, "alice").basis.items[1].max.value += 5.0;
  EXPECT_LT(full_report(geo, b).find("randy", "charlie")->tolerance.value,
            full_report(geo, base).find("randy", "charlie")->tolerance.value);
}

TEST(Budgets, StatedTotalsAndErrors) {
  auto b = budgets();
  EXPECT_DOUBLE_EQ(station(b, "alice").basis.maximum().value, 3431.0);
  auto items = itemized();
  EXPECT_NEAR(station(items, "alice").basis.maximum().value, 3430.5, 1e-9);
  EXPECT_NEAR(station(items, "bob").photon.total().value, 3078.7, 1e-9);
  PhotonBudget p;
  EXPECT_THROW(p.total(), MissingBudget);
  p.items = {{"Free-space", {10, 1}, {10, 1}}};
  EXPECT_THROW(p.measurement(), MissingBudget);
  nlohmann::json j = {{"stations", {{{"name", "x"}, {"photon", {{"items", nlohmann::json::array()}}}}}}};
  EXPECT_THROW(budgets_from_json(j), MissingBudget);
  EXPECT_THROW(read_json_file(kData + "/missing.json"), ConfigError);
  EXPECT_THROW(full_report(geometry(true), Budgets{}), MissingBudget);
}
