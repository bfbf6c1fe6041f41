#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "dypro/cohort.hpp"
#include "dypro/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dypro;

namespace {

// region_len 2, clinical_len 2.
std::string three_patients(const std::string& second_dfs = "1.5") {
  return R"({
  "schema_version": 1,
  "feature_schema": {"region_len": 2, "clinical_len": 2},
  "patients": [
    {"id": "a",
     "regions": {"liver": {"present": true, "features": [0.1, 0.2], "centroid": [0.0, 0.1, 0.2]},
                 "tumors": {"present": true, "features": [1.0, -1.0], "centroid": [0.3, 0.3, 0.3]}},
     "clinical": [0.0, 1.0],
     "dfs": {"time_years": 1.0, "event": 1},
     "os": {"time_years": 2.5, "event": 0}},
    {"id": "b",
     "regions": {"liver": {"present": true, "features": [0.5, 0.5], "centroid": [0.0, 0.0, 0.0]},
                 "portal_veins": {"present": false}},
     "clinical": [0.5, 0.5],
     "dfs": {"time_years": )" +
         second_dfs + R"(, "event": 0},
     "os": {"time_years": 3.0, "event": 1}},
    {"id": "c",
     "regions": {"remnant": {"features": [2.0, 3.0], "centroid": [-0.2, 0.1, 0.0]}},
     "clinical": [1.0, 0.25],
     "dfs": {"time_years": 0.5, "event": true},
     "os": {"time_years": 0.5, "event": false}}
  ]
})";
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dypro_test_" + name);
}

std::vector<SurvivalLabel> labels_with_events(std::size_t n, std::size_t events) {
  std::vector<SurvivalLabel> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = {1.0 + static_cast<double>(i), i < events};
  return y;
}

}  // namespace

TEST_CASE("load a three-patient file") {
  const auto path = temp_file("three.json");
  std::ofstream(path) << three_patients();
  const Cohort c = load_cohort(path);
  std::filesystem::remove(path);

  REQUIRE(c.patients.size() == 3);
  CHECK(c.patients[0].id == "a");
  CHECK(c.patients[2].id == "c");
  CHECK(c.schema == FeatureSchema{2, 2});
  CHECK(c.patients[0].os == SurvivalLabel{2.5, false});
  CHECK(c.patients[2].dfs == SurvivalLabel{0.5, true});
  // Patient b lists portal veins as absent: the node carries no edges.
  const PatientGraph& b = c.patients[1].graph;
  CHECK_FALSE(b.nodes[kind_index(NodeKind::PortalVeins)].present);
  CHECK(b.present_count() == 3);
  CHECK(b.edges.size() == 2);
  for (const auto& p : c.patients) CHECK(validate_graph(p.graph).empty());
  CHECK(c.labels(Task::Os).size() == 3);
}

TEST_CASE("schema violations name the patient and field") {
  CHECK_THROWS_WITH_AS(parse_cohort(three_patients("3.5")),
                       doctest::Contains("patient b: field 'dfs.time_years'"), DataError);

  std::string bad = three_patients();
  bad.replace(bad.find("[0.0, 1.0]"), 10, "[0.0, 1.5]");
  CHECK_THROWS_WITH_AS(parse_cohort(bad), doctest::Contains("patient a: field 'clinical[1]'"),
                       DataError);

  std::string shortened = three_patients();
  shortened.replace(shortened.find("[2.0, 3.0]"), 10, "[2.0]");
  CHECK_THROWS_WITH_AS(parse_cohort(shortened),
                       doctest::Contains("patient c: field 'regions.remnant.features'"),
                       DataError);

  std::string event = three_patients();
  event.replace(event.find("\"event\": 1}"), 11, "\"event\": 2}");
  CHECK_THROWS_WITH_AS(parse_cohort(event), doctest::Contains("dfs.event"), DataError);

  CHECK_THROWS_AS(parse_cohort("{not json"), DataError);
  CHECK_THROWS_AS(parse_cohort(R"({"schema_version": 2})"), DataError);
  CHECK_THROWS_AS(load_cohort(temp_file("missing.json")), DataError);
}

TEST_CASE("cohort files round-trip") {
  const auto sim = simulate_cohort(30, 5, {});
  const Cohort back = parse_cohort(serialize_cohort(sim.cohort));
  REQUIRE(back.patients.size() == sim.cohort.patients.size());
  for (std::size_t i = 0; i < back.patients.size(); ++i) {
    const auto& a = sim.cohort.patients[i];
    const auto& b = back.patients[i];
    CHECK(a.id == b.id);
    CHECK(a.os == b.os);
    CHECK(a.dfs == b.dfs);
    REQUIRE(a.graph.nodes.size() == b.graph.nodes.size());
    for (std::size_t n = 0; n < a.graph.nodes.size(); ++n) {
      CHECK(a.graph.nodes[n].present == b.graph.nodes[n].present);
      if (a.graph.nodes[n].present) CHECK(a.graph.nodes[n].features == b.graph.nodes[n].features);
    }
    CHECK(a.graph.edges.size() == b.graph.edges.size());
  }
}

TEST_CASE("simulated cohorts") {
  const auto sim = simulate_cohort(400, 7, {});
  CHECK(sim.cohort.patients.size() == 400);
  CHECK(sim.group.size() == 400);
  for (const auto& p : sim.cohort.patients) {
    CHECK(p.dfs.time <= p.os.time);
    CHECK(validate_graph(p.graph).empty());
    const auto& clinical = p.graph.nodes[kind_index(NodeKind::Clinical)].features;
    CHECK(clinical.minCoeff() >= 0.0);
    CHECK(clinical.maxCoeff() <= 1.0);
    CHECK(p.graph.nodes[kind_index(NodeKind::LiverParenchyma)].present);
  }
  const auto again = simulate_cohort(400, 7, {});
  CHECK(serialize_cohort(sim.cohort) == serialize_cohort(again.cohort));
  CHECK(serialize_cohort(sim.cohort) != serialize_cohort(simulate_cohort(400, 8, {}).cohort));
  CHECK_THROWS_AS(simulate_cohort(9, 1, {}), ConfigError);
}

TEST_CASE("oracle C-index is pair enumeration on the true groups") {
  const auto sim = simulate_cohort(400, 7, {});
  std::vector<double> risk(sim.group.begin(), sim.group.end());
  for (Task task : {Task::Os, Task::Dfs}) {
    const auto expected = oracle::cindex(risk, sim.cohort.labels(task));
    REQUIRE(expected);
    CHECK(std::abs(oracle_cindex(sim, task) - *expected) <= 1e-12);
  }
  CHECK(oracle_cindex(sim, Task::Os) == doctest::Approx(0.756).epsilon(1e-3));
  CHECK(oracle_cindex(sim, Task::Dfs) == doctest::Approx(0.826).epsilon(1e-3));

  SimulationScenario flat;
  flat.hazard_ratio = 1.0;
  const auto null = simulate_cohort(2000, 3, flat);
  CHECK(std::abs(oracle_cindex(null, Task::Os) - 0.5) <= 0.03);
}

TEST_CASE("censoring rate") {
  const SimulationScenario s;
  const auto sim = simulate_cohort(10000, 99, s);
  CHECK(expected_censoring(s, sim.censoring_limit) == doctest::Approx(0.3).epsilon(1e-9));
  std::size_t censored = 0;
  for (const auto& l : sim.cohort.labels(Task::Os)) censored += l.event ? 0 : 1;
  CHECK(std::abs(static_cast<double>(censored) / 10000.0 - 0.3) <= 0.03);

  SimulationScenario none;
  none.censoring = 0.0;
  const auto full = simulate_cohort(50, 1, none);
  for (const auto& l : full.cohort.labels(Task::Os)) CHECK(l.event);
}

TEST_CASE("ten patients into five folds") {
  const auto os = labels_with_events(10, 4);
  const auto dfs = labels_with_events(10, 4);
  const SplitPlan plan = stratified_repeated_kfold(os, dfs, 5, 1, 3);
  REQUIRE(plan.folds.size() == 5);
  std::size_t lo = 10, hi = 0;
  for (const auto& f : plan.folds) {
    CHECK(f.test.size() == 2);
    std::size_t events = 0;
    for (auto i : f.test) events += os[i].event ? 1 : 0;
    lo = std::min(lo, events);
    hi = std::max(hi, events);
  }
  CHECK(hi - lo <= 1);
}

TEST_CASE("repeated stratified plan") {
  const auto sim = simulate_cohort(400, 7, {});
  const auto os = sim.cohort.labels(Task::Os);
  const auto dfs = sim.cohort.labels(Task::Dfs);
  const SplitPlan plan = stratified_repeated_kfold(os, dfs, 5, 3, 11);
  REQUIRE(plan.folds.size() == 15);

  std::set<std::vector<std::size_t>> distinct;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<int> seen(400, 0);
    std::vector<std::size_t> os_events;
    for (std::size_t f = 0; f < 5; ++f) {
      const FoldSplit& fold = plan.folds[r * 5 + f];
      CHECK(fold.repeat == r);
      CHECK(fold.fold == f);
      auto test = fold.test;
      std::sort(test.begin(), test.end());
      distinct.insert(test);
      std::size_t events = 0;
      for (auto i : fold.test) {
        ++seen[i];
        events += os[i].event ? 1 : 0;
      }
      os_events.push_back(events);

      // Inner split: disjoint, covers the non-test patients, about 0.8 / 0.2.
      std::vector<int> inner(400, 0);
      for (auto i : fold.train) ++inner[i];
      for (auto i : fold.validation) ++inner[i];
      for (auto i : fold.test) CHECK(inner[i] == 0);
      CHECK(std::count(inner.begin(), inner.end(), 1) == 400 - static_cast<long>(fold.test.size()));
      CHECK(std::count(inner.begin(), inner.end(), 2) == 0);
      const double share = static_cast<double>(fold.validation.size()) /
                           static_cast<double>(fold.train.size() + fold.validation.size());
      CHECK(share == doctest::Approx(0.2).epsilon(0.05));
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    const auto [mn, mx] = std::minmax_element(os_events.begin(), os_events.end());
    CHECK(*mx - *mn <= 1);
  }
  CHECK(distinct.size() == 15);

  const SplitPlan same = stratified_repeated_kfold(os, dfs, 5, 3, 11);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(same.folds[i].test == plan.folds[i].test);
    CHECK(same.folds[i].train == plan.folds[i].train);
    CHECK(same.folds[i].validation == plan.folds[i].validation);
  }
  CHECK_THROWS_AS(stratified_repeated_kfold(std::span(os).first(4), std::span(dfs).first(4), 5,
                                            1, 1),
                  DataError);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(21);
  const FeatureSchema schema;
  const PatientGraph g = fixture::full_graph(rng, schema);
  auto same = [](const PatientGraph& a, const PatientGraph& b) {
    if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
      if (a.nodes[i].present != b.nodes[i].present) return false;
      if (a.nodes[i].present && a.nodes[i].features != b.nodes[i].features) return false;
    }
    return true;
  };

  SUBCASE("degenerate options give identical copies") {
    const auto v = augment(g, 5, {0.0, 0.0, 4});
    REQUIRE(v.size() == 5);
    for (const auto& x : v) CHECK(same(x, g));
  }
  SUBCASE("full dropout keeps one region") {
    const auto v = augment(g, 5, {1.0, 0.0, 4});
    CHECK(same(v[0], g));
    for (std::size_t i = 1; i < v.size(); ++i) {
      CHECK(v[i].present_anatomical_count() == 1);
      CHECK(v[i].nodes[kind_index(NodeKind::GlobalCT)].present);
      CHECK(v[i].nodes[kind_index(NodeKind::Clinical)].present);
      CHECK(validate_graph(v[i]).empty());
    }
  }
  SUBCASE("fixed seed repeats") {
    const auto a = augment(g, 77);
    const auto b = augment(g, 77);
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same(a[i], b[i]));
    CHECK(same(a[0], g));
    CHECK_FALSE(same(a[1], g));
  }
  SUBCASE("every variant is a valid graph") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      for (const auto& x : augment(g, seed, {0.3, 0.1, 4})) CHECK(validate_graph(x).empty());
    }
  }
  SUBCASE("noise scale") {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto v = augment(g, seed, {0.0, 0.1, 4});
      for (std::size_t i = 1; i < v.size(); ++i) {
        for (std::size_t n = 0; n < g.nodes.size(); ++n) {
          const Eigen::VectorXd d = v[i].nodes[n].features - g.nodes[n].features;
          sum += d.sum();
          sq += d.squaredNorm();
          count += static_cast<std::size_t>(d.size());
        }
      }
    }
    const double mean = sum / static_cast<double>(count);
    CHECK(std::abs(mean) <= 0.005);
    CHECK(std::sqrt(sq / static_cast<double>(count)) == doctest::Approx(0.1).epsilon(0.03));
  }
}
