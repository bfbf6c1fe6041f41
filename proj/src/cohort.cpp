#include "dypro/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dypro/error.hpp"
#include "dypro/metrics.hpp"
#include "dypro/random.hpp"

namespace dypro {

using nlohmann::json;

std::vector<SurvivalLabel> Cohort::labels(Task task) const {
  std::vector<SurvivalLabel> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(task == Task::Os ? p.os : p.dfs);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail(const std::string& patient, const std::string& field,
                       const std::string& what) {
  throw DataError("patient " + patient + ": field '" + field + "': " + what);
}

const json& require(const json& obj, const char* key, const std::string& patient,
                    const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) fail(patient, path + key, "missing");
  return obj.at(key);
}

double read_number(const json& j, const std::string& patient, const std::string& field) {
  if (!j.is_number()) fail(patient, field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(patient, field, "not finite");
  return v;
}

Eigen::VectorXd read_vector(const json& j, std::size_t expected, const std::string& patient,
                            const std::string& field) {
  if (!j.is_array()) fail(patient, field, "expected an array");
  if (j.size() != expected) {
    fail(patient, field,
         "length " + std::to_string(j.size()) + ", expected " + std::to_string(expected));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    v(static_cast<Eigen::Index>(i)) =
        read_number(j[i], patient, field + "[" + std::to_string(i) + "]");
  }
  return v;
}

SurvivalLabel read_label(const json& j, const std::string& patient, const std::string& field) {
  if (!j.is_object()) fail(patient, field, "expected an object");
  SurvivalLabel label;
  label.time = read_number(require(j, "time_years", patient, field + "."), patient,
                           field + ".time_years");
  if (label.time < 0.0) fail(patient, field + ".time_years", "negative");
  const json& e = require(j, "event", patient, field + ".");
  if (e.is_boolean()) {
    label.event = e.get<bool>();
  } else if (e.is_number_integer() && (e.get<long long>() == 0 || e.get<long long>() == 1)) {
    label.event = e.get<long long>() == 1;
  } else {
    fail(patient, field + ".event", "expected 0 or 1");
  }
  return label;
}

PatientRecord read_patient(const json& j, std::size_t index, const FeatureSchema& schema) {
  std::string id = "#" + std::to_string(index);
  if (!j.is_object()) fail(id, "patients[" + std::to_string(index) + "]", "expected an object");
  const json& id_field = require(j, "id", id, "");
  if (id_field.is_string()) {
    id = id_field.get<std::string>();
  } else if (id_field.is_number_integer()) {
    id = std::to_string(id_field.get<long long>());
  } else {
    fail(id, "id", "expected a string");
  }

  const json& regions = require(j, "regions", id, "");
  if (!regions.is_object()) fail(id, "regions", "expected an object");
  RegionFeatures features;
  RegionCentroids centroids;
  for (const auto& [key, region] : regions.items()) {
    const std::string field = "regions." + key;
    const auto kind = node_kind_from_key(key);
    if (!kind || *kind == NodeKind::Clinical) fail(id, field, "unknown region");
    if (!region.is_object()) fail(id, field, "expected an object");
    bool present = true;
    if (region.contains("present")) {
      if (!region["present"].is_boolean()) fail(id, field + ".present", "expected a boolean");
      present = region["present"].get<bool>();
    }
    if (!present) {
      if (*kind == NodeKind::GlobalCT) fail(id, field + ".present", "global CT cannot be absent");
      continue;
    }
    features[*kind] = read_vector(require(region, "features", id, field + "."), schema.region_len,
                                  id, field + ".features");
    if (*kind == NodeKind::GlobalCT && !region.contains("centroid")) continue;
    const Eigen::VectorXd c =
        read_vector(require(region, "centroid", id, field + "."), 3, id, field + ".centroid");
    centroids[*kind] = c;
  }

  const Eigen::VectorXd clinical =
      read_vector(require(j, "clinical", id, ""), schema.clinical_len, id, "clinical");
  for (Eigen::Index i = 0; i < clinical.size(); ++i) {
    if (clinical(i) < 0.0 || clinical(i) > 1.0) {
      fail(id, "clinical[" + std::to_string(i) + "]", "outside [0, 1]");
    }
  }

  PatientRecord record;
  record.id = id;
  record.dfs = read_label(require(j, "dfs", id, ""), id, "dfs");
  record.os = read_label(require(j, "os", id, ""), id, "os");
  if (record.dfs.time > record.os.time) fail(id, "dfs.time_years", "DFS time exceeds OS time");

  record.graph = build_patient_graph(id, features, clinical, centroids, schema);
  if (const auto problems = validate_graph(record.graph); !problems.empty()) {
    fail(id, "regions", problems.front());
  }
  return record;
}

std::size_t read_length(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 1) {
    throw DataError(std::string("feature_schema.") + key + " must be a positive integer");
  }
  return j[key].get<std::size_t>();
}

}  // namespace

Cohort parse_cohort(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("cohort file does not parse: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("cohort document must be an object");
  if (!doc.contains("schema_version") || doc["schema_version"] != kCohortSchemaVersion) {
    throw DataError("cohort schema_version must be " + std::to_string(kCohortSchemaVersion));
  }
  if (!doc.contains("feature_schema") || !doc["feature_schema"].is_object()) {
    throw DataError("cohort feature_schema missing");
  }
  Cohort cohort;
  cohort.schema.region_len = read_length(doc["feature_schema"], "region_len");
  cohort.schema.clinical_len = read_length(doc["feature_schema"], "clinical_len");
  if (!doc.contains("patients") || !doc["patients"].is_array()) {
    throw DataError("cohort patients array missing");
  }
  const json& patients = doc["patients"];
  for (std::size_t i = 0; i < patients.size(); ++i) {
    cohort.patients.push_back(read_patient(patients[i], i, cohort.schema));
  }
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_cohort(text.str());
}

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json label_json(const SurvivalLabel& l) {
  return json{{"time_years", l.time}, {"event", l.event ? 1 : 0}};
}

}  // namespace

std::string serialize_cohort(const Cohort& cohort) {
  json doc;
  doc["schema_version"] = kCohortSchemaVersion;
  doc["feature_schema"] = {{"region_len", cohort.schema.region_len},
                           {"clinical_len", cohort.schema.clinical_len}};
  json patients = json::array();
  for (const auto& p : cohort.patients) {
    json regions = json::object();
    json clinical;
    for (const auto& node : p.graph.nodes) {
      if (node.kind == NodeKind::Clinical) {
        clinical = vector_json(node.features);
        continue;
      }
      json region = {{"present", node.present}};
      if (node.present) {
        region["features"] = vector_json(node.features);
        region["centroid"] = vector_json(node.centroid);
      }
      regions[node_kind_key(node.kind)] = std::move(region);
    }
    patients.push_back({{"id", p.id},
                        {"regions", std::move(regions)},
                        {"clinical", std::move(clinical)},
                        {"dfs", label_json(p.dfs)},
                        {"os", label_json(p.os)}});
  }
  doc["patients"] = std::move(patients);
  return doc.dump(1);
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write cohort file " + path.string());
  out << serialize_cohort(cohort) << '\n';
  if (!out) throw DataError("failed writing cohort file " + path.string());
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr double kHazardCap = 0.95;
constexpr std::uint64_t kDirectionSeed = 0x7a3c51e9d2b04f68ULL;

void check_scenario(const SimulationScenario& s) {
  if (!(s.signal >= 0.0)) throw ConfigError("simulation signal must be >= 0");
  if (!(s.censoring >= 0.0 && s.censoring < 1.0)) {
    throw ConfigError("simulation censoring must be in [0, 1)");
  }
  if (!(s.hazard_ratio >= 1.0)) throw ConfigError("simulation hazard ratio must be >= 1");
  if (!(s.os_hazard > 0.0 && s.os_hazard < 1.0)) {
    throw ConfigError("simulation OS hazard must be in (0, 1)");
  }
  if (!(s.dfs_hazard >= s.os_hazard && s.dfs_hazard < 1.0)) {
    throw ConfigError("simulation DFS hazard must be in [OS hazard, 1)");
  }
  if (!(s.region_absent >= 0.0 && s.region_absent < 1.0)) {
    throw ConfigError("simulation region_absent must be in [0, 1)");
  }
}

double group_hazard(double base, double ratio, int group) {
  return std::min(group == 1 ? base * ratio : base, kHazardCap);
}

// Number of whole years survived under a constant annual hazard.
double survived_years(double u, double hazard) {
  return std::floor(std::log(u) / std::log1p(-hazard));
}

}  // namespace

double expected_censoring(const SimulationScenario& scenario, double limit) {
  if (!(limit > 0.0)) return 1.0;
  double rate = 0.0;
  for (int g = 0; g < 2; ++g) {
    const double h = group_hazard(scenario.os_hazard, scenario.hazard_ratio, g);
    double mass = h;  // P(T = k + 0.5)
    for (int k = 0; mass > 1e-18 && k < 100000; ++k) {
      rate += 0.5 * mass * std::min((k + 0.5) / limit, 1.0);
      mass *= 1.0 - h;
    }
  }
  return rate;
}

namespace {

double solve_censoring_limit(const SimulationScenario& s) {
  if (s.censoring == 0.0) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = 1.0;
  while (expected_censoring(s, hi) > s.censoring) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (expected_censoring(s, mid) > s.censoring ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SimulatedCohort simulate_cohort(std::size_t n, std::uint64_t seed,
                                const SimulationScenario& scenario) {
  if (n < 10) throw ConfigError("simulate_cohort needs at least 10 patients");
  check_scenario(scenario);
  const FeatureSchema& schema = scenario.schema;
  const auto region_len = static_cast<Eigen::Index>(schema.region_len);
  const auto clinical_len = static_cast<Eigen::Index>(schema.clinical_len);

  // Group directions and region layout are fixed across seeds.
  std::mt19937_64 fixed(kDirectionSeed);
  std::bernoulli_distribution coin(0.5);
  auto sign_vector = [&](Eigen::Index len) {
    Eigen::VectorXd v(len);
    for (Eigen::Index i = 0; i < len; ++i) v(i) = coin(fixed) ? 1.0 : -1.0;
    return v;
  };
  std::map<NodeKind, Eigen::VectorXd> direction;
  std::map<NodeKind, Eigen::Vector3d> base_centroid;
  std::uniform_real_distribution<double> centre(-0.4, 0.4);
  for (NodeKind k : kAnatomicalKinds) {
    direction[k] = sign_vector(region_len);
    base_centroid[k] = Eigen::Vector3d(centre(fixed), centre(fixed), centre(fixed));
  }
  const Eigen::VectorXd clinical_direction = sign_vector(clinical_len);

  SimulatedCohort sim;
  sim.cohort.schema = schema;
  sim.censoring_limit = solve_censoring_limit(scenario);

  std::mt19937_64 rng(derive_seed(seed, {0x51u}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution absent(scenario.region_absent);

  struct Draft {
    RegionFeatures features;
    RegionCentroids centroids;
    Eigen::VectorXd clinical;
  };
  std::vector<Draft> drafts(n);
  Eigen::MatrixXd clinical_raw(static_cast<Eigen::Index>(n), clinical_len);

  for (std::size_t i = 0; i < n; ++i) {
    const int g = coin(rng) ? 1 : 0;
    sim.group.push_back(g);
    const double shift = scenario.signal * 0.5 * (g == 1 ? 1.0 : -1.0);

    Draft& d = drafts[i];
    for (NodeKind k : kAnatomicalKinds) {
      const bool drop = k != NodeKind::LiverParenchyma && absent(rng);
      Eigen::VectorXd f(region_len);
      for (Eigen::Index c = 0; c < region_len; ++c) f(c) = gauss(rng);
      const Eigen::Vector3d where =
          base_centroid[k] + Eigen::Vector3d(jitter(rng), jitter(rng), jitter(rng));
      if (drop) continue;
      d.features[k] = shift * direction[k] + f;
      d.centroids[k] = where;
    }
    for (Eigen::Index c = 0; c < clinical_len; ++c) {
      clinical_raw(static_cast<Eigen::Index>(i), c) = shift * clinical_direction(c) + gauss(rng);
    }

    const double u = 1.0 - unit(rng);  // (0, 1]
    const double t_os =
        survived_years(u, group_hazard(scenario.os_hazard, scenario.hazard_ratio, g)) + 0.5;
    const double t_dfs =
        survived_years(u, group_hazard(scenario.dfs_hazard, scenario.hazard_ratio, g)) + 0.5;
    const double c = std::isinf(sim.censoring_limit)
                         ? std::numeric_limits<double>::infinity()
                         : sim.censoring_limit * unit(rng);

    PatientRecord record;
    record.id = "sim-" + std::to_string(i);
    record.os = {std::min(t_os, c), t_os <= c};
    record.dfs = {std::min(t_dfs, c), t_dfs <= c};
    sim.cohort.patients.push_back(std::move(record));
  }

  // Min-max normalize clinical columns over the cohort.
  for (Eigen::Index c = 0; c < clinical_len; ++c) {
    const double lo = clinical_raw.col(c).minCoeff();
    const double span = clinical_raw.col(c).maxCoeff() - lo;
    for (Eigen::Index r = 0; r < clinical_raw.rows(); ++r) {
      clinical_raw(r, c) = span > 0.0 ? (clinical_raw(r, c) - lo) / span : 0.0;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& p = sim.cohort.patients[i];
    p.graph = build_patient_graph(p.id, drafts[i].features,
                                  clinical_raw.row(static_cast<Eigen::Index>(i)).transpose(),
                                  drafts[i].centroids, schema);
  }
  return sim;
}

double oracle_cindex(const SimulatedCohort& sim, Task task) {
  const auto labels = sim.cohort.labels(task);
  std::vector<double> risk(sim.group.begin(), sim.group.end());
  return harrell_cindex(risk, labels);
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::vector<std::vector<std::size_t>> make_strata(std::span<const std::size_t> members,
                                                  std::span<const SurvivalLabel> os,
                                                  std::span<const SurvivalLabel> dfs,
                                                  std::size_t k) {
  std::vector<std::size_t> cells[2][2];
  for (std::size_t m : members) cells[os[m].event][dfs[m].event].push_back(m);

  std::vector<std::vector<std::size_t>> strata;
  std::vector<std::size_t> parents[2];
  for (int o = 0; o < 2; ++o) {
    std::vector<std::size_t> parent;
    for (int d = 0; d < 2; ++d) {
      auto& cell = cells[o][d];
      if (cell.empty()) continue;
      if (cell.size() >= k) {
        strata.push_back(std::move(cell));
      } else {
        parent.insert(parent.end(), cell.begin(), cell.end());
      }
    }
    parents[o] = std::move(parent);
  }
  std::vector<std::size_t> leftover;
  for (auto& parent : parents) {
    if (parent.empty()) continue;
    if (parent.size() >= k) {
      strata.push_back(std::move(parent));
    } else {
      leftover.insert(leftover.end(), parent.begin(), parent.end());
    }
  }
  if (!leftover.empty()) strata.push_back(std::move(leftover));
  for (auto& s : strata) std::sort(s.begin(), s.end());
  return strata;
}

// Shuffles each stratum and deals members to `buckets`, continuing the
// deal position from one stratum to the next.
std::vector<std::vector<std::size_t>> deal(std::span<const std::size_t> members,
                                           std::span<const SurvivalLabel> os,
                                           std::span<const SurvivalLabel> dfs,
                                           std::size_t buckets, std::size_t min_stratum,
                                           std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out(buckets);
  auto strata = make_strata(members, os, dfs, min_stratum);
  std::size_t position = 0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    std::mt19937_64 rng(derive_seed(seed, {s}));
    std::shuffle(strata[s].begin(), strata[s].end(), rng);
    for (std::size_t m : strata[s]) out[position++ % buckets].push_back(m);
  }
  for (auto& b : out) std::sort(b.begin(), b.end());
  return out;
}

}  // namespace

Holdout stratified_holdout(std::span<const std::size_t> members,
                           std::span<const SurvivalLabel> os, std::span<const SurvivalLabel> dfs,
                           std::uint64_t seed) {
  constexpr std::size_t kBuckets = 5;  // one bucket of five is validation
  if (members.size() < 2) throw DataError("stratified_holdout: need at least two patients");
  auto buckets = deal(members, os, dfs, kBuckets, kBuckets, seed);
  Holdout out;
  out.validation = std::move(buckets[0]);
  for (std::size_t b = 1; b < kBuckets; ++b) {
    out.train.insert(out.train.end(), buckets[b].begin(), buckets[b].end());
  }
  std::sort(out.train.begin(), out.train.end());
  return out;
}

SplitPlan stratified_repeated_kfold(std::span<const SurvivalLabel> os,
                                    std::span<const SurvivalLabel> dfs, std::size_t k,
                                    std::size_t repeats, std::uint64_t seed) {
  if (os.size() != dfs.size()) throw ShapeError("stratified_repeated_kfold: label counts differ");
  if (k < 2) throw ConfigError("k must be at least 2");
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (os.size() < k) {
    throw DataError("cohort of " + std::to_string(os.size()) + " patients is smaller than k = " +
                    std::to_string(k));
  }

  std::vector<std::size_t> everyone(os.size());
  std::iota(everyone.begin(), everyone.end(), 0);

  SplitPlan plan{k, repeats, {}};
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto folds = deal(everyone, os, dfs, k, k, derive_seed(seed, {r}));
    for (std::size_t f = 0; f < k; ++f) {
      FoldSplit split;
      split.repeat = r;
      split.fold = f;
      split.test = folds[f];
      std::vector<std::size_t> rest;
      for (std::size_t g = 0; g < k; ++g) {
        if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(rest.begin(), rest.end());
      Holdout inner = stratified_holdout(rest, os, dfs, derive_seed(seed, {r, f, 0x1aaeu}));
      split.train = std::move(inner.train);
      split.validation = std::move(inner.validation);
      plan.folds.push_back(std::move(split));
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Augmentation

std::vector<PatientGraph> augment(const PatientGraph& graph, std::uint64_t seed,
                                  const AugmentOptions& options) {
  if (!(options.dropout >= 0.0 && options.dropout <= 1.0)) {
    throw ConfigError("augmentation dropout must be in [0, 1]");
  }
  if (!(options.noise >= 0.0)) throw ConfigError("augmentation noise must be >= 0");

  std::vector<PatientGraph> out;
  out.reserve(options.variants + 1);
  out.push_back(graph);
  for (std::size_t v = 1; v <= options.variants; ++v) {
    std::mt19937_64 rng(derive_seed(seed, {v}));
    std::bernoulli_distribution drop(options.dropout);
    std::normal_distribution<double> noise(0.0, 1.0);

    PatientGraph g = graph;
    std::size_t remaining = g.present_anatomical_count();
    std::vector<bool> dropped(g.nodes.size(), false);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      GraphNode& node = g.nodes[i];
      if (!node.present) continue;
      if (is_anatomical(node.kind) && drop(rng) && remaining > 1) {
        node.present = false;
        dropped[i] = true;
        --remaining;
        continue;
      }
      for (Eigen::Index c = 0; c < node.features.size(); ++c) {
        node.features(c) += options.noise * noise(rng);
      }
    }
    std::erase_if(g.edges, [&](const GraphEdge& e) { return dropped[e.source] || dropped[e.target]; });
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace dypro
