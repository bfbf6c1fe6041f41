#pragma once

#include <random>
#include <string>
#include <vector>

#include "dypro/graph.hpp"

namespace fixture {

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, std::size_t n, double lo = 0.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

/// Graph with the given anatomical regions present and random features.
inline dypro::PatientGraph graph(std::mt19937_64& rng, const dypro::FeatureSchema& schema,
                                 const std::vector<dypro::NodeKind>& regions,
                                 std::string id = "p") {
  dypro::RegionFeatures features;
  dypro::RegionCentroids centroids;
  std::uniform_real_distribution<double> c(-0.5, 0.5);
  for (auto k : regions) {
    features[k] = random_vector(rng, schema.region_len, -1.0, 1.0);
    centroids[k] = Eigen::Vector3d(c(rng), c(rng), c(rng));
  }
  return dypro::build_patient_graph(std::move(id), features,
                                    random_vector(rng, schema.clinical_len), centroids, schema);
}

inline dypro::PatientGraph full_graph(std::mt19937_64& rng, const dypro::FeatureSchema& schema,
                                      std::string id = "p") {
  return graph(rng, schema, {dypro::kAnatomicalKinds.begin(), dypro::kAnatomicalKinds.end()},
               std::move(id));
}

}  // namespace fixture
