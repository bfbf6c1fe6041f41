#include "dypro/graph.hpp"

#include <cmath>
#include <string_view>

#include "dypro/error.hpp"

namespace dypro {

namespace {

using Triplet = Eigen::Triplet<double>;

ad::SparseHandle make_sparse(Eigen::Index rows, Eigen::Index cols,
                             const std::vector<Triplet>& triplets) {
  auto m = std::make_shared<ad::SparseMatrix>(rows, cols);
  m->setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

Eigen::Vector3d clamp_unit(const Eigen::Vector3d& v) { return v.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

const char* node_kind_key(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::LiverParenchyma: return "liver";
    case NodeKind::FutureLiverRemnant: return "remnant";
    case NodeKind::HepaticVeins: return "hepatic_veins";
    case NodeKind::PortalVeins: return "portal_veins";
    case NodeKind::MetastaticTumors: return "tumors";
    case NodeKind::GlobalCT: return "global_ct";
    case NodeKind::Clinical: return "clinical";
  }
  return "unknown";
}

std::optional<NodeKind> node_kind_from_key(std::string_view key) noexcept {
  for (std::size_t i = 0; i < kNodeKindCount; ++i) {
    const auto k = static_cast<NodeKind>(i);
    if (key == node_kind_key(k)) return k;
  }
  return std::nullopt;
}

std::size_t PatientGraph::present_count() const noexcept {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.present ? 1 : 0;
  return n;
}

std::size_t PatientGraph::present_anatomical_count() const noexcept {
  std::size_t n = 0;
  for (const auto& node : nodes) n += (node.present && is_anatomical(node.kind)) ? 1 : 0;
  return n;
}

PatientGraph build_patient_graph(std::string patient_id, const RegionFeatures& region_features,
                                 const Eigen::VectorXd& clinical_features,
                                 const RegionCentroids& centroids, const FeatureSchema& schema) {
  if (static_cast<std::size_t>(clinical_features.size()) != schema.clinical_len) {
    throw DataError("patient " + patient_id + ": clinical feature length " +
                    std::to_string(clinical_features.size()) + ", schema expects " +
                    std::to_string(schema.clinical_len));
  }

  std::size_t provided = 0;
  Eigen::VectorXd feature_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(schema.region_len));
  for (const auto& [kind, features] : region_features) {
    if (kind == NodeKind::Clinical) {
      throw DataError("patient " + patient_id + ": clinical features passed as a region");
    }
    if (static_cast<std::size_t>(features.size()) != schema.region_len) {
      throw DataError("patient " + patient_id + ": region '" + node_kind_key(kind) +
                      "' feature length " + std::to_string(features.size()) +
                      ", schema expects " + std::to_string(schema.region_len));
    }
    if (!is_anatomical(kind)) continue;
    if (!centroids.contains(kind)) {
      throw DataError("patient " + patient_id + ": region '" + node_kind_key(kind) +
                      "' has no centroid");
    }
    feature_sum += features;
    ++provided;
  }
  if (provided == 0) throw DataError("patient " + patient_id + ": no anatomical regions");

  PatientGraph graph;
  graph.patient_id = std::move(patient_id);

  for (NodeKind kind : kAnatomicalKinds) {
    GraphNode node;
    node.kind = kind;
    if (auto it = region_features.find(kind); it != region_features.end()) {
      node.features = it->second;
      node.centroid = centroids.at(kind);
      node.present = true;
    } else {
      node.present = false;
    }
    graph.nodes.push_back(std::move(node));
  }

  GraphNode global;
  global.kind = NodeKind::GlobalCT;
  if (auto it = region_features.find(NodeKind::GlobalCT); it != region_features.end()) {
    global.features = it->second;
  } else {
    global.features = feature_sum / static_cast<double>(provided);
  }
  if (auto it = centroids.find(NodeKind::GlobalCT); it != centroids.end()) {
    global.centroid = it->second;
  }
  graph.nodes.push_back(global);
  const std::size_t global_index = graph.nodes.size() - 1;

  GraphNode clinical;
  clinical.kind = NodeKind::Clinical;
  clinical.features = clinical_features;
  graph.nodes.push_back(clinical);
  const std::size_t clinical_index = graph.nodes.size() - 1;

  for (std::size_t i = 0; i < kAnatomicalKinds.size(); ++i) {
    if (!graph.nodes[i].present) continue;
    GraphEdge spatial;
    spatial.source = i;
    spatial.target = global_index;
    spatial.kind = EdgeKind::SpatialTopology;
    spatial.attr.offset = clamp_unit(graph.nodes[i].centroid - global.centroid);
    graph.edges.push_back(spatial);

    GraphEdge context;
    context.source = clinical_index;
    context.target = i;
    context.kind = EdgeKind::ClinicalContext;
    graph.edges.push_back(context);
  }
  return graph;
}

std::vector<std::string> validate_graph(const PatientGraph& graph) {
  std::vector<std::string> violations;
  std::array<int, kNodeKindCount> kind_count{};
  std::array<std::optional<std::size_t>, kNodeKindCount> present_at{};

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& node = graph.nodes[i];
    ++kind_count[kind_index(node.kind)];
    if (node.present) {
      present_at[kind_index(node.kind)] = i;
      if (!node.features.allFinite()) {
        violations.push_back(std::string("non-finite features: ") + node_kind_key(node.kind));
      }
    }
  }
  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    if (kind_count[k] > 1) {
      violations.push_back(std::string("duplicate node kind: ") +
                           node_kind_key(static_cast<NodeKind>(k)));
    }
  }
  const auto global = present_at[kind_index(NodeKind::GlobalCT)];
  const auto clinical = present_at[kind_index(NodeKind::Clinical)];
  if (!clinical) violations.emplace_back("clinical node absent");
  if (!global) violations.emplace_back("global CT node absent");
  if (graph.present_anatomical_count() == 0) violations.emplace_back("no anatomical node present");

  std::vector<int> spatial(graph.nodes.size(), 0);
  std::vector<int> context(graph.nodes.size(), 0);
  for (const auto& edge : graph.edges) {
    const bool src_ok = edge.source < graph.nodes.size() && graph.nodes[edge.source].present;
    const bool dst_ok = edge.target < graph.nodes.size() && graph.nodes[edge.target].present;
    if (!src_ok || !dst_ok) {
      violations.emplace_back("dangling edge");
      continue;
    }
    if (!edge.attr.offset.allFinite() || edge.attr.offset.cwiseAbs().maxCoeff() > 1.0) {
      violations.emplace_back("edge offset outside [-1, 1]");
    }
    const NodeKind src = graph.nodes[edge.source].kind;
    const NodeKind dst = graph.nodes[edge.target].kind;
    if (edge.kind == EdgeKind::SpatialTopology) {
      if (!is_anatomical(src) || dst != NodeKind::GlobalCT) {
        violations.emplace_back("spatial-topology edge must join an anatomical node to global CT");
      } else {
        ++spatial[edge.source];
      }
    } else {
      if (src != NodeKind::Clinical || !is_anatomical(dst)) {
        violations.emplace_back("clinical-context edge must join clinical to an anatomical node");
      } else {
        ++context[edge.target];
      }
    }
  }
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& node = graph.nodes[i];
    if (!node.present || !is_anatomical(node.kind)) continue;
    if (global && spatial[i] != 1) {
      violations.push_back(std::string(spatial[i] == 0 ? "missing" : "duplicate") +
                           " spatial-topology edge: " + node_kind_key(node.kind));
    }
    if (clinical && context[i] != 1) {
      violations.push_back(std::string(context[i] == 0 ? "missing" : "duplicate") +
                           " clinical-context edge: " + node_kind_key(node.kind));
    }
  }
  return violations;
}

// ---------------------------------------------------------------------------

GraphBatch::GraphBatch(std::span<const PatientGraph* const> graphs) { build(graphs); }

GraphBatch::GraphBatch(const PatientGraph& graph) {
  const PatientGraph* one[] = {&graph};
  build(one);
}

void GraphBatch::build(std::span<const PatientGraph* const> graphs) {
  graph_count_ = graphs.size();
  std::array<std::vector<const Eigen::VectorXd*>, kNodeKindCount> kind_rows;
  std::array<std::vector<std::size_t>, kNodeKindCount> kind_nodes;
  std::vector<Eigen::Vector3d> attrs;
  std::vector<std::size_t> graph_sizes;

  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const PatientGraph& graph = *graphs[g];
    std::vector<std::optional<std::size_t>> local(graph.nodes.size());
    std::size_t size = 0;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
      const auto& node = graph.nodes[i];
      if (!node.present) continue;
      local[i] = node_kind_.size();
      kind_rows[kind_index(node.kind)].push_back(&node.features);
      kind_nodes[kind_index(node.kind)].push_back(node_kind_.size());
      node_kind_.push_back(node.kind);
      node_graph_.push_back(g);
      ++size;
    }
    if (size == 0) throw DataError("patient " + graph.patient_id + ": graph has no nodes");
    graph_sizes.push_back(size);
    for (const auto& edge : graph.edges) {
      if (edge.source >= local.size() || edge.target >= local.size() || !local[edge.source] ||
          !local[edge.target]) {
        throw DataError("patient " + graph.patient_id + ": dangling edge");
      }
      arc_source_.push_back(*local[edge.source]);
      arc_target_.push_back(*local[edge.target]);
      attrs.push_back(edge.attr.offset);
      arc_source_.push_back(*local[edge.target]);
      arc_target_.push_back(*local[edge.source]);
      attrs.push_back(-edge.attr.offset);
    }
  }

  const auto n = static_cast<Eigen::Index>(node_kind_.size());
  const auto a = static_cast<Eigen::Index>(arc_source_.size());
  const auto b = static_cast<Eigen::Index>(graph_count_);

  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    const auto rows = static_cast<Eigen::Index>(kind_rows[k].size());
    const Eigen::Index width = rows > 0 ? kind_rows[k].front()->size() : 0;
    kind_features_[k].resize(rows, width);
    std::vector<Triplet> scatter;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (kind_rows[k][r]->size() != width) {
        throw DataError(std::string("inconsistent feature length for node kind ") +
                        node_kind_key(static_cast<NodeKind>(k)));
      }
      kind_features_[k].row(r) = kind_rows[k][r]->transpose();
      scatter.emplace_back(static_cast<Eigen::Index>(kind_nodes[k][r]), r, 1.0);
    }
    kind_scatter_[k] = make_sparse(n, rows, scatter);
  }

  arc_attr_.resize(a, 3);
  for (Eigen::Index e = 0; e < a; ++e) arc_attr_.row(e) = attrs[e].transpose();

  std::vector<double> in_degree(node_kind_.size(), 0.0);
  for (auto t : arc_target_) in_degree[t] += 1.0;

  std::vector<Triplet> mean_adj, gcn, gsrc, gtgt, stgt;
  mean_arc_attr_ = ad::Matrix::Zero(n, 3);
  for (Eigen::Index e = 0; e < a; ++e) {
    const auto s = arc_source_[e];
    const auto t = arc_target_[e];
    mean_adj.emplace_back(t, s, 1.0 / in_degree[t]);
    mean_arc_attr_.row(t) += arc_attr_.row(e) / in_degree[t];
    gcn.emplace_back(t, s, 1.0 / std::sqrt((in_degree[t] + 1.0) * (in_degree[s] + 1.0)));
    gsrc.emplace_back(e, s, 1.0);
    gtgt.emplace_back(e, t, 1.0);
    stgt.emplace_back(t, e, 1.0);
  }
  for (Eigen::Index i = 0; i < n; ++i) gcn.emplace_back(i, i, 1.0 / (in_degree[i] + 1.0));

  mean_adjacency_ = make_sparse(n, n, mean_adj);
  gcn_adjacency_ = make_sparse(n, n, gcn);
  gather_source_ = make_sparse(a, n, gsrc);
  gather_target_ = make_sparse(a, n, gtgt);
  scatter_target_ = make_sparse(n, a, stgt);

  std::vector<Triplet> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto g = node_graph_[i];
    pool.emplace_back(static_cast<Eigen::Index>(g), i, 1.0 / static_cast<double>(graph_sizes[g]));
  }
  readout_ = make_sparse(b, n, pool);
}

// ---------------------------------------------------------------------------

ad::Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                        std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

EmbeddingParams make_embedding_params(ad::ParameterSet& params, const FeatureSchema& schema,
                                      Eigen::Index latent_dim, std::mt19937_64& rng) {
  EmbeddingParams e;
  e.latent_dim = latent_dim;
  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    const auto kind = static_cast<NodeKind>(k);
    const auto in = static_cast<Eigen::Index>(schema.length_of(kind));
    const std::string key = node_kind_key(kind);
    e.weight[k] = params.add("embed." + key + ".weight", uniform_init(in, latent_dim, in, rng));
    e.bias[k] = params.add("embed." + key + ".bias", uniform_init(1, latent_dim, in, rng));
  }
  return e;
}

ad::Var embed_nodes(ad::Tape& tape, const GraphBatch& batch, const EmbeddingParams& embedding) {
  if (batch.node_count() == 0) throw DataError("embed_nodes: empty batch");
  std::optional<ad::Var> h;
  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    const auto kind = static_cast<NodeKind>(k);
    const auto& x = batch.kind_features(kind);
    if (x.rows() == 0) continue;
    if (!embedding.weight[k] || !embedding.bias[k]) {
      throw DataError(std::string("embed_nodes: no projection for node kind ") +
                      node_kind_key(kind));
    }
    ad::Var proj = ad::add(ad::matmul(tape.constant(x), tape.param(*embedding.weight[k])),
                           tape.param(*embedding.bias[k]));
    ad::Var placed = ad::spmm(batch.kind_scatter(kind), proj);
    h = h ? ad::add(*h, placed) : placed;
  }
  return *h;
}

ad::Matrix embed_nodes(const PatientGraph& graph, const EmbeddingParams& embedding,
                       const ad::ParameterSet& params) {
  GraphBatch batch(graph);
  ad::Tape tape(params);
  return embed_nodes(tape, batch, embedding).value();
}

}  // namespace dypro
