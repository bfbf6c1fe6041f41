#pragma once

// Heterogeneous patient graph: five anatomical region nodes, one global CT
// node and one clinical node. Anatomical nodes link to the global CT node by
// spatial-topology edges (attribute: normalized centroid offset) and receive
// a clinical-context edge from the clinical node.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dypro/autodiff.hpp"

namespace dypro {

enum class NodeKind : std::uint8_t {
  LiverParenchyma,
  FutureLiverRemnant,
  HepaticVeins,
  PortalVeins,
  MetastaticTumors,
  GlobalCT,
  Clinical,
};

inline constexpr std::size_t kNodeKindCount = 7;
inline constexpr std::array<NodeKind, 5> kAnatomicalKinds = {
    NodeKind::LiverParenchyma, NodeKind::FutureLiverRemnant, NodeKind::HepaticVeins,
    NodeKind::PortalVeins, NodeKind::MetastaticTumors};

constexpr bool is_anatomical(NodeKind k) noexcept {
  return k != NodeKind::GlobalCT && k != NodeKind::Clinical;
}
constexpr std::size_t kind_index(NodeKind k) noexcept { return static_cast<std::size_t>(k); }

/// Short key used in cohort files ("liver", "remnant", ...).
const char* node_kind_key(NodeKind k) noexcept;
std::optional<NodeKind> node_kind_from_key(std::string_view key) noexcept;

enum class EdgeKind : std::uint8_t { SpatialTopology, ClinicalContext };

/// Normalized 3-D centroid offset; every component in [-1, 1].
struct EdgeAttr {
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct GraphNode {
  NodeKind kind = NodeKind::Clinical;
  Eigen::VectorXd features;
  bool present = true;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

/// Logical edge; endpoints index PatientGraph::nodes. Message passing sees
/// each logical edge as two directed arcs, the reverse arc carrying the
/// negated offset.
struct GraphEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  EdgeKind kind = EdgeKind::SpatialTopology;
  EdgeAttr attr;
};

struct PatientGraph {
  std::string patient_id;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  std::size_t present_count() const noexcept;
  std::size_t present_anatomical_count() const noexcept;
};

/// Raw feature lengths. The global CT node shares the region length.
struct FeatureSchema {
  std::size_t region_len = 8;
  std::size_t clinical_len = 6;

  std::size_t length_of(NodeKind k) const noexcept {
    return k == NodeKind::Clinical ? clinical_len : region_len;
  }
  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

using RegionFeatures = std::map<NodeKind, Eigen::VectorXd>;
using RegionCentroids = std::map<NodeKind, Eigen::Vector3d>;

/// Builds the graph from per-region features and centroids. Anatomical
/// regions absent from `region_features` become absent nodes with no edges.
/// GlobalCT features default to the mean of the present region features and
/// its centroid to the origin when not supplied.
PatientGraph build_patient_graph(std::string patient_id, const RegionFeatures& region_features,
                                 const Eigen::VectorXd& clinical_features,
                                 const RegionCentroids& centroids, const FeatureSchema& schema);

/// One message per broken invariant; empty iff the graph is well formed.
std::vector<std::string> validate_graph(const PatientGraph& graph);

// ---------------------------------------------------------------------------
// Batching

/// Several graphs laid out as one block-diagonal graph over their present
/// nodes, with the constant operators message passing and pooling need.
class GraphBatch {
 public:
  explicit GraphBatch(std::span<const PatientGraph* const> graphs);
  explicit GraphBatch(const PatientGraph& graph);

  std::size_t graph_count() const noexcept { return graph_count_; }
  std::size_t node_count() const noexcept { return node_kind_.size(); }
  std::size_t arc_count() const noexcept { return arc_source_.size(); }

  const std::vector<NodeKind>& node_kinds() const noexcept { return node_kind_; }
  const std::vector<std::size_t>& node_graph() const noexcept { return node_graph_; }
  const std::vector<std::size_t>& arc_source() const noexcept { return arc_source_; }
  const std::vector<std::size_t>& arc_target() const noexcept { return arc_target_; }

  /// Raw features of every present node of one kind (rows in batch order),
  /// and the N x n_k operator scattering them into batch node order.
  const ad::Matrix& kind_features(NodeKind k) const { return kind_features_[kind_index(k)]; }
  const ad::SparseHandle& kind_scatter(NodeKind k) const { return kind_scatter_[kind_index(k)]; }

  /// A x 3 arc attributes (offset of arc source -> target).
  const ad::Matrix& arc_attr() const noexcept { return arc_attr_; }
  /// N x N: row i averages over the in-neighbours of i (zero row if none).
  const ad::SparseHandle& mean_adjacency() const noexcept { return mean_adjacency_; }
  /// N x 3: row i is the mean attribute over arcs into i.
  const ad::Matrix& mean_arc_attr() const noexcept { return mean_arc_attr_; }
  /// N x N: D^{-1/2} (A + I) D^{-1/2}.
  const ad::SparseHandle& gcn_adjacency() const noexcept { return gcn_adjacency_; }
  /// A x N one-hot selectors of arc source / target nodes.
  const ad::SparseHandle& gather_source() const noexcept { return gather_source_; }
  const ad::SparseHandle& gather_target() const noexcept { return gather_target_; }
  /// N x A: sums arc rows into their target node.
  const ad::SparseHandle& scatter_target() const noexcept { return scatter_target_; }
  /// B x N mean pooling over each graph's nodes.
  const ad::SparseHandle& readout() const noexcept { return readout_; }

 private:
  void build(std::span<const PatientGraph* const> graphs);

  std::size_t graph_count_ = 0;
  std::vector<NodeKind> node_kind_;
  std::vector<std::size_t> node_graph_;
  std::vector<std::size_t> arc_source_;
  std::vector<std::size_t> arc_target_;
  std::array<ad::Matrix, kNodeKindCount> kind_features_;
  std::array<ad::SparseHandle, kNodeKindCount> kind_scatter_;
  ad::Matrix arc_attr_;
  ad::SparseHandle mean_adjacency_;
  ad::Matrix mean_arc_attr_;
  ad::SparseHandle gcn_adjacency_;
  ad::SparseHandle gather_source_;
  ad::SparseHandle gather_target_;
  ad::SparseHandle scatter_target_;
  ad::SparseHandle readout_;
};

// ---------------------------------------------------------------------------
// Embedding

/// Per-kind linear projection of raw features into the d-dimensional latent
/// space. Unset entries mean "no projection for this kind".
struct EmbeddingParams {
  Eigen::Index latent_dim = 0;
  std::array<std::optional<ad::ParamId>, kNodeKindCount> weight;
  std::array<std::optional<ad::ParamId>, kNodeKindCount> bias;
};

EmbeddingParams make_embedding_params(ad::ParameterSet& params, const FeatureSchema& schema,
                                      Eigen::Index latent_dim, std::mt19937_64& rng);

/// H0: one row per present node, x W_kind + b_kind.
ad::Var embed_nodes(ad::Tape& tape, const GraphBatch& batch, const EmbeddingParams& embedding);

/// Convenience for a single graph outside any training tape.
ad::Matrix embed_nodes(const PatientGraph& graph, const EmbeddingParams& embedding,
                       const ad::ParameterSet& params);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ad::Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                        std::mt19937_64& rng);

}  // namespace dypro
