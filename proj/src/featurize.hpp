#pragma once

// kNN graph over the central beads and the rigid-motion-aware node/edge
// features built on it.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "structure_io.hpp"

namespace hyperrna {

using Adjacency = std::vector<std::vector<std::size_t>>;

inline constexpr std::size_t kVectorChannels = 16;
inline constexpr std::size_t kRbfScalarBlocks = 4;
inline constexpr std::size_t kTokenCategories = 4;
inline constexpr std::size_t kEdgeRbfBins = 32;
inline constexpr double kRbfMin = 0.0;
inline constexpr double kRbfMax = 20.0;

struct FeatureConfig {
  std::size_t knn = 16;
  std::size_t rbf_bins = 24;
};

// Scalar node features hold the four RBF blocks (forward, backward, C4'->N,
// C4'->P), each `rbf_bins` wide. The fifth block is a learned embedding of
// `token`, so only the category index is stored here.
struct GeometricGraph {
  std::string id;
  std::size_t n = 0;
  std::size_t k = 0;  // neighbours per node, min(knn, n - 1)
  std::size_t rbf_bins = 0;
  Adjacency adjacency;
  std::vector<double> scalar;       // n x 4*rbf_bins
  std::vector<std::size_t> token;   // n, in [0, kTokenCategories)
  std::vector<double> vector;       // n x 16 x 3
  std::vector<double> edge_scalar;  // n*k x 32, edge (i, adjacency[i][m]) at row i*k + m
  std::vector<double> edge_vector;  // n*k x 1 x 3
  std::vector<ChainKind> node_kind;
  std::vector<std::string> node_chain;
  std::vector<int> residue_ids;
  std::string sequence;  // native letters; never read by the encoder
  std::vector<std::array<Vec3, 3>> beads;

  std::size_t scalar_width() const { return kRbfScalarBlocks * rbf_bins; }
  std::size_t num_rna() const;
  std::string rna_sequence() const { return sequence.substr(0, num_rna()); }
};

// Directed kNN by Euclidean distance; ties go to the lower index.
Adjacency knn_graph(std::span<const Vec3> positions, std::size_t k);

// Gaussian responses at `bins` evenly spaced centers on [lo, hi]; the distance
// is clamped into that range first.
std::vector<double> rbf_expand(double distance, std::size_t bins, double lo, double hi,
                               double width);
// Center spacing, used as the default width.
double rbf_spacing(std::size_t bins, double lo, double hi);

struct BackboneVectors {
  std::vector<Vec3> forward;
  std::vector<Vec3> reverse;
  std::vector<Vec3> to_p;
  std::vector<Vec3> to_n;
};

BackboneVectors backbone_unit_vectors(const CoarseBackbone& backbone);

// Signed torsion in (-pi, pi].
double dihedral(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4);

// Nodes are all residues, RNA chains first. Requires at least one RNA chain.
GeometricGraph build_features(std::span<const CoarseBackbone> chains, const FeatureConfig& config);

std::string write_graph(const GeometricGraph& graph);
GeometricGraph read_graph(std::string_view text);

}  // namespace hyperrna
