#pragma once

// Hypergraph construction from the kNN graph and the HGNN encoder stack.

#include <span>
#include <vector>

#include "featurize.hpp"
#include "parameters.hpp"
#include "tensor.hpp"

namespace hyperrna {

// Dense incidence H (vertices x hyperedges, row-major) with its degrees.
struct Hypergraph {
  std::size_t num_vertices = 0;
  std::size_t num_edges = 0;
  std::vector<double> incidence;
  std::vector<double> weights;        // w(e)
  std::vector<double> vertex_degree;  // d(v) = sum_e w(e) H(v, e)
  std::vector<double> edge_degree;    // delta(e) = sum_v H(v, e)

  double h(std::size_t v, std::size_t e) const { return incidence[v * num_edges + e]; }
};

// Builds the degree vectors from an explicit incidence; rejects non-binary
// entries and empty hyperedges or isolated vertices.
Hypergraph make_hypergraph(std::size_t num_vertices, std::size_t num_edges,
                           std::vector<double> incidence, std::vector<double> weights = {});

// One hyperedge per node j: {j} plus its kNN. Unit weights unless given.
Hypergraph build_hypergraph(const Adjacency& adjacency, std::span<const double> weights = {});

enum class ConvForm {
  kRowNormalized,  // Dv^-1 H W De^-1 H^T (encoder default)
  kSymmetric,      // Dv^-1/2 H W De^-1 H^T Dv^-1/2
};

enum class Activation { kIdentity, kRelu };

// The n x n propagation operator for `form`.
Tensor propagation_matrix(const Hypergraph& hg, ConvForm form);

// Z = sigma(P X Theta).
Tensor hgnn_conv(const Tensor& x, const Hypergraph& hg, const Tensor& theta, ConvForm form,
                 Activation activation);

struct EncoderParams {
  std::vector<Tensor> theta_s;  // d_e x d_e per layer
  std::vector<Tensor> theta_v;  // d_v x d_v per layer, applied per spatial coordinate
};

EncoderParams make_encoder_params(ParameterStore& store, std::size_t layers, std::size_t d_e,
                                  std::size_t d_v, Rng& rng);

struct EncoderOptions {
  ConvForm form = ConvForm::kRowNormalized;
  double dropout = 0.0;
  bool train = false;
  Rng* rng = nullptr;  // required when train && dropout > 0
};

struct EncoderOutput {
  Tensor s_e, v_e;  // normalized last-layer features
  Tensor s_p, v_p;  // depth-mean of normalized per-layer features
};

// Scales each 3-vector by sigmoid of its own norm.
Tensor vector_gate(const Tensor& v);
// v / sqrt(mean over channels of |v_c|^2 + eps), per node.
Tensor vector_norm_rows(const Tensor& v, double eps = 1e-8);
// Applies `w` (c_in x c_out) to the channel axis of an n x c_in x 3 tensor.
Tensor mix_channels(const Tensor& v, const Tensor& w);

EncoderOutput encoder_forward(const Tensor& s_a, const Tensor& v_a, const Hypergraph& hg,
                              const EncoderParams& params, const EncoderOptions& options = {});

}  // namespace hyperrna
