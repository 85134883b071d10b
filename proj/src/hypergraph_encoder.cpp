#include "hypergraph_encoder.hpp"

#include <cmath>

#include "error.hpp"

namespace hyperrna {

Hypergraph make_hypergraph(std::size_t num_vertices, std::size_t num_edges,
                           std::vector<double> incidence, std::vector<double> weights) {
  if (incidence.size() != num_vertices * num_edges) {
    throw Error(ErrorCode::kShapeMismatch, "incidence has " + std::to_string(incidence.size()) +
                                               " entries for " + std::to_string(num_vertices) + "x" +
                                               std::to_string(num_edges));
  }
  if (weights.empty()) weights.assign(num_edges, 1.0);
  if (weights.size() != num_edges) {
    throw Error(ErrorCode::kShapeMismatch, "expected " + std::to_string(num_edges) +
                                               " hyperedge weights, got " +
                                               std::to_string(weights.size()));
  }
  Hypergraph hg;
  hg.num_vertices = num_vertices;
  hg.num_edges = num_edges;
  hg.incidence = std::move(incidence);
  hg.weights = std::move(weights);
  hg.vertex_degree.assign(num_vertices, 0.0);
  hg.edge_degree.assign(num_edges, 0.0);
  for (std::size_t v = 0; v < num_vertices; ++v) {
    for (std::size_t e = 0; e < num_edges; ++e) {
      const double h = hg.h(v, e);
      if (h != 0.0 && h != 1.0) {
        throw Error(ErrorCode::kInvalidArgument, "incidence entries must be 0 or 1");
      }
      hg.vertex_degree[v] += hg.weights[e] * h;
      hg.edge_degree[e] += h;
    }
  }
  for (std::size_t e = 0; e < num_edges; ++e) {
    if (hg.edge_degree[e] == 0.0) {
      throw Error(ErrorCode::kSingularDegree, "hyperedge " + std::to_string(e) + " is empty");
    }
  }
  for (std::size_t v = 0; v < num_vertices; ++v) {
    if (!(hg.vertex_degree[v] > 0.0)) {
      throw Error(ErrorCode::kSingularDegree, "vertex " + std::to_string(v) + " has degree " +
                                                  std::to_string(hg.vertex_degree[v]));
    }
  }
  return hg;
}

Hypergraph build_hypergraph(const Adjacency& adjacency, std::span<const double> weights) {
  const std::size_t n = adjacency.size();
  if (n < 2) {
    throw Error(ErrorCode::kDegenerateGraph, "hypergraph needs at least 2 nodes, got " +
                                                 std::to_string(n));
  }
  std::vector<double> incidence(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    incidence[j * n + j] = 1.0;
    for (std::size_t v : adjacency[j]) incidence[v * n + j] = 1.0;
  }
  return make_hypergraph(n, n, std::move(incidence),
                         std::vector<double>(weights.begin(), weights.end()));
}

Tensor propagation_matrix(const Hypergraph& hg, ConvForm form) {
  const std::size_t n = hg.num_vertices;
  const std::size_t m = hg.num_edges;
  std::vector<double> p(n * n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t e = 0; e < m; ++e) {
      if (hg.h(u, e) == 0.0) continue;
      const double edge_factor = hg.weights[e] / hg.edge_degree[e];
      for (std::size_t v = 0; v < n; ++v) {
        if (hg.h(v, e) != 0.0) p[u * n + v] += edge_factor;
      }
    }
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (form == ConvForm::kRowNormalized) {
        p[u * n + v] /= hg.vertex_degree[u];
      } else {
        p[u * n + v] /= std::sqrt(hg.vertex_degree[u] * hg.vertex_degree[v]);
      }
    }
  }
  return make_tensor({n, n}, std::move(p));
}

Tensor hgnn_conv(const Tensor& x, const Hypergraph& hg, const Tensor& theta, ConvForm form,
                 Activation activation) {
  if (x.rank() != 2 || x.dim(0) != hg.num_vertices) {
    throw Error(ErrorCode::kShapeMismatch, "hgnn_conv input " + shape_str(x.shape()) + " for " +
                                               std::to_string(hg.num_vertices) + " vertices");
  }
  for (double d : hg.vertex_degree) {
    if (!(d > 0.0)) throw Error(ErrorCode::kSingularDegree, "zero vertex degree");
  }
  for (double d : hg.edge_degree) {
    if (!(d > 0.0)) throw Error(ErrorCode::kSingularDegree, "zero hyperedge degree");
  }
  Tensor z = matmul(matmul(propagation_matrix(hg, form), x), theta);
  return activation == Activation::kRelu ? relu(z) : z;
}

EncoderParams make_encoder_params(ParameterStore& store, std::size_t layers, std::size_t d_e,
                                  std::size_t d_v, Rng& rng) {
  EncoderParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string tag = "encoder.layer" + std::to_string(l);
    p.theta_s.push_back(store.add_uniform(tag + ".theta_s", {d_e, d_e}, d_e, rng));
    p.theta_v.push_back(store.add_uniform(tag + ".theta_v", {d_v, d_v}, d_v, rng));
  }
  return p;
}

Tensor vector_gate(const Tensor& v) { return multiply(v, sigmoid(l2_norm_rows(v))); }

Tensor vector_norm_rows(const Tensor& v, double eps) {
  const Tensor sq = sum(multiply(v, v), 2, true);               // n x c x 1
  const Tensor ms = add_scalar(mean(sq, 1, true), eps);         // n x 1 x 1
  return multiply(v, exp(scale(log(ms), -0.5)));
}

Tensor mix_channels(const Tensor& v, const Tensor& w) {
  return transpose(matmul(transpose(v), w));
}

EncoderOutput encoder_forward(const Tensor& s_a, const Tensor& v_a, const Hypergraph& hg,
                              const EncoderParams& params, const EncoderOptions& options) {
  const std::size_t n = hg.num_vertices;
  if (s_a.rank() != 2 || s_a.dim(0) != n || v_a.rank() != 3 || v_a.dim(0) != n) {
    throw Error(ErrorCode::kShapeMismatch, "encoder inputs " + shape_str(s_a.shape()) + ", " +
                                               shape_str(v_a.shape()) + " for " + std::to_string(n) +
                                               " vertices");
  }
  if (options.train && options.dropout > 0.0 && options.rng == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "training-mode dropout needs an Rng");
  }
  const std::size_t d_v = v_a.dim(1);
  const Tensor prop = propagation_matrix(hg, options.form);

  Tensor s = s_a;
  Tensor v = v_a;
  std::vector<Tensor> s_norm, v_norm;
  for (std::size_t l = 0; l < params.theta_s.size(); ++l) {
    Tensor ds = relu(matmul(matmul(prop, s), params.theta_s[l]));
    if (options.train && options.dropout > 0.0) ds = dropout(ds, options.dropout, true, *options.rng);
    const Tensor pv = reshape(matmul(prop, reshape(v, {n, d_v * 3})), {n, d_v, 3});
    const Tensor dv = vector_gate(mix_channels(pv, params.theta_v[l]));
    s = add(s, ds);
    v = add(v, dv);
    s_norm.push_back(layer_norm(s, 1));
    v_norm.push_back(vector_norm_rows(v));
  }

  EncoderOutput out;
  if (s_norm.empty()) {
    out.s_e = out.s_p = layer_norm(s, 1);
    out.v_e = out.v_p = vector_norm_rows(v);
    return out;
  }
  out.s_e = s_norm.back();
  out.v_e = v_norm.back();
  const double inv_depth = 1.0 / static_cast<double>(s_norm.size());
  Tensor s_acc = s_norm[0], v_acc = v_norm[0];
  for (std::size_t l = 1; l < s_norm.size(); ++l) {
    s_acc = add(s_acc, s_norm[l]);
    v_acc = add(v_acc, v_norm[l]);
  }
  out.s_p = s_norm.size() == 1 ? s_acc : scale(s_acc, inv_depth);
  out.v_p = v_norm.size() == 1 ? v_acc : scale(v_acc, inv_depth);
  return out;
}

}  // namespace hyperrna
