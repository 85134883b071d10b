#include <cmath>

#include "doctest.h"
#include "error_code.hpp"
#include "gradcheck.hpp"
#include "hypergraph_encoder.hpp"
#include "synthetic.hpp"

using namespace hyperrna;
using namespace hyperrna::testing;

namespace {

// Random binary incidence where every vertex and every edge is covered.
Hypergraph random_hypergraph(Rng& rng, std::size_t n, std::size_t m) {
  std::vector<double> inc(n * m, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < m; ++e) inc[v * m + e] = rng.uniform(0, 1) < 0.35 ? 1.0 : 0.0;
  for (std::size_t v = 0; v < n; ++v) inc[v * m + rng.below(m)] = 1.0;
  for (std::size_t e = 0; e < m; ++e) inc[rng.below(n) * m + e] = 1.0;
  std::vector<double> w(m);
  for (double& x : w) x = rng.uniform(0.2, 2.0);
  return make_hypergraph(n, m, inc, w);
}

// Vertex -> hyperedge mean, weighted edge -> vertex sum, then degree scaling.
std::vector<double> two_phase_oracle(const Hypergraph& hg, const std::vector<double>& x, std::size_t c,
                                     bool symmetric) {
  const std::size_t n = hg.num_vertices, m = hg.num_edges;
  std::vector<double> dv(n, 0.0), de(m, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < m; ++e) {
      dv[v] += hg.weights[e] * hg.h(v, e);
      de[e] += hg.h(v, e);
    }
  std::vector<double> xin = x;
  if (symmetric)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < c; ++k) xin[v * c + k] /= std::sqrt(dv[v]);
  std::vector<double> edge(m * c, 0.0);
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t v = 0; v < n; ++v)
      if (hg.h(v, e) != 0)
        for (std::size_t k = 0; k < c; ++k) edge[e * c + k] += xin[v * c + k] / de[e];
  std::vector<double> out(n * c, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t e = 0; e < m; ++e)
      if (hg.h(v, e) != 0)
        for (std::size_t k = 0; k < c; ++k) out[v * c + k] += hg.weights[e] * edge[e * c + k];
    const double d = symmetric ? std::sqrt(dv[v]) : dv[v];
    for (std::size_t k = 0; k < c; ++k) out[v * c + k] /= d;
  }
  return out;
}

Tensor identity(std::size_t d) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  return make_tensor({d, d}, v);
}

Tensor rotate_vectors(const Tensor& v, const Mat3& r) {
  std::vector<double> out(v.values().begin(), v.values().end());
  for (std::size_t i = 0; i < out.size(); i += 3) {
    const Vec3 x = rotate(r, Vec3{out[i], out[i + 1], out[i + 2]});
    std::copy(x.begin(), x.end(), out.begin() + i);
  }
  return make_tensor(v.shape(), out);
}

}  // namespace

TEST_CASE("make_hypergraph computes degrees and rejects bad incidences") {
  const Hypergraph hg = make_hypergraph(3, 2, {1, 0, 1, 1, 0, 1}, {2.0, 0.5});
  CHECK(hg.vertex_degree == std::vector<double>{2.0, 2.5, 0.5});
  CHECK(hg.edge_degree == std::vector<double>{2.0, 2.0});
  CHECK(code_of([] { make_hypergraph(2, 1, {1, 0.5}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { make_hypergraph(2, 2, {1, 0, 1, 0}); }) == ErrorCode::kSingularDegree);
  CHECK(code_of([] { make_hypergraph(2, 1, {1, 0}); }) == ErrorCode::kSingularDegree);
  CHECK(code_of([] { make_hypergraph(2, 2, {1, 1, 1, 1}, {1.0}); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("build_hypergraph makes one hyperedge per node from its neighbourhood") {
  const Adjacency adj{{1, 2}, {0, 2}, {1, 3}, {2, 1}};
  const Hypergraph hg = build_hypergraph(adj);
  CHECK(hg.num_vertices == 4);
  CHECK(hg.num_edges == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(hg.h(j, j) == 1.0);
    for (std::size_t u : adj[j]) CHECK(hg.h(u, j) == 1.0);
    CHECK(hg.edge_degree[j] == 3.0);
  }
  CHECK(hg.h(3, 0) == 0.0);
  CHECK(hg.vertex_degree == std::vector<double>{2.0, 4.0, 4.0, 2.0});
}

TEST_CASE("hgnn_conv matches a two-phase gather/scatter oracle in both forms") {
  Rng rng(21);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8), c = 1 + rng.below(4);
    const Hypergraph hg = random_hypergraph(rng, n, m);
    const Tensor x = random_tensor({n, c}, rng, 1.0, false);
    const std::vector<double> xv(x.values().begin(), x.values().end());
    for (bool sym : {false, true}) {
      const Tensor z = hgnn_conv(x, hg, identity(c), sym ? ConvForm::kSymmetric : ConvForm::kRowNormalized,
                                 Activation::kIdentity);
      const auto ref = two_phase_oracle(hg, xv, c, sym);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(z.at(i) - ref[i]));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("row-normalized propagation is stochastic and the symmetric form is symmetric") {
  Rng rng(22);
  const Hypergraph hg = random_hypergraph(rng, 7, 5);
  const Tensor row = propagation_matrix(hg, ConvForm::kRowNormalized);
  const Tensor sym = propagation_matrix(hg, ConvForm::kSymmetric);
  for (std::size_t u = 0; u < 7; ++u) {
    double s = 0;
    for (std::size_t v = 0; v < 7; ++v) {
      s += row.at(u * 7 + v);
      CHECK(sym.at(u * 7 + v) == doctest::Approx(sym.at(v * 7 + u)).epsilon(1e-14));
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("uniform hyperedge weight scaling leaves the row-normalized operator unchanged") {
  Rng rng(23);
  const Hypergraph a = random_hypergraph(rng, 6, 4);
  std::vector<double> w = a.weights;
  for (double& x : w) x *= 3.7;
  const Hypergraph b = make_hypergraph(6, 4, a.incidence, w);
  const Tensor pa = propagation_matrix(a, ConvForm::kRowNormalized);
  const Tensor pb = propagation_matrix(b, ConvForm::kRowNormalized);
  for (std::size_t i = 0; i < 36; ++i) CHECK(pa.at(i) == doctest::Approx(pb.at(i)).epsilon(1e-13));
}

TEST_CASE("hgnn_conv commutes with vertex relabelling") {
  Rng rng(24);
  const std::size_t n = 6, m = 5, c = 3;
  const Hypergraph hg = random_hypergraph(rng, n, m);
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  std::vector<double> inc(n * m);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < m; ++e) inc[v * m + e] = hg.h(perm[v], e);
  const Hypergraph hp = make_hypergraph(n, m, inc, hg.weights);
  const Tensor x = random_tensor({n, c}, rng, 1.0, false);
  const Tensor theta = random_tensor({c, c}, rng, 1.0, false);
  const Tensor xp = gather_rows(x, perm);
  for (ConvForm f : {ConvForm::kRowNormalized, ConvForm::kSymmetric}) {
    const Tensor z = hgnn_conv(x, hg, theta, f, Activation::kRelu);
    const Tensor zp = hgnn_conv(xp, hp, theta, f, Activation::kRelu);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < c; ++k) CHECK(zp.at(v * c + k) == doctest::Approx(z.at(perm[v] * c + k)).epsilon(1e-13));
  }
}

TEST_CASE("encoder outputs are normalized and rotation-equivariant in the vector path") {
  Rng rng(25);
  const GeometricGraph g = synthetic_graph("x", 14, rng);
  const Hypergraph hg = build_hypergraph(g.adjacency);
  ParameterStore store;
  const EncoderParams params = make_encoder_params(store, 3, 8, 4, rng);
  const Tensor s = random_tensor({14, 8}, rng, 1.0, false);
  const Tensor v = random_tensor({14, 4, 3}, rng, 1.0, false);
  const EncoderOutput out = encoder_forward(s, v, hg, params);
  CHECK(out.s_p.shape() == Shape{14, 8});
  CHECK(out.v_p.shape() == Shape{14, 4, 3});
  for (std::size_t i = 0; i < 14; ++i) {
    double mu = 0, var = 0, vn = 0;
    for (std::size_t k = 0; k < 8; ++k) mu += out.s_e.at(i * 8 + k) / 8;
    for (std::size_t k = 0; k < 8; ++k) var += std::pow(out.s_e.at(i * 8 + k) - mu, 2) / 8;
    for (std::size_t k = 0; k < 12; ++k) vn += std::pow(out.v_e.at(i * 12 + k), 2) / 4;
    CHECK(mu == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(vn == doctest::Approx(1.0).epsilon(1e-6));
  }
  const Mat3 r = random_rotation(rng);
  const EncoderOutput rot = encoder_forward(s, rotate_vectors(v, r), hg, params);
  const Tensor expect = rotate_vectors(out.v_p, r);
  for (std::size_t i = 0; i < 14 * 8; ++i) CHECK(rot.s_p.at(i) == doctest::Approx(out.s_p.at(i)).epsilon(1e-10));
  for (std::size_t i = 0; i < 14 * 12; ++i) CHECK(rot.v_p.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-10));
}

TEST_CASE("encoder with zero layers returns the normalized input") {
  Rng rng(26);
  const Hypergraph hg = build_hypergraph(Adjacency{{1}, {0}});
  ParameterStore store;
  const EncoderParams params = make_encoder_params(store, 0, 4, 2, rng);
  const Tensor s = random_tensor({2, 4}, rng, 1.0, false);
  const Tensor v = random_tensor({2, 2, 3}, rng, 1.0, false);
  const EncoderOutput out = encoder_forward(s, v, hg, params);
  const Tensor ln = layer_norm(s, 1);
  const Tensor vn = vector_norm_rows(v);
  for (std::size_t i = 0; i < 8; ++i) CHECK(out.s_p.at(i) == doctest::Approx(ln.at(i)).epsilon(1e-14));
  for (std::size_t i = 0; i < 12; ++i) CHECK(out.v_p.at(i) == doctest::Approx(vn.at(i)).epsilon(1e-14));
}

TEST_CASE("encoder dropout needs an rng in training mode and is inert at evaluation") {
  Rng rng(27);
  const Hypergraph hg = build_hypergraph(Adjacency{{1}, {2}, {0}});
  ParameterStore store;
  const EncoderParams params = make_encoder_params(store, 2, 4, 2, rng);
  const Tensor s = random_tensor({3, 4}, rng, 1.0, false);
  const Tensor v = random_tensor({3, 2, 3}, rng, 1.0, false);
  EncoderOptions opts;
  opts.dropout = 0.5;
  opts.train = true;
  CHECK_THROWS_AS(encoder_forward(s, v, hg, params, opts), Error);
  opts.train = false;
  const EncoderOutput a = encoder_forward(s, v, hg, params, opts);
  const EncoderOutput b = encoder_forward(s, v, hg, params);
  for (std::size_t i = 0; i < 12; ++i) CHECK(a.s_p.at(i) == b.s_p.at(i));
}

TEST_CASE("encoder gradients pass finite differences") {
  Rng rng(28);
  const GeometricGraph g = synthetic_graph("x", 7, rng, 0, FeatureConfig{3, 4});
  const Hypergraph hg = build_hypergraph(g.adjacency);
  ParameterStore store;
  const EncoderParams params = make_encoder_params(store, 2, 5, 3, rng);
  const Tensor s = random_tensor({7, 5}, rng, 1.0, false);
  const Tensor v = random_tensor({7, 3, 3}, rng, 1.0, false);
  for (ConvForm f : {ConvForm::kRowNormalized, ConvForm::kSymmetric}) {
    EncoderOptions opts;
    opts.form = f;
    std::vector<Tensor> inputs{params.theta_s[0], params.theta_s[1], params.theta_v[0], params.theta_v[1], s, v};
    const GradCheckResult r = gradcheck(
        [&](const std::vector<Tensor>& in) {
          const EncoderOutput o = encoder_forward(in[4], in[5], hg, params, opts);
          return add(add(weighted_sum(o.s_p, 1), weighted_sum(o.v_p, 2)), weighted_sum(o.s_e, 3));
        },
        inputs);
    INFO("worst input " << r.worst_input << " analytic " << r.analytic << " numeric " << r.numeric);
    CHECK(r.max_rel_error <= 1e-4);
  }
}
