#include <cmath>
#include <set>

#include "doctest.h"
#include "error_code.hpp"
#include "gradcheck.hpp"
#include "gvp_decoder.hpp"
#include "model.hpp"
#include "synthetic.hpp"

using namespace hyperrna;
using namespace hyperrna::testing;

namespace {

Tensor rotate_vectors(const Tensor& v, const Mat3& r) {
  std::vector<double> out(v.values().begin(), v.values().end());
  for (std::size_t i = 0; i < out.size(); i += 3) {
    const Vec3 x = rotate(r, Vec3{out[i], out[i + 1], out[i + 2]});
    std::copy(x.begin(), x.end(), out.begin() + i);
  }
  return make_tensor(v.shape(), out);
}

double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

struct Fixture {
  Rng rng{31};
  GeometricGraph graph;
  HyperRnaModel model;
  Encoded enc;
  DecoderGraph dg;

  explicit Fixture(std::size_t rna = 10, std::size_t protein = 4, std::size_t attn_layers = 1)
      : graph(synthetic_graph("fx", rna, rng, protein)), model(config(attn_layers), 5) {
    enc = model.encode(graph);
    dg = {&graph.adjacency, graph.num_rna()};
  }
  static ModelConfig config(std::size_t attn_layers) {
    ModelConfig c;
    c.attn_layers = attn_layers;
    return c;
  }
};

}  // namespace

TEST_CASE("base letters map to indices and back") {
  CHECK(base_index('A') == 0);
  CHECK(base_index('G') == 1);
  CHECK(base_index('C') == 2);
  CHECK(base_index('U') == 3);
  CHECK(base_index('T') == -1);
  const auto idx = encode_bases("GAUC");
  CHECK(idx == std::vector<std::size_t>{1, 0, 3, 2});
  CHECK(decode_bases(idx) == "GAUC");
  CHECK(code_of([] { encode_bases("AXG"); }) == ErrorCode::kInvalidAlphabet);
}

TEST_CASE("gvp_forward scalars are rotation-invariant and vectors equivariant") {
  Rng rng(32);
  ParameterStore store;
  const DecoderParams params = make_decoder_params(store, 1, 6, 4, 5, rng);
  const Tensor s = random_tensor({5, 6}, rng, 1.0, false);
  const Tensor v = random_tensor({5, 4, 3}, rng, 1.0, false);
  const auto [s1, v1] = gvp_forward(s, v, params.layers[0]);
  CHECK(s1.shape() == Shape{5, 6});
  CHECK(v1.shape() == Shape{5, 4, 3});
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = random_rotation(rng);
    const auto [s2, v2] = gvp_forward(s, rotate_vectors(v, r), params.layers[0]);
    const Tensor expect = rotate_vectors(v1, r);
    for (std::size_t i = 0; i < 30; ++i) CHECK(s2.at(i) == doctest::Approx(s1.at(i)).epsilon(1e-12));
    for (std::size_t i = 0; i < 60; ++i) CHECK(v2.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("tempered_softmax normalizes, keeps the argmax and sharpens with lower temperature") {
  const std::vector<double> logits{0.3, -1.2, 2.1, 0.9};
  double prev = INFINITY;
  for (double tau : {10.0, 2.0, 1.0, 0.5, 0.1, 0.01}) {
    const auto p = tempered_softmax(logits, tau);
    double total = 0;
    for (double x : p) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == 2);
    const double h = entropy(p);
    CHECK(h < prev);
    prev = h;
  }
  CHECK(tempered_softmax(std::vector<double>{1000, 0, 0, 0}, 1e-6)[0] == 1.0);
  CHECK(code_of([&] { tempered_softmax(logits, 0.0); }) == ErrorCode::kNonPositiveTemperature);
  CHECK(code_of([&] { tempered_softmax(logits, -1.0); }) == ErrorCode::kNonPositiveTemperature);
}

TEST_CASE("teacher-forced logits equal step-by-step decoding with the true prefix") {
  Fixture f;
  const auto truth = encode_bases(f.graph.rna_sequence());
  const Tensor tf = teacher_forced_logits(truth, f.enc.s_p, f.enc.v_p, f.dg, f.model.decoder_params());
  CHECK(tf.shape() == Shape{10, 4});
  for (std::size_t t = 0; t < 10; ++t) {
    DecoderState st{t, std::vector<std::size_t>(truth.begin(), truth.begin() + t)};
    const auto p = decode_step(st, f.enc.s_p, f.enc.v_p, f.dg, f.model.decoder_params(), 1.0);
    std::vector<double> row(tf.values().begin() + t * 4, tf.values().begin() + t * 4 + 4);
    const auto q = tempered_softmax(row, 1.0);
    for (int b = 0; b < 4; ++b) CHECK(p[b] == doctest::Approx(q[b]).epsilon(1e-12));
  }
}

TEST_CASE("logits at step t ignore bases at positions t and later") {
  Fixture f(12, 3);
  const auto& dp = f.model.decoder_params();
  Rng rng(33);
  std::vector<std::size_t> bases(12);
  for (auto& b : bases) b = rng.below(4);
  for (std::size_t t = 0; t < 12; ++t) {
    const std::vector<std::size_t> step{t};
    const Tensor base = decoder_logits(f.enc.s_p, f.enc.v_p, f.dg, dp, bases, step);
    auto changed = bases;
    for (std::size_t j = t; j < 12; ++j) changed[j] = (changed[j] + 1 + rng.below(3)) % 4;
    const Tensor other = decoder_logits(f.enc.s_p, f.enc.v_p, f.dg, dp, changed, step);
    for (std::size_t b = 0; b < 4; ++b) CHECK(other.at(b) == base.at(b));
  }
  // A change in the prefix is visible to later steps.
  auto changed = bases;
  changed[0] = (changed[0] + 1) % 4;
  const std::vector<std::size_t> last{11};
  const Tensor a = decoder_logits(f.enc.s_p, f.enc.v_p, f.dg, dp, bases, last);
  const Tensor b = decoder_logits(f.enc.s_p, f.enc.v_p, f.dg, dp, changed, last);
  double diff = 0;
  for (std::size_t i = 0; i < 4; ++i) diff += std::abs(a.at(i) - b.at(i));
  CHECK(diff > 0);
}

TEST_CASE("sampling is seeded, stays in the alphabet and reduces to greedy at low temperature") {
  Fixture f;
  const auto& dp = f.model.decoder_params();
  const std::string a = autoregressive_sample(f.enc.s_p, f.enc.v_p, f.dg, dp, 1.0, 7);
  const std::string b = autoregressive_sample(f.enc.s_p, f.enc.v_p, f.dg, dp, 1.0, 7);
  CHECK(a == b);
  CHECK(a.size() == 10);
  CHECK(a.find_first_not_of("ACGU") == std::string::npos);
  std::set<std::string> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) distinct.insert(autoregressive_sample(f.enc.s_p, f.enc.v_p, f.dg, dp, 5.0, s));
  CHECK(distinct.size() > 1);
  const std::string g = greedy_decode(f.enc.s_p, f.enc.v_p, f.dg, dp);
  CHECK(g == greedy_decode(f.enc.s_p, f.enc.v_p, f.dg, dp));
  CHECK(autoregressive_sample(f.enc.s_p, f.enc.v_p, f.dg, dp, 1e-3, 99) == g);
  CHECK(code_of([&] { autoregressive_sample(f.enc.s_p, f.enc.v_p, f.dg, dp, 0.0, 1); }) ==
        ErrorCode::kNonPositiveTemperature);
}

TEST_CASE("decoder rejects out-of-range steps and inconsistent prefixes") {
  Fixture f(6, 0);
  const auto& dp = f.model.decoder_params();
  const std::vector<std::size_t> bases(6, 0);
  const std::vector<std::size_t> bad{6};
  CHECK(code_of([&] { decoder_logits(f.enc.s_p, f.enc.v_p, f.dg, dp, bases, bad); }) == ErrorCode::kStepOutOfRange);
  DecoderState st{6, bases};
  CHECK(code_of([&] { decode_step(st, f.enc.s_p, f.enc.v_p, f.dg, dp, 1.0); }) == ErrorCode::kStepOutOfRange);
  DecoderState short_prefix{3, {0}};
  CHECK(code_of([&] { decode_step(short_prefix, f.enc.s_p, f.enc.v_p, f.dg, dp, 1.0); }) == ErrorCode::kLengthMismatch);
  const std::vector<std::size_t> too_short(4, 0);
  CHECK(code_of([&] { teacher_forced_logits(too_short, f.enc.s_p, f.enc.v_p, f.dg, dp); }) ==
        ErrorCode::kLengthMismatch);
}

TEST_CASE("pipeline logits are invariant to rigid motion of the input structure") {
  // Without the flattened-coordinate attention every stage is rotation-aware.
  Rng rng(34);
  const std::vector<CoarseBackbone> chains{synthetic_rna(random_rna_sequence(16, rng), rng), synthetic_protein(6, rng)};
  const GeometricGraph g = build_features(chains, {});
  ModelConfig cfg;
  cfg.attn_layers = 0;
  HyperRnaModel model(cfg, 9);
  const auto truth = encode_bases(g.rna_sequence());
  const Tensor ref = model.teacher_forced_logits(g, model.encode(g), truth);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = random_rotation(rng);
    const Vec3 t{rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)};
    std::vector<CoarseBackbone> moved;
    for (const auto& c : chains) moved.push_back(move_backbone(c, r, t));
    const GeometricGraph h = build_features(moved, {});
    const Tensor out = model.teacher_forced_logits(h, model.encode(h), truth);
    double worst = 0;
    for (std::size_t i = 0; i < ref.numel(); ++i) worst = std::max(worst, std::abs(out.at(i) - ref.at(i)));
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("encoder and decoder are invariant to rotating the embedded vectors") {
  Fixture f(10, 4);
  Rng rng(35);
  const Encoded& e = f.enc;
  const auto truth = encode_bases(f.graph.rna_sequence());
  EncoderOptions opts;
  const EncoderOutput a = encoder_forward(e.embedded.s_a, e.embedded.v_a, e.hypergraph, f.model.encoder_params(), opts);
  const Tensor la = teacher_forced_logits(truth, a.s_p, a.v_p, f.dg, f.model.decoder_params());
  const Mat3 r = random_rotation(rng);
  const EncoderOutput b = encoder_forward(e.embedded.s_a, rotate_vectors(e.embedded.v_a, r), e.hypergraph,
                                          f.model.encoder_params(), opts);
  const Tensor lb = teacher_forced_logits(truth, b.s_p, b.v_p, f.dg, f.model.decoder_params());
  for (std::size_t i = 0; i < la.numel(); ++i) CHECK(lb.at(i) == doctest::Approx(la.at(i)).epsilon(1e-9));
}

TEST_CASE("teacher-forced cross entropy gradients pass finite differences") {
  Rng rng(36);
  const GeometricGraph g = synthetic_graph("x", 5, rng, 2, FeatureConfig{3, 4});
  ParameterStore store;
  const DecoderParams dp = make_decoder_params(store, 2, 6, 3, 4, rng);
  const Tensor s = random_tensor({7, 6}, rng, 1.0, false);
  const Tensor v = random_tensor({7, 3, 3}, rng, 1.0, false);
  const DecoderGraph dg{&g.adjacency, 5};
  const auto truth = encode_bases(g.rna_sequence());
  std::vector<double> onehot(20, 0.0);
  for (std::size_t t = 0; t < 5; ++t) onehot[t * 4 + truth[t]] = 1.0;
  const Tensor target = make_tensor({5, 4}, onehot);
  std::vector<Tensor> inputs{dp.layers[0].w_h, dp.layers[0].w_mu, dp.layers[1].w_m, dp.layers[1].bias,
                             dp.base_embedding, dp.readout, dp.readout_bias, s, v};
  const GradCheckResult r = gradcheck(
      [&](const std::vector<Tensor>& in) {
        const Tensor logits = teacher_forced_logits(truth, in[7], in[8], dg, dp);
        return scale(sum(multiply(log_softmax(logits, 1), target)), -1.0);
      },
      inputs);
  INFO("worst input " << r.worst_input << " analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.max_rel_error <= 1e-4);
}
