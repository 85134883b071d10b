#include "gvp_decoder.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "hypergraph_encoder.hpp"
#include "rng.hpp"

namespace hyperrna {

namespace {

constexpr std::size_t kMaskToken = kNumBases;

// Transposed row-normalized (self + kNN) averaging operator, n x n.
Tensor neighbourhood_mean_operator(const Adjacency& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<double> op(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / static_cast<double>(adjacency[i].size() + 1);
    op[i * n + i] += w;
    for (std::size_t j : adjacency[i]) op[j * n + i] += w;
  }
  return make_tensor({n, n}, std::move(op));
}

// x: (copies*n) x rest... ; averages rows within each copy.
Tensor neighbourhood_mean(const Tensor& x, const Tensor& op_t, std::size_t copies, std::size_t n) {
  const std::size_t width = x.numel() / (copies * n);
  const Tensor stacked = reshape(x, {copies, n, width});
  const Tensor mixed = transpose(matmul(transpose(stacked), op_t));
  return reshape(mixed, x.shape());
}

void check_context(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                   const DecoderParams& params) {
  if (graph.adjacency == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "decoder graph has no adjacency");
  }
  const std::size_t n = graph.adjacency->size();
  if (s_p.rank() != 2 || s_p.dim(0) != n || v_p.rank() != 3 || v_p.dim(0) != n) {
    throw Error(ErrorCode::kShapeMismatch, "decoder inputs " + shape_str(s_p.shape()) + ", " +
                                               shape_str(v_p.shape()) + " for " +
                                               std::to_string(n) + " nodes");
  }
  if (s_p.dim(1) != params.readout.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch, "decoder expects d_e = " +
                                               std::to_string(params.readout.dim(0)) + ", got " +
                                               shape_str(s_p.shape()));
  }
  if (graph.num_rna == 0 || graph.num_rna > n) {
    throw Error(ErrorCode::kInvalidArgument, "decoder graph has " + std::to_string(graph.num_rna) +
                                                 " RNA nodes out of " + std::to_string(n));
  }
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // u landed in the rounding slack above the cumulative sum
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace

int base_index(char letter) {
  const auto pos = kBaseLetters.find(letter);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

std::vector<std::size_t> encode_bases(std::string_view sequence) {
  std::vector<std::size_t> out;
  out.reserve(sequence.size());
  for (char c : sequence) {
    const int b = base_index(c);
    if (b < 0) {
      throw Error(ErrorCode::kInvalidAlphabet, "'" + std::string(1, c) + "' is not an RNA base");
    }
    out.push_back(static_cast<std::size_t>(b));
  }
  return out;
}

std::string decode_bases(std::span<const std::size_t> indices) {
  std::string out;
  for (std::size_t b : indices) out.push_back(kBaseLetters.at(b));
  return out;
}

DecoderParams make_decoder_params(ParameterStore& store, std::size_t layers, std::size_t d_e,
                                  std::size_t d_v, std::size_t d_h, Rng& rng) {
  DecoderParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string tag = "decoder.layer" + std::to_string(l);
    GvpLayerParams g;
    g.w_h = store.add_uniform(tag + ".w_h", {d_v, d_h}, d_v, rng);
    g.w_mu = store.add_uniform(tag + ".w_mu", {d_h, d_v}, d_h, rng);
    g.w_m = store.add_uniform(tag + ".w_m", {d_e + d_h, d_e}, d_e + d_h, rng);
    g.bias = store.add_zeros(tag + ".bias", {d_e});
    p.layers.push_back(g);
  }
  p.base_embedding = store.add_uniform("decoder.base_embedding", {kNumBases + 1, d_e}, 1, rng);
  p.readout = store.add_uniform("decoder.readout", {d_e, kNumBases}, d_e, rng);
  p.readout_bias = store.add_zeros("decoder.readout_bias", {kNumBases});
  return p;
}

std::pair<Tensor, Tensor> gvp_forward(const Tensor& s, const Tensor& v, const GvpLayerParams& params) {
  if (s.rank() != 2 || v.rank() != 3 || s.dim(0) != v.dim(0) || v.dim(1) != params.w_h.dim(0) ||
      s.dim(1) + params.w_h.dim(1) != params.w_m.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch, "gvp_forward inputs " + shape_str(s.shape()) + ", " +
                                               shape_str(v.shape()) + " vs W_h " +
                                               shape_str(params.w_h.shape()) + ", W_m " +
                                               shape_str(params.w_m.shape()));
  }
  const std::size_t n = s.dim(0);
  const Tensor v_h = mix_channels(v, params.w_h);                       // n x d_h x 3
  const Tensor norms = reshape(l2_norm_rows(v_h), {n, params.w_h.dim(1)});
  const Tensor parts[] = {s, norms};
  const Tensor s_out = relu(add(matmul(concat(parts, 1), params.w_m), params.bias));
  const Tensor v_out = vector_gate(mix_channels(v_h, params.w_mu));
  return {s_out, v_out};
}

Tensor decoder_logits(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                      const DecoderParams& params, std::span<const std::size_t> bases,
                      std::span<const std::size_t> steps) {
  check_context(s_p, v_p, graph, params);
  const std::size_t n = s_p.dim(0);
  const std::size_t copies = steps.size();
  if (copies == 0) throw Error(ErrorCode::kInvalidArgument, "no decoding steps requested");
  for (std::size_t t : steps) {
    if (t >= graph.num_rna) {
      throw Error(ErrorCode::kStepOutOfRange, "step " + std::to_string(t) + " with " +
                                                  std::to_string(graph.num_rna) + " RNA nodes");
    }
    if (t > bases.size()) {
      throw Error(ErrorCode::kLengthMismatch, "step " + std::to_string(t) + " needs a prefix of " +
                                                  std::to_string(t) + " bases, got " +
                                                  std::to_string(bases.size()));
    }
  }

  std::vector<std::size_t> tile(copies * n);
  std::vector<std::size_t> tokens(copies * n);
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t j = 0; j < n; ++j) {
      tile[c * n + j] = j;
      const bool known = j < graph.num_rna && j < steps[c];
      if (known && bases[j] >= kNumBases) {
        throw Error(ErrorCode::kInvalidArgument, "base index " + std::to_string(bases[j]));
      }
      tokens[c * n + j] = known ? bases[j] : kMaskToken;
    }
  }
  Tensor s = add(gather_rows(s_p, tile), gather_rows(params.base_embedding, tokens));
  Tensor v = gather_rows(v_p, tile);
  const Tensor op_t = neighbourhood_mean_operator(*graph.adjacency);
  for (const GvpLayerParams& layer : params.layers) {
    auto [ds, dv] = gvp_forward(s, v, layer);
    s = layer_norm(add(s, neighbourhood_mean(ds, op_t, copies, n)), 1);
    v = add(v, neighbourhood_mean(dv, op_t, copies, n));
  }
  std::vector<std::size_t> rows(copies);
  for (std::size_t c = 0; c < copies; ++c) rows[c] = c * n + steps[c];
  return add(matmul(gather_rows(s, rows), params.readout), params.readout_bias);
}

std::vector<double> tempered_softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTemperature, "temperature " + std::to_string(tau));
  }
  std::vector<double> z(logits.begin(), logits.end());
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& x : z) {
    x = std::exp((x - mx) / tau);
    total += x;
  }
  for (double& x : z) x /= total;
  return z;
}

std::vector<double> decode_step(const DecoderState& state, const Tensor& s_p, const Tensor& v_p,
                                const DecoderGraph& graph, const DecoderParams& params, double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTemperature, "temperature " + std::to_string(tau));
  }
  if (state.prefix.size() != state.step) {
    throw Error(ErrorCode::kLengthMismatch, "decoder state at step " + std::to_string(state.step) +
                                                " carries " + std::to_string(state.prefix.size()) +
                                                " bases");
  }
  const std::size_t steps[] = {state.step};
  const Tensor logits = decoder_logits(s_p, v_p, graph, params, state.prefix, steps);
  return tempered_softmax(logits.values(), tau);
}

Tensor teacher_forced_logits(std::span<const std::size_t> true_bases, const Tensor& s_p,
                             const Tensor& v_p, const DecoderGraph& graph,
                             const DecoderParams& params) {
  if (true_bases.size() != graph.num_rna) {
    throw Error(ErrorCode::kLengthMismatch, "sequence of length " +
                                                std::to_string(true_bases.size()) + " for " +
                                                std::to_string(graph.num_rna) + " RNA nodes");
  }
  std::vector<std::size_t> steps(graph.num_rna);
  for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = t;
  return decoder_logits(s_p, v_p, graph, params, true_bases, steps);
}

std::string autoregressive_sample(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                                  const DecoderParams& params, double tau, std::uint64_t seed) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTemperature, "temperature " + std::to_string(tau));
  }
  Rng rng(seed);
  DecoderState state;
  for (std::size_t t = 0; t < graph.num_rna; ++t) {
    const auto probs = decode_step(state, s_p, v_p, graph, params, tau);
    state.prefix.push_back(sample_index(probs, rng));
    ++state.step;
  }
  return decode_bases(state.prefix);
}

std::string greedy_decode(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                          const DecoderParams& params) {
  DecoderState state;
  for (std::size_t t = 0; t < graph.num_rna; ++t) {
    const std::size_t steps[] = {t};
    const Tensor logits = decoder_logits(s_p, v_p, graph, params, state.prefix, steps);
    const auto z = logits.values();
    state.prefix.push_back(static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
    ++state.step;
  }
  return decode_bases(state.prefix);
}

}  // namespace hyperrna
