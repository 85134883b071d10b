#pragma once

// Autoregressive GVP decoder over the pooled encoder latents.
//
// Step t conditions on the bases already fixed: each RNA node j < t gets a
// learned embedding of its base added to its scalar features, every other
// node gets the mask embedding. Each decoder layer is a node-wise GVP followed
// by a mean over the node and its kNN neighbours, so prefix information
// reaches node t only through its neighbourhood. Logits for step t are read
// from node t.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featurize.hpp"
#include "parameters.hpp"
#include "tensor.hpp"

namespace hyperrna {

inline constexpr std::size_t kNumBases = 4;
inline constexpr std::string_view kBaseLetters = "AGCU";  // index order

int base_index(char letter);  // -1 when not one of A, G, C, U
std::vector<std::size_t> encode_bases(std::string_view sequence);
std::string decode_bases(std::span<const std::size_t> indices);

struct GvpLayerParams {
  Tensor w_h;    // d_v x d_h
  Tensor w_mu;   // d_h x d_v
  Tensor w_m;    // (d_e + d_h) x d_e
  Tensor bias;   // d_e
};

struct DecoderParams {
  std::vector<GvpLayerParams> layers;
  Tensor base_embedding;  // (kNumBases + 1) x d_e; last row is the mask embedding
  Tensor readout;         // d_e x kNumBases
  Tensor readout_bias;    // kNumBases
};

DecoderParams make_decoder_params(ParameterStore& store, std::size_t layers, std::size_t d_e,
                                  std::size_t d_v, std::size_t d_h, Rng& rng);

// Node-wise GVP. s: n x d_e, v: n x d_v x 3.
std::pair<Tensor, Tensor> gvp_forward(const Tensor& s, const Tensor& v, const GvpLayerParams& params);

// Graph context the decoder runs over. RNA nodes occupy indices [0, num_rna).
struct DecoderGraph {
  const Adjacency* adjacency = nullptr;
  std::size_t num_rna = 0;
};

struct DecoderState {
  std::size_t step = 0;
  std::vector<std::size_t> prefix;  // base indices n_0 .. n_{t-1}
};

// Raw logits for several decoding steps at once: one independent copy of the
// graph per entry of `steps`, each with its own prefix mask. `bases` supplies
// the prefix values (only positions < step are read). Returns steps.size() x 4.
Tensor decoder_logits(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                      const DecoderParams& params, std::span<const std::size_t> bases,
                      std::span<const std::size_t> steps);

// softmax(logits / tau); tau must be positive.
std::vector<double> tempered_softmax(std::span<const double> logits, double tau);

std::vector<double> decode_step(const DecoderState& state, const Tensor& s_p, const Tensor& v_p,
                                const DecoderGraph& graph, const DecoderParams& params, double tau);

// num_rna x 4 logits with the true prefix fed at every step.
Tensor teacher_forced_logits(std::span<const std::size_t> true_bases, const Tensor& s_p,
                             const Tensor& v_p, const DecoderGraph& graph,
                             const DecoderParams& params);

std::string autoregressive_sample(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                                  const DecoderParams& params, double tau, std::uint64_t seed);

// Argmax at every step (the tau -> 0 limit).
std::string greedy_decode(const Tensor& s_p, const Tensor& v_p, const DecoderGraph& graph,
                          const DecoderParams& params);

}  // namespace hyperrna
