#pragma once

// Attention embedding: multi-head self-attention over flattened node vector
// features and per-node attention pooling over the five scalar blocks.

#include <span>
#include <vector>

#include "featurize.hpp"
#include "parameters.hpp"
#include "tensor.hpp"

namespace hyperrna {

struct MultiHeadAttentionParams {
  std::size_t heads = 3;
  std::vector<Tensor> w_q;  // per head: 3*d_v x 3*d_v/heads
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
};

struct AttentionPoolParams {
  std::vector<Tensor> score;       // per block: width x 1
  std::vector<Tensor> projection;  // per block: width x d_e
};

struct EmbedParams {
  std::vector<MultiHeadAttentionParams> attention;  // stacked applications
  AttentionPoolParams pool;
  Tensor token_embedding;  // kTokenCategories x token_width
};

struct EmbedOptions {
  bool mask_attention_to_knn = false;
};

struct EmbeddedGraph {
  Tensor s_a;      // n x d_e
  Tensor v_a;      // n x d_v x 3
  Tensor gamma;    // n x 5, pooling weights
};

MultiHeadAttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                               std::size_t d_v, std::size_t heads, Rng& rng);
AttentionPoolParams make_pool_params(ParameterStore& store, std::span<const std::size_t> widths,
                                     std::size_t d_e, Rng& rng);

// v: n x d_v x 3. `additive_mask`, when defined, is an n x n tensor added to
// the attention logits before the softmax.
Tensor vector_self_attention(const Tensor& v, const MultiHeadAttentionParams& params,
                             const Tensor& additive_mask = Tensor());

// Returns s_a (n x d_e); writes the n x 5 pooling weights to `gamma` if given.
Tensor scalar_attention_pool(std::span<const Tensor> blocks, const AttentionPoolParams& params,
                             Tensor* gamma = nullptr);

// The four RBF blocks of `graph` plus the learned token block.
std::vector<Tensor> scalar_blocks(const GeometricGraph& graph, const Tensor& token_embedding);

// n x n additive mask allowing each node to attend to itself and its kNN.
Tensor knn_attention_mask(const Adjacency& adjacency);

EmbeddedGraph embed_graph(const GeometricGraph& graph, const EmbedParams& params,
                          const EmbedOptions& options = {});

}  // namespace hyperrna
