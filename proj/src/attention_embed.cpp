#include "attention_embed.hpp"

#include <cmath>

#include "error.hpp"

namespace hyperrna {

namespace {
constexpr double kMaskedLogit = -1e9;
}

MultiHeadAttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                               std::size_t d_v, std::size_t heads, Rng& rng) {
  const std::size_t width = 3 * d_v;
  if (heads == 0 || width % heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "3*d_v = " + std::to_string(width) +
                                                 " is not divisible by " + std::to_string(heads) +
                                                 " heads");
  }
  MultiHeadAttentionParams p;
  p.heads = heads;
  const std::size_t head_width = width / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string tag = prefix + ".head" + std::to_string(h);
    p.w_q.push_back(store.add_uniform(tag + ".w_q", {width, head_width}, width, rng));
    p.w_k.push_back(store.add_uniform(tag + ".w_k", {width, head_width}, width, rng));
    p.w_v.push_back(store.add_uniform(tag + ".w_v", {width, head_width}, width, rng));
  }
  return p;
}

AttentionPoolParams make_pool_params(ParameterStore& store, std::span<const std::size_t> widths,
                                     std::size_t d_e, Rng& rng) {
  AttentionPoolParams p;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const std::string tag = "pool.block" + std::to_string(b);
    p.score.push_back(store.add_uniform(tag + ".w_p", {widths[b], 1}, widths[b], rng));
    p.projection.push_back(store.add_uniform(tag + ".proj", {widths[b], d_e}, widths[b], rng));
  }
  return p;
}

Tensor vector_self_attention(const Tensor& v, const MultiHeadAttentionParams& params,
                             const Tensor& additive_mask) {
  if (v.rank() != 3 || v.dim(2) != 3) {
    throw Error(ErrorCode::kShapeMismatch, "vector features must be n x d_v x 3, got " +
                                               shape_str(v.shape()));
  }
  const std::size_t n = v.dim(0);
  const std::size_t width = v.dim(1) * 3;
  if (params.heads == 0 || params.w_q.size() != params.heads || params.w_q[0].dim(0) != width) {
    throw Error(ErrorCode::kShapeMismatch,
                "attention weights expect input width " +
                    (params.w_q.empty() ? std::string("?") : std::to_string(params.w_q[0].dim(0))) +
                    ", got " + std::to_string(width));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width) / static_cast<double>(params.heads));
  const Tensor flat = reshape(v, {n, width});
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Tensor q = matmul(flat, params.w_q[h]);
    const Tensor k = matmul(flat, params.w_k[h]);
    const Tensor val = matmul(flat, params.w_v[h]);
    Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt);
    if (additive_mask.defined()) logits = add(logits, additive_mask);
    heads.push_back(matmul(softmax(logits, 1), val));
  }
  return reshape(concat(heads, 1), {n, width / 3, 3});
}

Tensor scalar_attention_pool(std::span<const Tensor> blocks, const AttentionPoolParams& params,
                             Tensor* gamma) {
  if (blocks.size() != params.score.size() || blocks.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "attention pooling expects " +
                                               std::to_string(params.score.size()) + " blocks, got " +
                                               std::to_string(blocks.size()));
  }
  std::vector<Tensor> scores;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].rank() != 2 || blocks[b].dim(1) != params.score[b].dim(0)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "block " + std::to_string(b) + " has shape " + shape_str(blocks[b].shape()) +
                      ", score vector " + shape_str(params.score[b].shape()));
    }
    scores.push_back(matmul(blocks[b], params.score[b]));
  }
  const Tensor weights = softmax(concat(scores, 1), 1);
  Tensor pooled;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Tensor term = multiply(slice(weights, 1, b, b + 1), matmul(blocks[b], params.projection[b]));
    pooled = pooled.defined() ? add(pooled, term) : term;
  }
  if (gamma) *gamma = weights;
  return pooled;
}

std::vector<Tensor> scalar_blocks(const GeometricGraph& graph, const Tensor& token_embedding) {
  const std::size_t bins = graph.rbf_bins;
  const std::size_t width = graph.scalar_width();
  std::vector<Tensor> blocks;
  for (std::size_t b = 0; b < kRbfScalarBlocks; ++b) {
    std::vector<double> values(graph.n * bins);
    for (std::size_t i = 0; i < graph.n; ++i) {
      for (std::size_t c = 0; c < bins; ++c) values[i * bins + c] = graph.scalar[i * width + b * bins + c];
    }
    blocks.push_back(make_tensor({graph.n, bins}, std::move(values)));
  }
  blocks.push_back(gather_rows(token_embedding, graph.token));
  return blocks;
}

Tensor knn_attention_mask(const Adjacency& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<double> mask(n * n, kMaskedLogit);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * n + i] = 0.0;
    for (std::size_t j : adjacency[i]) mask[i * n + j] = 0.0;
  }
  return make_tensor({n, n}, std::move(mask));
}

EmbeddedGraph embed_graph(const GeometricGraph& graph, const EmbedParams& params,
                          const EmbedOptions& options) {
  if (graph.vector.size() != graph.n * kVectorChannels * 3) {
    throw Error(ErrorCode::kShapeMismatch, "graph vector features have " +
                                               std::to_string(graph.vector.size()) + " values for " +
                                               std::to_string(graph.n) + " nodes");
  }
  EmbeddedGraph out;
  const auto blocks = scalar_blocks(graph, params.token_embedding);
  out.s_a = scalar_attention_pool(blocks, params.pool, &out.gamma);

  Tensor v = make_tensor({graph.n, kVectorChannels, 3}, graph.vector);
  const Tensor mask = options.mask_attention_to_knn ? knn_attention_mask(graph.adjacency) : Tensor();
  for (const auto& layer : params.attention) v = vector_self_attention(v, layer, mask);
  out.v_a = v;
  return out;
}

}  // namespace hyperrna
