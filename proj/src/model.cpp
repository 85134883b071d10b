#include "model.hpp"

#include <charconv>
#include <cstdio>

#include "error.hpp"

namespace hyperrna {

namespace {

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidArgument, key + ": expected a non-negative integer, got '" +
                                                 value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidArgument, key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw Error(ErrorCode::kInvalidArgument, key + ": expected true/false, got '" + value + "'");
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"rbf_bins", std::to_string(rbf_bins)},
      {"token_width", std::to_string(token_width)},
      {"d_v", std::to_string(d_v)},
      {"d_h", std::to_string(d_h)},
      {"attn_heads", std::to_string(attn_heads)},
      {"attn_layers", std::to_string(attn_layers)},
      {"encoder_layers", std::to_string(encoder_layers)},
      {"decoder_layers", std::to_string(decoder_layers)},
      {"dropout", format_double(dropout)},
      {"conv", conv == ConvForm::kSymmetric ? "symmetric" : "row"},
      {"mask_attn_knn", mask_attn_knn ? "true" : "false"},
  };
}

void ModelConfig::update_from(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "rbf_bins") rbf_bins = to_size(key, value);
    else if (key == "token_width") token_width = to_size(key, value);
    else if (key == "d_v") d_v = to_size(key, value);
    else if (key == "d_h") d_h = to_size(key, value);
    else if (key == "attn_heads") attn_heads = to_size(key, value);
    else if (key == "attn_layers") attn_layers = to_size(key, value);
    else if (key == "encoder_layers") encoder_layers = to_size(key, value);
    else if (key == "decoder_layers") decoder_layers = to_size(key, value);
    else if (key == "dropout") dropout = to_double(key, value);
    else if (key == "mask_attn_knn") mask_attn_knn = to_bool(key, value);
    else if (key == "conv") {
      if (value == "row") conv = ConvForm::kRowNormalized;
      else if (value == "symmetric") conv = ConvForm::kSymmetric;
      else throw Error(ErrorCode::kInvalidArgument, "conv must be 'row' or 'symmetric'");
    }
  }
}

void ModelConfig::validate() const {
  if (d_v != kVectorChannels) {
    throw Error(ErrorCode::kInvalidArgument, "d_v must equal the featurizer's " +
                                                 std::to_string(kVectorChannels) + " channels");
  }
  if (rbf_bins == 0 || token_width == 0 || d_h == 0) {
    throw Error(ErrorCode::kInvalidArgument, "rbf_bins, token_width and d_h must be positive");
  }
  if (d_h < d_v) throw Error(ErrorCode::kInvalidArgument, "d_h must be at least d_v");
  if (attn_heads == 0 || (3 * d_v) % attn_heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "3*d_v must be divisible by attn_heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout must lie in [0, 1)");
  }
}

HyperRnaModel::HyperRnaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d_e = config_.d_e();
  for (std::size_t l = 0; l < config_.attn_layers; ++l) {
    embed_.attention.push_back(make_attention_params(store_, "attention" + std::to_string(l),
                                                     config_.d_v, config_.attn_heads, rng));
  }
  std::vector<std::size_t> widths(kRbfScalarBlocks, config_.rbf_bins);
  widths.push_back(config_.token_width);
  embed_.pool = make_pool_params(store_, widths, d_e, rng);
  embed_.token_embedding =
      store_.add_uniform("token_embedding", {kTokenCategories, config_.token_width}, 1, rng);
  encoder_ = make_encoder_params(store_, config_.encoder_layers, d_e, config_.d_v, rng);
  decoder_ = make_decoder_params(store_, config_.decoder_layers, d_e, config_.d_v, config_.d_h, rng);
}

void HyperRnaModel::check_compatible(const GeometricGraph& graph) const {
  if (graph.rbf_bins != config_.rbf_bins) {
    throw Error(ErrorCode::kDimensionMismatch, "graph '" + graph.id + "' has " +
                                                   std::to_string(graph.rbf_bins) +
                                                   " RBF bins, model expects " +
                                                   std::to_string(config_.rbf_bins));
  }
  if (graph.vector.size() != graph.n * config_.d_v * 3) {
    throw Error(ErrorCode::kDimensionMismatch, "graph '" + graph.id + "' vector features do not "
                                                   "match d_v = " + std::to_string(config_.d_v));
  }
  if (graph.num_rna() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "graph '" + graph.id + "' has no RNA nodes");
  }
}

Encoded HyperRnaModel::encode(const GeometricGraph& graph, bool train, Rng* rng) const {
  check_compatible(graph);
  Encoded enc;
  enc.embedded = embed_graph(graph, embed_, {config_.mask_attn_knn});
  enc.hypergraph = build_hypergraph(graph.adjacency);
  EncoderOptions opts;
  opts.form = config_.conv;
  opts.dropout = config_.dropout;
  opts.train = train;
  opts.rng = rng;
  EncoderOutput out = encoder_forward(enc.embedded.s_a, enc.embedded.v_a, enc.hypergraph, encoder_, opts);
  enc.s_p = out.s_p;
  enc.v_p = out.v_p;
  enc.s_e = out.s_e;
  enc.v_e = out.v_e;
  return enc;
}

Tensor HyperRnaModel::teacher_forced_logits(const GeometricGraph& graph, const Encoded& enc,
                                            std::span<const std::size_t> true_bases) const {
  return hyperrna::teacher_forced_logits(true_bases, enc.s_p, enc.v_p,
                                         {&graph.adjacency, graph.num_rna()}, decoder_);
}

std::string HyperRnaModel::sample(const GeometricGraph& graph, const Encoded& enc, double tau,
                                  std::uint64_t seed) const {
  return autoregressive_sample(enc.s_p, enc.v_p, {&graph.adjacency, graph.num_rna()}, decoder_, tau,
                               seed);
}

std::string HyperRnaModel::greedy(const GeometricGraph& graph, const Encoded& enc) const {
  return greedy_decode(enc.s_p, enc.v_p, {&graph.adjacency, graph.num_rna()}, decoder_);
}

}  // namespace hyperrna
