#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "attention_embed.hpp"
#include "featurize.hpp"
#include "gvp_decoder.hpp"
#include "hypergraph_encoder.hpp"
#include "parameters.hpp"

namespace hyperrna {

struct ModelConfig {
  std::size_t rbf_bins = 24;
  std::size_t token_width = 32;
  std::size_t d_v = kVectorChannels;
  std::size_t d_h = 16;
  std::size_t attn_heads = 3;
  std::size_t attn_layers = 1;
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 3;
  double dropout = 0.1;
  ConvForm conv = ConvForm::kRowNormalized;
  bool mask_attn_knn = false;

  std::size_t d_e() const { return kRbfScalarBlocks * rbf_bins + token_width; }

  // Flat key=value view, shared by checkpoints and config files.
  std::map<std::string, std::string> to_map() const;
  // Applies recognised keys from `kv`; unknown keys are ignored.
  void update_from(const std::map<std::string, std::string>& kv);
  void validate() const;
};

struct Encoded {
  Tensor s_p, v_p;
  Tensor s_e, v_e;
  EmbeddedGraph embedded;
  Hypergraph hypergraph;
};

class HyperRnaModel {
 public:
  HyperRnaModel(const ModelConfig& config, std::uint64_t seed);
  HyperRnaModel(HyperRnaModel&&) = default;
  HyperRnaModel& operator=(HyperRnaModel&&) = default;
  // Copies would silently share parameter storage.
  HyperRnaModel(const HyperRnaModel&) = delete;
  HyperRnaModel& operator=(const HyperRnaModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const EmbedParams& embed_params() const { return embed_; }
  const EncoderParams& encoder_params() const { return encoder_; }
  const DecoderParams& decoder_params() const { return decoder_; }

  // Throws DimensionMismatch when the graph was built with other feature widths.
  void check_compatible(const GeometricGraph& graph) const;

  // `rng` drives dropout and is only used when `train` is set.
  Encoded encode(const GeometricGraph& graph, bool train = false, Rng* rng = nullptr) const;

  Tensor teacher_forced_logits(const GeometricGraph& graph, const Encoded& enc,
                               std::span<const std::size_t> true_bases) const;

  std::string sample(const GeometricGraph& graph, const Encoded& enc, double tau,
                     std::uint64_t seed) const;
  std::string greedy(const GeometricGraph& graph, const Encoded& enc) const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  EmbedParams embed_;
  EncoderParams encoder_;
  DecoderParams decoder_;
};

}  // namespace hyperrna
