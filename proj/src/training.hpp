#pragma once

// Losses, identity-clustered dataset splitting, and the teacher-forced
// training loop.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featurize.hpp"
#include "model.hpp"
#include "structure_io.hpp"
#include "tensor.hpp"

namespace hyperrna {

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 100;
  double lr = 1e-4;
  std::size_t knn = 16;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
  double lambda_str = 1.0;
  bool mean_seq_loss = false;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  std::map<std::string, std::string> to_map() const;
  void update_from(const std::map<std::string, std::string>& kv);
  void validate() const;
};

// Flat `key=value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::string write_key_values(const std::map<std::string, std::string>& kv);

// Sum over positions of -log softmax(logits)[truth] (mean when `mean`).
Tensor sequence_loss(std::span<const std::size_t> truth, const Tensor& logits, bool mean = false);
// Mean over all coordinate components of the squared difference.
double structure_loss(std::span<const Vec3> truth, std::span<const Vec3> predicted);

struct TotalLoss {
  Tensor value;
  bool has_structure_term = false;
};

// seq + lambda * str. `str` is a constant: predicted coordinates come from an
// external folding step, so no gradient flows through it.
TotalLoss total_loss(const Tensor& seq, std::optional<double> str, double lambda_str);

enum class SplitName { kTrain, kVal, kTest };
const char* split_name(SplitName s);

struct DatasetSplit {
  std::vector<std::string> ids;  // input order
  std::vector<std::size_t> cluster;
  std::vector<SplitName> split;
  std::vector<std::string> representative;  // per cluster

  std::vector<std::string> members(SplitName s) const;
};

// Identity = longest common subsequence / length of the shorter sequence,
// i.e. global alignment with match 1, mismatch 0 and free gaps.
double alignment_identity(std::string_view a, std::string_view b);

DatasetSplit cluster_split(std::span<const FastaRecord> sequences, double identity_threshold,
                           std::array<double, 3> ratios, std::uint64_t seed);

std::string write_split(const DatasetSplit& split);
DatasetSplit read_split(std::string_view text);

struct Example {
  GeometricGraph graph;
  std::vector<std::size_t> bases;                  // RNA nodes only
  std::optional<std::vector<Vec3>> predicted_coords;  // 3 per RNA node
};

Example make_example(GeometricGraph graph);

struct EpochLog {
  std::size_t epoch = 0;
  double train_ce = 0.0;      // mean per-position CE over training structures
  double val_ce = 0.0;        // NaN without a validation set
  double val_recovery = 0.0;  // greedy decoding, NaN without a validation set
  double wall_seconds = 0.0;
};

std::string epoch_log_csv_header();
std::string epoch_log_csv_row(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  std::vector<std::vector<double>> best_values;
  bool stopped_early = false;
};

struct TrainHooks {
  // Return true to stop after this epoch.
  std::function<bool(const EpochLog&, const HyperRnaModel&)> after_epoch;
  bool evaluate_validation = true;
};

// Mean per-position teacher-forced CE in eval mode.
double evaluate_ce(const HyperRnaModel& model, std::span<const Example> examples);
// Mean over structures of teacher-forced argmax recovery (eval mode).
double teacher_forced_recovery(const HyperRnaModel& model, std::span<const Example> examples);
// Mean over structures of greedy autoregressive recovery.
double greedy_recovery(const HyperRnaModel& model, std::span<const Example> examples);

TrainResult train(HyperRnaModel& model, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainConfig& config, AdamState& adam,
                  const TrainHooks& hooks = {});

}  // namespace hyperrna
