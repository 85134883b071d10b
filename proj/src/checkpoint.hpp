#pragma once

// Checkpoint text format:
//
//   HYPERRNA-CKPT v1
//   #meta <count>
//   <key>=<value>                 (count lines, sorted by key)
//   #param <name> <rank> <dims...>
//   <values, %.17g, space separated>
//   #adam <lr> <beta1> <beta2> <eps> <step>
//   #m <name>   / #v <name>       (one pair per parameter once a step was taken)
//   <values>
//   #end

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"
#include "tensor.hpp"

namespace hyperrna {

struct CheckpointData {
  std::map<std::string, std::string> meta;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  AdamState adam;
};

std::string write_checkpoint(const std::map<std::string, std::string>& meta,
                             const ParameterStore& params, const AdamState& adam);
CheckpointData read_checkpoint(std::string_view text);

// Builds a model from the checkpoint's config keys and copies every stored
// parameter into it; throws DimensionMismatch on any name or shape mismatch.
HyperRnaModel model_from_checkpoint(const CheckpointData& ckpt);

// Overwrites the model's parameter values from `values` (same order).
void load_parameter_values(ParameterStore& params, const std::vector<std::vector<double>>& values);
std::vector<std::vector<double>> snapshot_parameter_values(const ParameterStore& params);

// Writes to `<path>.tmp` then renames over `path`.
void atomic_write_file(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

}  // namespace hyperrna
