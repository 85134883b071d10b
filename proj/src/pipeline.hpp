#pragma once

// File-level glue used by the command-line tool: PDB to graph, batch
// sampling, and metric reports.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featurize.hpp"
#include "model.hpp"
#include "structure_io.hpp"

namespace hyperrna {

struct PreprocessedStructure {
  GeometricGraph graph;
  std::vector<std::string> warnings;
};

// All recognised chains of one PDB file become one graph named `id`.
PreprocessedStructure graph_from_pdb(std::string_view pdb_text, const std::string& id,
                                     const FeatureConfig& config);

// Beads of the RNA chains only, three per residue in chain order.
std::vector<Vec3> rna_beads_from_pdb(std::string_view pdb_text);

// `count` sequences with ids `<graph id>_s<i>`; sample i uses the i-th draw of
// a generator seeded with `seed`.
std::vector<FastaRecord> sample_sequences(const HyperRnaModel& model, const GeometricGraph& graph,
                                          double tau, std::size_t count, std::uint64_t seed);

// Teacher-forced perplexity of the native RNA sequence.
double native_perplexity(const HyperRnaModel& model, const GeometricGraph& graph);

struct EvalRow {
  std::string id;         // prediction id
  std::string structure;  // matched reference id
  double recovery = 0.0;
  std::optional<double> perplexity;
  std::optional<double> rmsd;
  std::optional<double> lddt;
};

// Pairs every prediction with a reference. A prediction id matches a reference
// id exactly or after removing a trailing `_s<digits>`. Throws IdMismatch when a
// prediction has no reference or a reference has no prediction.
std::vector<EvalRow> match_predictions(std::span<const FastaRecord> predicted,
                                       std::span<const FastaRecord> reference);

// RMSD after superposition over all beads; lDDT over the central beads.
void add_structure_metrics(EvalRow& row, std::span<const Vec3> reference_beads,
                           std::span<const Vec3> predicted_beads);

// Header, one row per prediction, then `mean` and `sem` rows. Missing
// optional metrics are empty cells.
std::string eval_csv(std::span<const EvalRow> rows);

}  // namespace hyperrna
