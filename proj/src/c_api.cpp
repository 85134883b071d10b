#include "hyperrna/hyperrna.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "error.hpp"
#include "featurize.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "structure_io.hpp"
#include "training.hpp"

using namespace hyperrna;

struct hr_graph {
  Example example;
  std::string rna_sequence;
  std::vector<std::string> warnings;
};

struct hr_split {
  DatasetSplit split;
};

struct hr_model {
  TrainConfig config;
  std::unique_ptr<HyperRnaModel> model;
  AdamState adam;
  std::optional<std::vector<std::vector<double>>> best_values;
};

struct hr_eval {
  std::vector<EvalRow> rows;
};

namespace {

thread_local std::string g_last_error;

hr_status to_status(ErrorCode code) { return static_cast<hr_status>(static_cast<int>(code) + 1); }

template <typename F>
hr_status guard(F&& body) {
  try {
    body();
    return HR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return HR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error";
    return HR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

hr_graph* wrap_graph(GeometricGraph graph, std::vector<std::string> warnings) {
  auto* g = new hr_graph;
  g->rna_sequence = graph.rna_sequence();
  g->example = make_example(std::move(graph));
  g->warnings = std::move(warnings);
  return g;
}

std::vector<Example> gather_examples(const hr_graph* const* graphs, std::size_t n) {
  if (n > 0) require(graphs, "graph array");
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(graphs[i], "graph");
    out.push_back(graphs[i]->example);
  }
  return out;
}

}  // namespace

extern "C" {

const char* hr_version(void) { return "1.0.0"; }

const char* hr_last_error(void) { return g_last_error.c_str(); }

const char* hr_status_name(hr_status status) {
  if (status == HR_OK) return "Ok";
  if (status == HR_ERR_INTERNAL) return "Internal";
  const int idx = static_cast<int>(status) - 1;
  if (idx < 0 || idx > static_cast<int>(ErrorCode::kInvalidArgument)) return "Unknown";
  return error_code_name(static_cast<ErrorCode>(idx));
}

void hr_string_free(char* s) { std::free(s); }

// ---- graphs --------------------------------------------------------------------

hr_status hr_graph_from_pdb(const char* pdb_path, const char* id, size_t knn, size_t rbf_bins,
                            hr_graph** out) {
  return guard([&] {
    require(pdb_path, "pdb_path");
    require(id, "id");
    require(out, "out");
    FeatureConfig cfg;
    cfg.knn = knn;
    cfg.rbf_bins = rbf_bins;
    PreprocessedStructure p = graph_from_pdb(read_file(pdb_path), id, cfg);
    *out = wrap_graph(std::move(p.graph), std::move(p.warnings));
  });
}

hr_status hr_graph_load(const char* path, hr_graph** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    GeometricGraph graph;
    try {
      graph = read_graph(read_file(path));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(path) + ": " + e.what());
    }
    *out = wrap_graph(std::move(graph), {});
  });
}

hr_status hr_graph_save(const hr_graph* graph, const char* path) {
  return guard([&] {
    require(graph, "graph");
    require(path, "path");
    atomic_write_file(path, write_graph(graph->example.graph));
  });
}

void hr_graph_free(hr_graph* graph) { delete graph; }

const char* hr_graph_id(const hr_graph* graph) { return graph ? graph->example.graph.id.c_str() : ""; }
size_t hr_graph_num_nodes(const hr_graph* graph) { return graph ? graph->example.graph.n : 0; }
size_t hr_graph_num_rna(const hr_graph* graph) { return graph ? graph->example.bases.size() : 0; }
const char* hr_graph_rna_sequence(const hr_graph* graph) { return graph ? graph->rna_sequence.c_str() : ""; }
size_t hr_graph_warning_count(const hr_graph* graph) { return graph ? graph->warnings.size() : 0; }

const char* hr_graph_warning(const hr_graph* graph, size_t index) {
  if (graph == nullptr || index >= graph->warnings.size()) return "";
  return graph->warnings[index].c_str();
}

hr_status hr_graph_set_predicted_pdb(hr_graph* graph, const char* pdb_path) {
  return guard([&] {
    require(graph, "graph");
    require(pdb_path, "pdb_path");
    std::vector<Vec3> beads = rna_beads_from_pdb(read_file(pdb_path));
    if (beads.size() != 3 * graph->example.bases.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  std::string(pdb_path) + ": " + std::to_string(beads.size() / 3) +
                      " RNA residues, structure '" + graph->example.graph.id + "' has " +
                      std::to_string(graph->example.bases.size()));
    }
    graph->example.predicted_coords = std::move(beads);
  });
}

// ---- splits --------------------------------------------------------------------

hr_status hr_split_from_fasta(const char* fasta_path, double identity_threshold, const double ratios[3],
                              uint64_t seed, hr_split** out) {
  return guard([&] {
    require(fasta_path, "fasta_path");
    require(ratios, "ratios");
    require(out, "out");
    const auto records = parse_fasta(read_file(fasta_path), Alphabet::kRna);
    auto s = std::make_unique<hr_split>();
    s->split = cluster_split(records, identity_threshold, {ratios[0], ratios[1], ratios[2]}, seed);
    *out = s.release();
  });
}

hr_status hr_split_load(const char* path, hr_split** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto s = std::make_unique<hr_split>();
    s->split = read_split(read_file(path));
    *out = s.release();
  });
}

hr_status hr_split_save(const hr_split* split, const char* path) {
  return guard([&] {
    require(split, "split");
    require(path, "path");
    atomic_write_file(path, write_split(split->split));
  });
}

void hr_split_free(hr_split* split) { delete split; }
size_t hr_split_count(const hr_split* split) { return split ? split->split.ids.size() : 0; }
size_t hr_split_num_clusters(const hr_split* split) { return split ? split->split.representative.size() : 0; }

const char* hr_split_id(const hr_split* split, size_t index) {
  if (split == nullptr || index >= split->split.ids.size()) return "";
  return split->split.ids[index].c_str();
}

hr_split_part hr_split_part_of(const hr_split* split, size_t index) {
  if (split == nullptr || index >= split->split.ids.size()) return HR_SPLIT_TRAIN;
  return static_cast<hr_split_part>(split->split.split[index]);
}

// ---- models --------------------------------------------------------------------

hr_status hr_model_create(const char* config_text, uint64_t seed, hr_model** out) {
  return guard([&] {
    require(out, "out");
    auto m = std::make_unique<hr_model>();
    if (config_text != nullptr) m->config.update_from(parse_key_values(config_text));
    m->config.seed = seed;
    m->config.validate();
    m->model = std::make_unique<HyperRnaModel>(m->config.model, seed);
    m->adam.lr = m->config.lr;
    *out = m.release();
  });
}

hr_status hr_model_load(const char* checkpoint_path, hr_model** out) {
  return guard([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    CheckpointData ck;
    try {
      ck = read_checkpoint(read_file(checkpoint_path));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(checkpoint_path) + ": " + e.what());
    }
    auto m = std::make_unique<hr_model>();
    m->config.update_from(ck.meta);
    m->model = std::make_unique<HyperRnaModel>(model_from_checkpoint(ck));
    m->adam = ck.adam;
    *out = m.release();
  });
}

hr_status hr_model_save(const hr_model* model, const char* checkpoint_path) {
  return guard([&] {
    require(model, "model");
    require(checkpoint_path, "checkpoint_path");
    atomic_write_file(checkpoint_path,
                      write_checkpoint(model->config.to_map(), model->model->parameters(), model->adam));
  });
}

void hr_model_free(hr_model* model) { delete model; }

hr_status hr_model_config_text(const hr_model* model, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(write_key_values(model->config.to_map()));
  });
}

hr_status hr_model_check_graph(const hr_model* model, const hr_graph* graph) {
  return guard([&] {
    require(model, "model");
    require(graph, "graph");
    model->model->check_compatible(graph->example.graph);
  });
}

hr_status hr_model_train(hr_model* model, const hr_graph* const* train, size_t num_train,
                         const hr_graph* const* val, size_t num_val, hr_epoch_callback callback,
                         void* user, hr_train_summary* summary) {
  return guard([&] {
    require(model, "model");
    const std::vector<Example> train_set = gather_examples(train, num_train);
    const std::vector<Example> val_set = gather_examples(val, num_val);
    TrainHooks hooks;
    if (callback != nullptr) {
      hooks.after_epoch = [&](const EpochLog& log, const HyperRnaModel&) {
        const hr_epoch_log c{log.epoch, log.train_ce, log.val_ce, log.val_recovery, log.wall_seconds};
        return callback(&c, user) != 0;
      };
    }
    TrainResult result = hyperrna::train(*model->model, train_set, val_set, model->config, model->adam, hooks);
    model->best_values = std::move(result.best_values);
    if (summary != nullptr) {
      summary->epochs_run = result.log.size();
      summary->best_epoch = result.best_epoch;
      summary->stopped_early = result.stopped_early ? 1 : 0;
    }
  });
}

hr_status hr_model_use_best(hr_model* model) {
  return guard([&] {
    require(model, "model");
    if (model->best_values) load_parameter_values(model->model->parameters(), *model->best_values);
  });
}

hr_status hr_model_sample_fasta(const hr_model* model, const hr_graph* graph, double temperature,
                                size_t count, uint64_t seed, char** fasta_out) {
  return guard([&] {
    require(model, "model");
    require(graph, "graph");
    require(fasta_out, "fasta_out");
    const auto records = sample_sequences(*model->model, graph->example.graph, temperature, count, seed);
    *fasta_out = dup_string(write_fasta(records));
  });
}

hr_status hr_model_perplexity(const hr_model* model, const hr_graph* graph, double* out) {
  return guard([&] {
    require(model, "model");
    require(graph, "graph");
    require(out, "out");
    *out = native_perplexity(*model->model, graph->example.graph);
  });
}

// ---- evaluation ----------------------------------------------------------------

hr_status hr_eval_create(const char* predicted_fasta_path, const char* reference_fasta_path,
                         hr_eval** out) {
  return guard([&] {
    require(predicted_fasta_path, "predicted_fasta_path");
    require(reference_fasta_path, "reference_fasta_path");
    require(out, "out");
    const auto pred = parse_fasta(read_file(predicted_fasta_path), Alphabet::kRna);
    const auto ref = parse_fasta(read_file(reference_fasta_path), Alphabet::kRna);
    auto e = std::make_unique<hr_eval>();
    e->rows = match_predictions(pred, ref);
    *out = e.release();
  });
}

void hr_eval_free(hr_eval* eval) { delete eval; }
size_t hr_eval_row_count(const hr_eval* eval) { return eval ? eval->rows.size() : 0; }

const char* hr_eval_row_id(const hr_eval* eval, size_t row) {
  if (eval == nullptr || row >= eval->rows.size()) return "";
  return eval->rows[row].id.c_str();
}

const char* hr_eval_row_structure(const hr_eval* eval, size_t row) {
  if (eval == nullptr || row >= eval->rows.size()) return "";
  return eval->rows[row].structure.c_str();
}

hr_status hr_eval_set_coords(hr_eval* eval, size_t row, const char* reference_pdb_path,
                             const char* predicted_pdb_path) {
  return guard([&] {
    require(eval, "eval");
    require(reference_pdb_path, "reference_pdb_path");
    require(predicted_pdb_path, "predicted_pdb_path");
    if (row >= eval->rows.size()) throw Error(ErrorCode::kInvalidArgument, "row out of range");
    const auto ref = rna_beads_from_pdb(read_file(reference_pdb_path));
    const auto pred = rna_beads_from_pdb(read_file(predicted_pdb_path));
    add_structure_metrics(eval->rows[row], ref, pred);
  });
}

hr_status hr_eval_set_perplexity(hr_eval* eval, size_t row, double perplexity) {
  return guard([&] {
    require(eval, "eval");
    if (row >= eval->rows.size()) throw Error(ErrorCode::kInvalidArgument, "row out of range");
    eval->rows[row].perplexity = perplexity;
  });
}

hr_status hr_eval_csv(const hr_eval* eval, char** csv_out) {
  return guard([&] {
    require(eval, "eval");
    require(csv_out, "csv_out");
    *csv_out = dup_string(eval_csv(eval->rows));
  });
}

}  // extern "C"
