#ifndef HYPERRNA_HYPERRNA_H
#define HYPERRNA_HYPERRNA_H

/*
 * C interface to the HyperRNA inverse-folding library.
 *
 * Every fallible call returns an hr_status. On failure a description is
 * available from hr_last_error() until the next failing call on the same
 * thread. Handles are opaque and owned by the caller; release them with the
 * matching *_free function. Strings returned through char** out-parameters
 * are released with hr_string_free. Strings returned directly as
 * const char* stay valid as long as the handle they came from.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HR_API __declspec(dllexport)
#else
#define HR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hr_status {
  HR_OK = 0,
  HR_ERR_MALFORMED_COORDINATE = 1,
  HR_ERR_EMPTY_STRUCTURE = 2,
  HR_ERR_EMPTY_BACKBONE = 3,
  HR_ERR_UNKNOWN_RESIDUE = 4,
  HR_ERR_INVALID_ALPHABET = 5,
  HR_ERR_DEGENERATE_GRAPH = 6,
  HR_ERR_DEGENERATE_TORSION = 7,
  HR_ERR_SHAPE_MISMATCH = 8,
  HR_ERR_NOT_SCALAR = 9,
  HR_ERR_SINGULAR_DEGREE = 10,
  HR_ERR_STEP_OUT_OF_RANGE = 11,
  HR_ERR_NON_POSITIVE_TEMPERATURE = 12,
  HR_ERR_LENGTH_MISMATCH = 13,
  HR_ERR_EMPTY_INPUT = 14,
  HR_ERR_NON_FINITE_LOSS = 15,
  HR_ERR_TOO_FEW_POINTS = 16,
  HR_ERR_DEGENERATE_CONFIGURATION = 17,
  HR_ERR_TOO_FEW_SAMPLES = 18,
  HR_ERR_DIMENSION_MISMATCH = 19,
  HR_ERR_ID_MISMATCH = 20,
  HR_ERR_PARSE = 21,
  HR_ERR_IO = 22,
  HR_ERR_INVALID_ARGUMENT = 23,
  HR_ERR_INTERNAL = 100
} hr_status;

typedef struct hr_graph hr_graph;
typedef struct hr_split hr_split;
typedef struct hr_model hr_model;
typedef struct hr_eval hr_eval;

typedef enum hr_split_part { HR_SPLIT_TRAIN = 0, HR_SPLIT_VAL = 1, HR_SPLIT_TEST = 2 } hr_split_part;

typedef struct hr_epoch_log {
  size_t epoch;
  double train_ce;
  double val_ce;       /* NaN without validation structures */
  double val_recovery; /* NaN without validation structures */
  double wall_seconds;
} hr_epoch_log;

/* Return nonzero to stop training after this epoch. */
typedef int (*hr_epoch_callback)(const hr_epoch_log* log, void* user);

typedef struct hr_train_summary {
  size_t epochs_run;
  size_t best_epoch; /* 0 when the initial parameters scored best */
  int stopped_early;
} hr_train_summary;

HR_API const char* hr_version(void);
HR_API const char* hr_last_error(void);
HR_API const char* hr_status_name(hr_status status);
HR_API void hr_string_free(char* s);

/* ---- graphs ---- */

/* Featurizes every recognised chain of a PDB file into one graph. */
HR_API hr_status hr_graph_from_pdb(const char* pdb_path, const char* id, size_t knn, size_t rbf_bins,
                                   hr_graph** out);
HR_API hr_status hr_graph_load(const char* path, hr_graph** out);
/* Atomic: writes a temporary file and renames it over `path`. */
HR_API hr_status hr_graph_save(const hr_graph* graph, const char* path);
HR_API void hr_graph_free(hr_graph* graph);

HR_API const char* hr_graph_id(const hr_graph* graph);
HR_API size_t hr_graph_num_nodes(const hr_graph* graph);
HR_API size_t hr_graph_num_rna(const hr_graph* graph);
HR_API const char* hr_graph_rna_sequence(const hr_graph* graph);
/* Residues dropped while reading the PDB file. */
HR_API size_t hr_graph_warning_count(const hr_graph* graph);
HR_API const char* hr_graph_warning(const hr_graph* graph, size_t index);

/* Attaches externally predicted RNA coordinates, enabling the structure loss
 * for this graph during training. */
HR_API hr_status hr_graph_set_predicted_pdb(hr_graph* graph, const char* pdb_path);

/* ---- dataset splits ---- */

/* ratios: train, val, test weights. */
HR_API hr_status hr_split_from_fasta(const char* fasta_path, double identity_threshold,
                                     const double ratios[3], uint64_t seed, hr_split** out);
HR_API hr_status hr_split_load(const char* path, hr_split** out);
HR_API hr_status hr_split_save(const hr_split* split, const char* path);
HR_API void hr_split_free(hr_split* split);
HR_API size_t hr_split_count(const hr_split* split);
HR_API size_t hr_split_num_clusters(const hr_split* split);
HR_API const char* hr_split_id(const hr_split* split, size_t index);
HR_API hr_split_part hr_split_part_of(const hr_split* split, size_t index);

/* ---- models ---- */

/* `config_text` holds key=value lines (may be NULL or empty for defaults). */
HR_API hr_status hr_model_create(const char* config_text, uint64_t seed, hr_model** out);
HR_API hr_status hr_model_load(const char* checkpoint_path, hr_model** out);
HR_API hr_status hr_model_save(const hr_model* model, const char* checkpoint_path);
HR_API void hr_model_free(hr_model* model);

/* Effective configuration as key=value lines. */
HR_API hr_status hr_model_config_text(const hr_model* model, char** out);
HR_API hr_status hr_model_check_graph(const hr_model* model, const hr_graph* graph);

/* Teacher-forced training. The model keeps its final parameters; call
 * hr_model_use_best afterwards to switch to the best-scoring epoch. */
HR_API hr_status hr_model_train(hr_model* model, const hr_graph* const* train, size_t num_train,
                                const hr_graph* const* val, size_t num_val, hr_epoch_callback callback,
                                void* user, hr_train_summary* summary);
HR_API hr_status hr_model_use_best(hr_model* model);

/* FASTA text with `count` records named `<graph id>_s<i>`. */
HR_API hr_status hr_model_sample_fasta(const hr_model* model, const hr_graph* graph, double temperature,
                                       size_t count, uint64_t seed, char** fasta_out);
HR_API hr_status hr_model_perplexity(const hr_model* model, const hr_graph* graph, double* out);

/* ---- evaluation ---- */

HR_API hr_status hr_eval_create(const char* predicted_fasta_path, const char* reference_fasta_path,
                                hr_eval** out);
HR_API void hr_eval_free(hr_eval* eval);
HR_API size_t hr_eval_row_count(const hr_eval* eval);
HR_API const char* hr_eval_row_id(const hr_eval* eval, size_t row);
HR_API const char* hr_eval_row_structure(const hr_eval* eval, size_t row);
HR_API hr_status hr_eval_set_coords(hr_eval* eval, size_t row, const char* reference_pdb_path,
                                    const char* predicted_pdb_path);
HR_API hr_status hr_eval_set_perplexity(hr_eval* eval, size_t row, double perplexity);
HR_API hr_status hr_eval_csv(const hr_eval* eval, char** csv_out);

#ifdef __cplusplus
}
#endif

#endif /* HYPERRNA_HYPERRNA_H */
