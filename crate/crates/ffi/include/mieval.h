#ifndef MIEVAL_H
#define MIEVAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum MievalStatus {
  MIEVAL_STATUS_OK = 0,
  // invalid configuration, schema, or JSON input
  MIEVAL_STATUS_CONFIG_ERROR = 1,
  // contract violation in the data (missing classes, incomplete input, ...)
  MIEVAL_STATUS_DATA_ERROR = 2,
  // numerical failure (singular system, non-convergence)
  MIEVAL_STATUS_NUMERIC_ERROR = 3,
  // file system failure
  MIEVAL_STATUS_IO_ERROR = 4,
  // a required pointer argument was null
  MIEVAL_STATUS_NULL_ARGUMENT = 5,
  // a string argument was not valid UTF-8
  MIEVAL_STATUS_UTF8_ERROR = 6,
} MievalStatus;

// Opaque dataset handle.
typedef struct MievalDataset MievalDataset;

// Opaque list of imputed datasets.
typedef struct MievalImputedList MievalImputedList;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version string (static storage, do not free).
const char *mieval_version(void);

// Message of the most recent error on this thread (thread-local storage,
// do not free; valid until the next failing call).
const char *mieval_last_error(void);

// Free a string returned through an out-parameter.
void mieval_string_free(char *s);

// Load a dataset from a CSV file and a schema JSON file.
enum MievalStatus mieval_dataset_load_csv(const char *csv_path,
                                          const char *schema_path,
                                          struct MievalDataset **out);

// Generate a synthetic cohort from a cohort-spec JSON document. On success
// `out` holds the complete dataset; when `truth_json_out` is non-null it
// receives the planted ground truth as JSON.
enum MievalStatus mieval_dataset_from_cohort_spec(const char *spec_json,
                                                  struct MievalDataset **out,
                                                  char **truth_json_out);

void mieval_dataset_free(struct MievalDataset *ds);

size_t mieval_dataset_rows(const struct MievalDataset *ds);

size_t mieval_dataset_cols(const struct MievalDataset *ds);

size_t mieval_dataset_missing_cells(const struct MievalDataset *ds);

// Write the dataset as CSV (missing cells become empty fields).
enum MievalStatus mieval_dataset_write_csv(const struct MievalDataset *ds, const char *path);

// Missingness-pattern summary as a JSON document.
enum MievalStatus mieval_pattern_summary_json(const struct MievalDataset *ds, char **json_out);

// Little's MCAR test; writes the statistic, degrees of freedom, and
// p-value through the out-pointers.
enum MievalStatus mieval_little_mcar_test(const struct MievalDataset *ds,
                                          double *d2,
                                          double *df,
                                          double *p_value);

// Produce the `index`-th (1-based) amputation of a complete dataset under
// a plan given as JSON. `realized_prop` receives the realized incomplete
// fraction when non-null.
enum MievalStatus mieval_ampute(const struct MievalDataset *ds,
                                const char *plan_json,
                                uint32_t index,
                                struct MievalDataset **out,
                                double *realized_prop);

// Impute a dataset m times with a method config given as JSON
// ({"family": "fcs" | "forest" | "jm", ...}).
enum MievalStatus mieval_impute(const struct MievalDataset *ds,
                                const char *method_json,
                                uint32_t m,
                                uint64_t seed,
                                struct MievalImputedList **out);

size_t mieval_imputed_list_len(const struct MievalImputedList *list);

// Copy the j-th (0-based) imputed dataset out of a list as a standalone
// handle.
enum MievalStatus mieval_imputed_list_get(const struct MievalImputedList *list,
                                          size_t index,
                                          struct MievalDataset **out);

void mieval_imputed_list_free(struct MievalImputedList *list);

// Run a full evaluation experiment from an experiment-config JSON document,
// writing artifacts into `out_dir`. When `summary_json_out` is non-null it
// receives a JSON summary (method ids, m, a, failed methods, artifacts).
enum MievalStatus mieval_run_experiment(const char *config_json,
                                        const char *out_dir,
                                        bool verbose,
                                        char **summary_json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIEVAL_H */
