/*
 * fusemb C API.
 *
 * Every function returns a fusemb_status. On failure a thread-local message
 * is available from fusemb_last_error() until the next call on that thread.
 * Objects are opaque handles released with their matching *_destroy.
 */
#ifndef FUSEMB_H
#define FUSEMB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FUSEMB_BUILDING)
#    define FUSEMB_API __declspec(dllexport)
#  else
#    define FUSEMB_API __declspec(dllimport)
#  endif
#else
#  define FUSEMB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fusemb_status {
  FUSEMB_OK = 0,
  FUSEMB_ERR_MISSING_MODALITY = 1,
  FUSEMB_ERR_DIMENSION_MISMATCH = 2,
  FUSEMB_ERR_DEGENERATE_VECTOR = 3,
  FUSEMB_ERR_DUPLICATE_ID = 4,
  FUSEMB_ERR_PARSE = 5,
  FUSEMB_ERR_EMPTY_STORE = 6,
  FUSEMB_ERR_UNKNOWN_ID = 7,
  FUSEMB_ERR_RANK = 8,
  FUSEMB_ERR_DEGENERATE_DATA = 9,
  FUSEMB_ERR_CARDINALITY = 10,
  FUSEMB_ERR_UNDEFINED_METRIC = 11,
  FUSEMB_ERR_INVALID_INPUT = 12,
  FUSEMB_ERR_STATE = 13,
  FUSEMB_ERR_IO = 14,
  FUSEMB_ERR_INTERNAL = 99
} fusemb_status;

FUSEMB_API const char* fusemb_last_error(void);
FUSEMB_API const char* fusemb_status_name(fusemb_status status);
FUSEMB_API const char* fusemb_version(void);

/* ---- text results --------------------------------------------------- */

typedef struct fusemb_text fusemb_text;

FUSEMB_API const char* fusemb_text_data(const fusemb_text* text);
FUSEMB_API size_t fusemb_text_size(const fusemb_text* text);
FUSEMB_API void fusemb_text_destroy(fusemb_text* text);

/* ---- pipeline configuration ----------------------------------------- */

typedef struct fusemb_config fusemb_config;

FUSEMB_API fusemb_status fusemb_config_create(fusemb_config** out);
FUSEMB_API void fusemb_config_destroy(fusemb_config* config);
/* Reads `key = value` lines. */
FUSEMB_API fusemb_status fusemb_config_load_file(fusemb_config* config, const char* path);
FUSEMB_API fusemb_status fusemb_config_set(fusemb_config* config, const char* key,
                                           const char* value);
/* Canonical key=value listing of the effective settings. */
FUSEMB_API fusemb_status fusemb_config_describe(const fusemb_config* config, fusemb_text** out);

/* ---- pipeline commands ----------------------------------------------
 * Each writes its artifacts beside the configured store and hands back the
 * text meant for stdout in *out (also on failure when output exists; callers
 * must destroy a non-null *out). *out is null after a hard failure. */

typedef struct fusemb_synth_params {
  size_t blobs;
  size_t per_blob;
  size_t dim;
  double radius;
  double separation;
  uint64_t seed;
  size_t max_images;
} fusemb_synth_params;

FUSEMB_API void fusemb_synth_params_default(fusemb_synth_params* params);
FUSEMB_API fusemb_status fusemb_cmd_synth(const fusemb_synth_params* params, const char* out_path,
                                          fusemb_text** out);
FUSEMB_API fusemb_status fusemb_cmd_fuse(const fusemb_config* config, const char* input_path,
                                         fusemb_text** out);
FUSEMB_API fusemb_status fusemb_cmd_sweep(const fusemb_config* config, fusemb_text** out);
FUSEMB_API fusemb_status fusemb_cmd_cluster(const fusemb_config* config, fusemb_text** out);
FUSEMB_API fusemb_status fusemb_cmd_report(const fusemb_config* config, fusemb_text** out);

/* Exactly one of vector_file / stored_id is non-null. k == 0 uses the
 * configured neighbor count. reduced != 0 queries in the PCA space saved by
 * the cluster command. */
FUSEMB_API fusemb_status fusemb_cmd_query(const fusemb_config* config, const char* vector_file,
                                          const char* stored_id, size_t k, int reduced,
                                          fusemb_text** out);
/* ids may be null (n_ids == 0) for all rows; out_path null returns lines in *out. */
FUSEMB_API fusemb_status fusemb_cmd_dump(const fusemb_config* config, const char* const* ids,
                                         size_t n_ids, const char* out_path, fusemb_text** out);

/* ---- vector store --------------------------------------------------- */

typedef struct fusemb_store fusemb_store;

typedef struct fusemb_neighbor {
  size_t row;      /* row index in the store; id via fusemb_store_id */
  double distance; /* Euclidean */
  size_t rank;     /* 1-based */
} fusemb_neighbor;

FUSEMB_API fusemb_status fusemb_store_create(uint32_t dim, fusemb_store** out);
FUSEMB_API fusemb_status fusemb_store_open(const char* path, fusemb_store** out);
FUSEMB_API void fusemb_store_destroy(fusemb_store* store);
FUSEMB_API fusemb_status fusemb_store_save(const fusemb_store* store, const char* path);
FUSEMB_API uint32_t fusemb_store_dim(const fusemb_store* store);
FUSEMB_API size_t fusemb_store_count(const fusemb_store* store);
/* Valid until the store is modified or destroyed; null when out of range. */
FUSEMB_API const char* fusemb_store_id(const fusemb_store* store, size_t row);
FUSEMB_API fusemb_status fusemb_store_row(const fusemb_store* store, size_t row, float* out,
                                          size_t dim);
FUSEMB_API fusemb_status fusemb_store_append(fusemb_store* store, const char* post_id,
                                             const double* values, size_t dim);
FUSEMB_API fusemb_status fusemb_store_ingest_file(fusemb_store* store, const char* path,
                                                  size_t* added);
/* Writes min(k, count) entries to out (capacity cap) and their number to *n_out. */
FUSEMB_API fusemb_status fusemb_store_knn(const fusemb_store* store, const double* query,
                                          size_t dim, size_t k, fusemb_neighbor* out, size_t cap,
                                          size_t* n_out);

/* ---- numerics ------------------------------------------------------- */

/* 0.5 * (mean of n_images row-major image vectors + text). In permissive
 * mode (permissive != 0) a null text or n_images == 0 passes the other
 * modality through unscaled. */
FUSEMB_API fusemb_status fusemb_fuse(const double* text, const double* images, size_t n_images,
                                     size_t dim, int permissive, double* out);

/* rows is n x d row-major; labels holds n non-negative cluster ids. */
FUSEMB_API fusemb_status fusemb_silhouette(const double* rows, size_t n, size_t d,
                                           const int32_t* labels, double* out);
FUSEMB_API fusemb_status fusemb_calinski_harabasz(const double* rows, size_t n, size_t d,
                                                  const int32_t* labels, double* out);
FUSEMB_API fusemb_status fusemb_davies_bouldin(const double* rows, size_t n, size_t d,
                                               const int32_t* labels, double* out);

typedef struct fusemb_dim_scores {
  size_t dim;
  size_t k;
  double silhouette;
  double calinski_harabasz;
  double davies_bouldin;
} fusemb_dim_scores;

FUSEMB_API fusemb_status fusemb_select_dimension(const fusemb_dim_scores* scores, size_t n,
                                                 size_t* chosen_dim);

/* labels_out holds n entries; inertia_out may be null. */
FUSEMB_API fusemb_status fusemb_kmeans(const double* rows, size_t n, size_t d, size_t k,
                                       uint64_t seed, int32_t* labels_out, double* inertia_out);

/* queries and keys are n x d row-major, paired by row. */
FUSEMB_API fusemb_status fusemb_info_nce(const double* queries, const double* keys, size_t n,
                                         size_t d, double temperature, double* out);

#ifdef __cplusplus
}
#endif

#endif /* FUSEMB_H */
