#ifndef HNSWLAB_H
#define HNSWLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HnswlabMetric {
  HNSWLAB_METRIC_L2 = 0,
  HNSWLAB_METRIC_COSINE = 1,
  HNSWLAB_METRIC_INNER_PRODUCT = 2,
} HnswlabMetric;

typedef enum HnswlabSelect {
  HNSWLAB_SELECT_HEURISTIC = 0,
  HNSWLAB_SELECT_SIMPLE = 1,
} HnswlabSelect;

typedef enum HnswlabOrder {
  HNSWLAB_ORDER_IDENTITY = 0,
  HNSWLAB_ORDER_RANDOM = 1,
  HNSWLAB_ORDER_LID_ASC = 2,
  HNSWLAB_ORDER_LID_DESC = 3,
} HnswlabOrder;

typedef enum HnswlabStatus {
  HNSWLAB_STATUS_OK = 0,
  HNSWLAB_STATUS_INVALID_ARGUMENT = 1,
  HNSWLAB_STATUS_NULL_POINTER = 2,
  HNSWLAB_STATUS_DATA_ERROR = 3,
  HNSWLAB_STATUS_IO = 4,
  HNSWLAB_STATUS_FORMAT = 5,
  HNSWLAB_STATUS_INVARIANT = 6,
  HNSWLAB_STATUS_BUFFER_TOO_SMALL = 7,
  HNSWLAB_STATUS_PANIC = 8,
} HnswlabStatus;

/**
 * Opaque vector collection.
 */
typedef struct HnswlabDataset HnswlabDataset;

/**
 * Opaque HNSW index.
 */
typedef struct HnswlabIndex HnswlabIndex;

/**
 * Build parameters; start from `hnswlab_params_default`.
 */
typedef struct HnswlabParams {
  size_t m;
  /**
   * Layer-0 cap; 0 means 2·m.
   */
  size_t m0;
  size_t ef_construction;
  uint64_t seed;
  enum HnswlabMetric metric;
  enum HnswlabSelect select;
  enum HnswlabOrder order;
  /**
   * Seed of the random order.
   */
  uint64_t order_seed;
  /**
   * Neighbours per LID estimate for LID orders.
   */
  size_t lid_neighbours;
} HnswlabParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library on this thread.
 */
const char *hnswlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hnswlab_version(void);

struct HnswlabParams hnswlab_params_default(void);

/**
 * Copies `n × dim` row-major floats into a new dataset.
 */
enum HnswlabStatus hnswlab_dataset_from_f32(const float *data,
                                            size_t n,
                                            size_t dim,
                                            struct HnswlabDataset **out);

enum HnswlabStatus hnswlab_dataset_read_fvecs(const char *path, struct HnswlabDataset **out);

enum HnswlabStatus hnswlab_dataset_write_fvecs(const struct HnswlabDataset *ds, const char *path);

/**
 * Number of vectors; 0 for a null handle.
 */
size_t hnswlab_dataset_len(const struct HnswlabDataset *ds);

/**
 * Vector dimension; 0 for a null handle.
 */
size_t hnswlab_dataset_dim(const struct HnswlabDataset *ds);

void hnswlab_dataset_free(struct HnswlabDataset *ds);

/**
 * PCA intrinsic dimensionality at variance threshold `theta`.
 */
enum HnswlabStatus hnswlab_pca_intrinsic_dim(const struct HnswlabDataset *ds,
                                             double theta,
                                             size_t *out_k);

/**
 * Writes one LID estimate per vector into `out_lid` (length
 * `hnswlab_dataset_len`). Saturated points get `+INFINITY`.
 */
enum HnswlabStatus hnswlab_lid_profile(const struct HnswlabDataset *ds,
                                       size_t k_neighbours,
                                       enum HnswlabMetric metric,
                                       double *out_lid,
                                       size_t out_len);

/**
 * Builds an index over every vector of `ds` in the order `params` names.
 */
enum HnswlabStatus hnswlab_index_build(const struct HnswlabDataset *ds,
                                       const struct HnswlabParams *params,
                                       struct HnswlabIndex **out);

/**
 * Top-`k` search with beam width `ef`. Fills `out_ids`/`out_dists`
 * (capacity `k`) and sets `*out_len` to the number of results.
 */
enum HnswlabStatus hnswlab_index_search(const struct HnswlabIndex *index,
                                        const float *query,
                                        size_t dim,
                                        size_t k,
                                        size_t ef,
                                        uint64_t *out_ids,
                                        double *out_dists,
                                        size_t *out_len);

size_t hnswlab_index_len(const struct HnswlabIndex *index);

/**
 * Connected components of the undirected layer-0 graph.
 */
enum HnswlabStatus hnswlab_index_components(const struct HnswlabIndex *index, size_t *out);

/**
 * Saves the graph; vectors are referenced through the dataset's hash.
 */
enum HnswlabStatus hnswlab_index_save(const struct HnswlabIndex *index,
                                      const struct HnswlabDataset *ds,
                                      const char *path);

/**
 * Loads an index saved against `ds` (the dataset hash must match).
 */
enum HnswlabStatus hnswlab_index_load(const char *path,
                                      const struct HnswlabDataset *ds,
                                      struct HnswlabIndex **out);

void hnswlab_index_free(struct HnswlabIndex *index);

/**
 * Set recall of the first `k` entries of `approx` against `exact`.
 */
enum HnswlabStatus hnswlab_recall_at_k(const uint64_t *approx,
                                       size_t approx_len,
                                       const uint64_t *exact,
                                       size_t exact_len,
                                       size_t k,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HNSWLAB_H */
