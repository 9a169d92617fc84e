#ifndef GFEE_H
#define GFEE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GfeeStatus {
  GFEE_STATUS_OK = 0,
  GFEE_STATUS_NULL_POINTER = 1,
  GFEE_STATUS_INVALID_ARGUMENT = 2,
  GFEE_STATUS_VALIDATION = 3,
  GFEE_STATUS_IO = 4,
  GFEE_STATUS_RUNTIME = 5,
  GFEE_STATUS_PANIC = 6,
} GfeeStatus;

/**
 * Graphs sharing one vertex set of size `n`.
 */
typedef struct GfeeCollection GfeeCollection;

/**
 * Row-major `n x (M K)` embedding.
 */
typedef struct GfeeEmbedding GfeeEmbedding;

typedef struct GfeeLabels GfeeLabels;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *gfee_last_error(void);

/**
 * Library version as a static string.
 */
const char *gfee_version(void);

/**
 * New empty collection over `n` vertices.
 */
struct GfeeCollection *gfee_collection_new(size_t n);

/**
 * # Safety
 * `collection` must come from [`gfee_collection_new`] and not be used again.
 */
void gfee_collection_free(struct GfeeCollection *collection);

/**
 * Appends a graph given as `len` edges `(u[i], v[i])` with 1-based
 * endpoints. `w` may be null for unit weights.
 *
 * # Safety
 * `u` and `v` (and `w` when non-null) must point to `len` readable values.
 */
enum GfeeStatus gfee_collection_add_graph(struct GfeeCollection *collection,
                                          const uint32_t *u,
                                          const uint32_t *v,
                                          const double *w,
                                          size_t len,
                                          bool directed);

/**
 * # Safety
 * `collection` must be null or a live handle.
 */
size_t gfee_collection_len(const struct GfeeCollection *collection);

/**
 * Labels for `n` vertices, `K` inferred as the largest label.
 *
 * # Safety
 * `labels` must point to `n` readable values.
 */
struct GfeeLabels *gfee_labels_new(const uint32_t *labels, size_t n);

/**
 * # Safety
 * `labels` must come from [`gfee_labels_new`] and not be used again.
 */
void gfee_labels_free(struct GfeeLabels *labels);

/**
 * Fuses every graph of the collection. On success `*out` owns a new
 * embedding.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum GfeeStatus gfee_fuse(const struct GfeeCollection *collection,
                          const struct GfeeLabels *labels,
                          struct GfeeEmbedding **out);

/**
 * # Safety
 * `embedding` must be null or a live handle.
 */
size_t gfee_embedding_rows(const struct GfeeEmbedding *embedding);

/**
 * # Safety
 * `embedding` must be null or a live handle.
 */
size_t gfee_embedding_cols(const struct GfeeEmbedding *embedding);

/**
 * Copies the row-major entries into `out`, which holds `len` doubles;
 * `len` must be at least rows x cols.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum GfeeStatus gfee_embedding_copy(const struct GfeeEmbedding *embedding, double *out, size_t len);

/**
 * # Safety
 * `embedding` must come from [`gfee_fuse`] and not be used again.
 */
void gfee_embedding_free(struct GfeeEmbedding *embedding);

/**
 * Stratified cross-validated k-NN error, re-embedding with each test fold's
 * labels hidden. Writes the mean and sample standard deviation over
 * replicates.
 *
 * # Safety
 * Handles must be live; `mean` and `std` must be writable.
 */
enum GfeeStatus gfee_cross_validate(const struct GfeeCollection *collection,
                                    const struct GfeeLabels *labels,
                                    size_t folds,
                                    size_t replicates,
                                    size_t neighbors,
                                    uint64_t seed,
                                    double *mean,
                                    double *std);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFEE_H */
