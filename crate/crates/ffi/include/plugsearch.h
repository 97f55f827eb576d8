#ifndef PLUGSEARCH_H
#define PLUGSEARCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_ARGUMENT = 1,
  PS_STATUS_INVALID_UTF8 = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_INVALID_INPUT = 4,
  PS_STATUS_INTEGRITY = 5,
  PS_STATUS_EMPTY_QUERY = 6,
  PS_STATUS_PAGE_OUT_OF_RANGE = 7,
  PS_STATUS_NOT_FOUND = 8,
  PS_STATUS_CORRUPTION = 9,
  PS_STATUS_REGISTRY = 10,
  PS_STATUS_OUT_OF_BOUNDS = 11,
  PS_STATUS_PANIC = 99,
} PsStatus;

/**
 * An open index plus its lazily opened document store.
 */
typedef struct PsIndex PsIndex;

/**
 * Ranked hits of one query.
 */
typedef struct PsResults PsResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Every function
 * returning a status clears it first; the pointer is valid until then.
 */
const char *ps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Release a string returned by this library. NULL is ignored.
 */
void ps_string_free(char *s);

/**
 * Load a JSON-lines file and split it into shards under `out_dir`.
 * `id_field` may be NULL.
 */
enum PsStatus ps_shard_jsonl(const char *source,
                             const char *text_field,
                             const char *id_field,
                             const char *shard_size,
                             const char *out_dir);

/**
 * Build an index with the default analyzer. `threads` must be positive.
 */
enum PsStatus ps_build_index(const char *shards_dir, const char *index_dir, size_t threads);

enum PsStatus ps_index_open(const char *index_dir, struct PsIndex **out);

void ps_index_free(struct PsIndex *index);

/**
 * Number of documents, or 0 for NULL.
 */
uint64_t ps_index_num_docs(const struct PsIndex *index);

/**
 * Rank the top `k` documents for `query` with default BM25 parameters.
 */
enum PsStatus ps_search(const struct PsIndex *index,
                        const char *query,
                        size_t k,
                        struct PsResults **out);

void ps_results_free(struct PsResults *results);

/**
 * Number of hits, or 0 for NULL.
 */
size_t ps_results_len(const struct PsResults *results);

/**
 * External id and score of hit `rank` (0-based). The id pointer stays valid
 * until the results are freed.
 */
enum PsStatus ps_results_get(const struct PsResults *results,
                             size_t rank,
                             const char **id,
                             double *score);

/**
 * One page of `results` as JSON (negative pages count from the end). The
 * document store is located from the index's recorded shard directory.
 */
enum PsStatus ps_result_page_json(const struct PsIndex *index,
                                  const struct PsResults *results,
                                  int64_t page,
                                  size_t per_page,
                                  char **out);

/**
 * Write a reproducible archive of `index_dir` to `out_path`. When the index
 * exceeds `quota_bytes` the call still succeeds and `*over_quota` is set.
 */
enum PsStatus ps_pack_index(const char *index_dir,
                            const char *out_path,
                            const char *slug,
                            uint64_t quota_bytes,
                            bool *over_quota);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLUGSEARCH_H */
