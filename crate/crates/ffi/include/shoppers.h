#ifndef SHOPPERS_H
#define SHOPPERS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ShoppersStatus {
  SHOPPERS_STATUS_OK = 0,
  SHOPPERS_STATUS_NULL_ARGUMENT = 1,
  SHOPPERS_STATUS_INVALID_UTF8 = 2,
  SHOPPERS_STATUS_INVALID_INPUT = 3,
  SHOPPERS_STATUS_IO = 4,
  SHOPPERS_STATUS_PARSE = 5,
  SHOPPERS_STATUS_MISSING_ARTIFACT = 6,
  SHOPPERS_STATUS_NUMERICAL = 7,
  SHOPPERS_STATUS_PANIC = 8,
} ShoppersStatus;

/**
 * Pipeline configuration handle.
 */
typedef struct ShoppersConfig ShoppersConfig;

/**
 * Exported graph loaded from a JSONL directory.
 */
typedef struct ShoppersGraph ShoppersGraph;

/**
 * Result list of a similarity query.
 */
typedef struct ShoppersHits ShoppersHits;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call on the same thread.
 */
const char *shoppers_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *shoppers_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void shoppers_string_free(char *s);

/**
 * New configuration with default settings.
 */
struct ShoppersConfig *shoppers_config_new(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ShoppersStatus shoppers_config_from_toml(const char *toml, struct ShoppersConfig **out);

/**
 * Loads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ShoppersStatus shoppers_config_load(const char *path, struct ShoppersConfig **out);

/**
 * Releases a configuration. NULL is ignored.
 *
 * # Safety
 * `config` must come from this library and not have been freed.
 */
void shoppers_config_free(struct ShoppersConfig *config);

/**
 * Sets the invoice CSV path.
 *
 * # Safety
 * `config` must be a live handle and `path` a NUL-terminated string.
 */
enum ShoppersStatus shoppers_config_set_input(struct ShoppersConfig *config, const char *path);

/**
 * Sets the run directory.
 *
 * # Safety
 * `config` must be a live handle and `path` a NUL-terminated string.
 */
enum ShoppersStatus shoppers_config_set_output_dir(struct ShoppersConfig *config, const char *path);

/**
 * Sets the seed of every randomized stage.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum ShoppersStatus shoppers_config_set_seed(struct ShoppersConfig *config, uint64_t seed);

/**
 * Canonical TOML form of the configuration; free with `shoppers_string_free`.
 *
 * # Safety
 * `config` must be a live handle and `out` a writable pointer.
 */
enum ShoppersStatus shoppers_config_to_toml(const struct ShoppersConfig *config, char **out);

/**
 * Runs one stage by its kebab-case name (e.g. `select-features`).
 *
 * # Safety
 * `config` must be a live handle and `stage` a NUL-terminated string.
 */
enum ShoppersStatus shoppers_run_stage(const struct ShoppersConfig *config, const char *stage);

/**
 * Runs every stage in order.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum ShoppersStatus shoppers_run_all(const struct ShoppersConfig *config);

/**
 * Writes plot data of one kind under `output_dir` and returns its path;
 * free the path with `shoppers_string_free`.
 *
 * # Safety
 * `output_dir` and `kind` must be NUL-terminated strings and `out_path` a
 * writable pointer.
 */
enum ShoppersStatus shoppers_emit_plot(const char *output_dir, const char *kind, char **out_path);

/**
 * Opens an exported graph directory (`nodes.jsonl` and `edges.jsonl`).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ShoppersStatus shoppers_graph_open(const char *dir, struct ShoppersGraph **out);

/**
 * Number of nodes in the graph; 0 for NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t shoppers_graph_node_count(const struct ShoppersGraph *graph);

/**
 * Releases a graph. NULL is ignored.
 *
 * # Safety
 * `graph` must come from this library and not have been freed.
 */
void shoppers_graph_free(struct ShoppersGraph *graph);

/**
 * The `top` nodes of the same kind most similar to `node` (a key or a
 * unique id), best first.
 *
 * # Safety
 * `graph` must be a live handle, `node` a NUL-terminated string and `out`
 * a writable pointer.
 */
enum ShoppersStatus shoppers_graph_query_similar(const struct ShoppersGraph *graph,
                                                 const char *node,
                                                 size_t top,
                                                 struct ShoppersHits **out);

/**
 * Number of hits; 0 for NULL.
 *
 * # Safety
 * `hits` must be NULL or a live handle.
 */
size_t shoppers_hits_len(const struct ShoppersHits *hits);

/**
 * Node key of hit `i`, or NULL when out of range. Owned by `hits`.
 *
 * # Safety
 * `hits` must be NULL or a live handle.
 */
const char *shoppers_hits_key(const struct ShoppersHits *hits, size_t i);

/**
 * Node id of hit `i`, or NULL when out of range. Owned by `hits`.
 *
 * # Safety
 * `hits` must be NULL or a live handle.
 */
const char *shoppers_hits_id(const struct ShoppersHits *hits, size_t i);

/**
 * Cosine similarity of hit `i`, or NaN when out of range.
 *
 * # Safety
 * `hits` must be NULL or a live handle.
 */
double shoppers_hits_similarity(const struct ShoppersHits *hits, size_t i);

/**
 * Releases a hit list. NULL is ignored.
 *
 * # Safety
 * `hits` must come from this library and not have been freed.
 */
void shoppers_hits_free(struct ShoppersHits *hits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHOPPERS_H */
