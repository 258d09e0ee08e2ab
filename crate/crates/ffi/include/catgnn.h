#ifndef CATGNN_H
#define CATGNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CatgnnStatus {
  CATGNN_STATUS_OK = 0,
  CATGNN_STATUS_NULL_POINTER = 1,
  CATGNN_STATUS_INVALID_INPUT = 2,
  CATGNN_STATUS_IO = 3,
  CATGNN_STATUS_PARSE = 4,
  CATGNN_STATUS_INDEX = 5,
  CATGNN_STATUS_NUMERICS = 6,
  CATGNN_STATUS_UNDEFINED_METRIC = 7,
  CATGNN_STATUS_INTERNAL = 8,
} CatgnnStatus;

/**
 * A graph together with the split used for training and the labels a model
 * is allowed to see (those of the training nodes).
 */
typedef struct CatgnnGraph CatgnnGraph;

typedef struct CatgnnModel CatgnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer is
 * valid until the next failing call on this thread.
 */
const char *catgnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *catgnn_version(void);

/**
 * Generates a synthetic graph. `config_json` is a synthetic-generator config
 * object and may be null for the defaults.
 *
 * # Safety
 * `config_json` must be null or a valid C string, and `out` a valid pointer.
 */
enum CatgnnStatus catgnn_graph_generate(const char *config_json,
                                        uint64_t seed,
                                        struct CatgnnGraph **out);

/**
 * Loads a graph from a feature CSV, a label CSV and one edge CSV per
 * relation, then splits it 40/20/40 with `split_seed`.
 *
 * # Safety
 * The path arguments must be valid C strings, `edge_paths` must point to
 * `num_relations` of them, and `out` must be a valid pointer.
 */
enum CatgnnStatus catgnn_graph_load(const char *features_path,
                                    const char *labels_path,
                                    const char *const *edge_paths,
                                    size_t num_relations,
                                    uint64_t split_seed,
                                    struct CatgnnGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from this library that has not been freed.
 */
void catgnn_graph_free(struct CatgnnGraph *graph);

/**
 * Writes the node, relation and edge counts; any output pointer may be null.
 *
 * # Safety
 * `graph` must be a live handle; non-null outputs must be valid pointers.
 */
enum CatgnnStatus catgnn_graph_shape(const struct CatgnnGraph *graph,
                                     size_t *num_nodes,
                                     size_t *num_relations,
                                     size_t *num_edges);

/**
 * Copies the test-node ids into `nodes` (capacity `capacity`) and their
 * count into `len`. Pass a null `nodes` to query the count alone.
 *
 * # Safety
 * `graph` must be a live handle, `len` a valid pointer, and `nodes` null or
 * valid for `capacity` writes.
 */
enum CatgnnStatus catgnn_graph_test_nodes(const struct CatgnnGraph *graph,
                                          size_t *nodes,
                                          size_t capacity,
                                          size_t *len);

/**
 * Trains on the graph's split. Either config may be null for the defaults.
 * If `test_auc` is non-null it receives the test AUC, or NaN when undefined.
 *
 * # Safety
 * `graph` must be a live handle, the configs null or valid C strings, `out`
 * a valid pointer and `test_auc` null or valid.
 */
enum CatgnnStatus catgnn_train(const struct CatgnnGraph *graph,
                               const char *model_json,
                               const char *train_json,
                               struct CatgnnModel **out,
                               double *test_auc);

/**
 * Fraud probabilities for `num_nodes` node ids, written to `scores`.
 *
 * # Safety
 * `model` and `graph` must be live handles; `nodes` and `scores` must be
 * valid for `num_nodes` elements.
 */
enum CatgnnStatus catgnn_predict(const struct CatgnnModel *model,
                                 const struct CatgnnGraph *graph,
                                 const size_t *nodes,
                                 size_t num_nodes,
                                 double *scores);

/**
 * # Safety
 * `model` must be a live handle and `path` a valid C string.
 */
enum CatgnnStatus catgnn_model_save(const struct CatgnnModel *model, const char *path);

/**
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum CatgnnStatus catgnn_model_load(const char *path, struct CatgnnModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library that has not been freed.
 */
void catgnn_model_free(struct CatgnnModel *model);

/**
 * ROC-AUC of `scores` against 0/1 `labels` (nonzero means fraud).
 *
 * # Safety
 * `scores` and `labels` must be valid for `n` elements, `out` a valid pointer.
 */
enum CatgnnStatus catgnn_roc_auc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATGNN_H */
