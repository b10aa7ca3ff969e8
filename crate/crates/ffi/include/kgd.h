#ifndef KGD_H
#define KGD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum KgdStatus {
  KGD_STATUS_OK = 0,
  KGD_STATUS_NULL_POINTER = 1,
  KGD_STATUS_INVALID_UTF8 = 2,
  KGD_STATUS_IO = 3,
  KGD_STATUS_PARSE = 4,
  KGD_STATUS_INVALID_ARGUMENT = 5,
  KGD_STATUS_SHAPE = 6,
  KGD_STATUS_TRAINING_FAILED = 7,
  KGD_STATUS_VOCABULARY_MISMATCH = 8,
  KGD_STATUS_CHECKPOINT = 9,
  KGD_STATUS_INTERNAL = 10,
} KgdStatus;

/*
 A loaded knowledge graph.
 */
typedef struct KgdGraph KgdGraph;

/*
 Planted-noise labels from [`kgd_graph_inject_noise`].
 */
typedef struct KgdLabels KgdLabels;

/*
 A trained model.
 */
typedef struct KgdModel KgdModel;

/*
 A noise report from [`kgd_detect`].
 */
typedef struct KgdReport KgdReport;

/*
 Training settings; fill with [`kgd_train_options_default`] first.
 */
typedef struct KgdTrainOptions {
  size_t epochs;
  size_t batch_size;
  size_t negatives;
  size_t layers;
  size_t hidden_dim;
  size_t num_blocks;
  uint64_t seed;
  double gamma;
  double temperature;
  double learning_rate;
  double dropout;
  /*
   0 = standard, 1 = additive noise.
   */
  uint32_t gumbel_variant;
} KgdTrainOptions;

/*
 One forward triple's verdict. `reverse_score` is NaN when the graph has no reverse edge.
 */
typedef struct KgdVerdict {
  size_t head;
  size_t relation;
  size_t tail;
  double score;
  double reverse_score;
  double mask;
  bool is_noise;
} KgdVerdict;

typedef struct KgdEvaluation {
  size_t true_positives;
  size_t false_positives;
  size_t true_negatives;
  size_t false_negatives;
  double precision;
  double recall;
  double true_negative_rate;
} KgdEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *kgd_version(void);

/*
 Message of the last failed call on this thread; empty after a success.
 Valid until the next call on this thread.
 */
const char *kgd_last_error(void);

/*
 # Safety
 Paths must be NUL-terminated strings; `out` must be writable.
 */
enum KgdStatus kgd_graph_load(const char *triples_path,
                              const char *types_path,
                              struct KgdGraph **out);

/*
 Synthetic graph whose triples follow `patterns_per_relation` random type pairs per relation.

 # Safety
 `out` must be writable.
 */
enum KgdStatus kgd_graph_synthetic(size_t num_types,
                                   size_t num_relations,
                                   size_t num_entities,
                                   size_t patterns_per_relation,
                                   size_t num_triples,
                                   uint64_t seed,
                                   struct KgdGraph **out);

/*
 # Safety
 `graph` must be a live handle; outputs must be writable.
 */
enum KgdStatus kgd_graph_inject_noise(const struct KgdGraph *graph,
                                      double rate,
                                      uint64_t seed,
                                      struct KgdGraph **out_graph,
                                      struct KgdLabels **out_labels);

/*
 Copy of `graph` with reverse relations added.

 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum KgdStatus kgd_graph_augment(const struct KgdGraph *graph, struct KgdGraph **out);

/*
 Fraction of possible type signatures that occur, in `[0, 1]`.

 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum KgdStatus kgd_graph_ltt(const struct KgdGraph *graph, double *out);

/*
 # Safety
 `graph` must be null or a live handle.
 */
size_t kgd_graph_num_entities(const struct KgdGraph *graph);

/*
 # Safety
 `graph` must be null or a live handle.
 */
size_t kgd_graph_num_relations(const struct KgdGraph *graph);

/*
 # Safety
 `graph` must be null or a live handle.
 */
size_t kgd_graph_num_types(const struct KgdGraph *graph);

/*
 # Safety
 `graph` must be null or a live handle.
 */
size_t kgd_graph_num_triples(const struct KgdGraph *graph);

/*
 # Safety
 `graph` must be null or a handle not yet freed.
 */
void kgd_graph_free(struct KgdGraph *graph);

/*
 # Safety
 `labels` must be null or a live handle.
 */
size_t kgd_labels_len(const struct KgdLabels *labels);

/*
 # Safety
 `labels` must be null or a handle not yet freed.
 */
void kgd_labels_free(struct KgdLabels *labels);

/*
 # Safety
 `out` must be writable.
 */
enum KgdStatus kgd_train_options_default(struct KgdTrainOptions *out);

/*
 Trains on an augmented graph (see [`kgd_graph_augment`]).

 # Safety
 `graph` and `options` must be valid; `out` must be writable.
 */
enum KgdStatus kgd_train(const struct KgdGraph *graph,
                         const struct KgdTrainOptions *options,
                         struct KgdModel **out);

/*
 # Safety
 `model` must be a live handle; `path` a NUL-terminated string.
 */
enum KgdStatus kgd_model_save(const struct KgdModel *model, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgdStatus kgd_model_load(const char *path, struct KgdModel **out);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void kgd_model_free(struct KgdModel *model);

/*
 `convention`: 0 = low score is noise, 1 = high score is noise.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum KgdStatus kgd_detect(const struct KgdGraph *graph,
                          const struct KgdModel *model,
                          double threshold,
                          uint32_t convention,
                          struct KgdReport **out);

/*
 Number of flagged forward triples.

 # Safety
 `report` must be null or a live handle.
 */
size_t kgd_report_flagged(const struct KgdReport *report);

/*
 Number of forward triples in the report.

 # Safety
 `report` must be null or a live handle.
 */
size_t kgd_report_len(const struct KgdReport *report);

/*
 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum KgdStatus kgd_report_entry(const struct KgdReport *report,
                                size_t index,
                                struct KgdVerdict *out);

/*
 Serializes the report; release the string with [`kgd_string_free`].

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum KgdStatus kgd_report_to_json(const struct KgdReport *report, char **out);

/*
 # Safety
 `report` must be null or a handle not yet freed.
 */
void kgd_report_free(struct KgdReport *report);

/*
 # Safety
 Handles must be live; `out` must be writable. Label ids refer to the
 graph the labels were created from, which shares ids with its augmentation.
 */
enum KgdStatus kgd_evaluate(const struct KgdReport *report,
                            const struct KgdLabels *labels,
                            struct KgdEvaluation *out);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void kgd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGD_H */
