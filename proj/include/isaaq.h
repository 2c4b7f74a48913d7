/*
 * Copyright 2026 The isaaq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C API of the isaaq pipeline library. Every function returns ISAAQ_OK on
 * success or a nonzero status; isaaq_last_error() then holds a JSON payload
 * {"error":{"code":"...","message":"..."}} for the calling thread.
 *
 * The pipeline handle is opaque and owns the loaded dataset plus derived
 * caches under the workspace directory (ISAAQ_CACHE_DIR overrides the cache
 * location). Handles are not thread-safe; use one per thread.
 */

#ifndef ISAAQ_H
#define ISAAQ_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define ISAAQ_OK 0
#define ISAAQ_ERR_IO 1
#define ISAAQ_ERR_VALIDATION 2
#define ISAAQ_ERR_NOT_FOUND 3
#define ISAAQ_ERR_CONFIG 4
#define ISAAQ_ERR_STATE 5
#define ISAAQ_ERR_INTERNAL 6

typedef int isaaq_status;
typedef struct isaaq_pipeline isaaq_pipeline;

const char* isaaq_version(void);

/* JSON error payload of the last failing call on this thread ("" if none). */
const char* isaaq_last_error(void);

/* Converts a raw TQA release (file or directory) into the normalized dataset
 * layout at out_root. subject_map_json may be NULL. */
isaaq_status isaaq_convert(const char* raw_path, const char* out_root,
                           const char* default_subject, const char* subject_map_json);

/* Loads and validates the dataset at dataset_root. cache_dir may be NULL to
 * use ISAAQ_CACHE_DIR or <dataset_root>/cache. */
isaaq_pipeline* isaaq_open(const char* dataset_root, const char* cache_dir);
void isaaq_close(isaaq_pipeline* p);

/* Dataset counts, for quick sanity checks. Any out-pointer may be NULL. */
isaaq_status isaaq_counts(isaaq_pipeline* p, int* lessons, int* sentences, int* questions);

/* Fills the passage cache. retriever: "ir" | "nsp" | "nn". split: "train" |
 * "validation" | "test". n is the per-passage sentence budget (10 when <= 0). */
isaaq_status isaaq_retrieve(isaaq_pipeline* p, const char* retriever, const char* split,
                            int n);

/* Featurizes all diagrams. source: "annotations" | "trivial". */
isaaq_status isaaq_features(isaaq_pipeline* p, const char* source);

/* Trains one solver. config_path points at a JSON train config; task and
 * retriever, when non-NULL, override the config. Writes the best-epoch
 * checkpoint under checkpoint_out. */
isaaq_status isaaq_train(isaaq_pipeline* p, const char* config_path, const char* task,
                         const char* retriever, const char* checkpoint_out);

/* Scores a split with each checkpoint, writes per-solver scores JSONL files
 * next to out_prefix, and a report (JSON + CSV). kind may be NULL or one of
 * "true_false" | "text_mc" | "diagram_mc" to override the question kind the
 * solvers are applied to. ensemble_model may be NULL. */
isaaq_status isaaq_evaluate(isaaq_pipeline* p, const char* split,
                            const char* const* checkpoints, size_t n_checkpoints,
                            const char* kind, const char* ensemble_model,
                            int with_ir_baseline, const char* out_prefix);

/* Fits the two-step calibration from per-solver scores files over a split. */
isaaq_status isaaq_ensemble_fit(isaaq_pipeline* p, const char* split,
                                const char* const* scores_files, size_t n_files,
                                const char* model_out);

/* Applies a fitted ensemble to per-solver scores files. */
isaaq_status isaaq_ensemble_predict(isaaq_pipeline* p, const char* model_path,
                                    const char* const* scores_files, size_t n_files,
                                    const char* out_jsonl);

/* Runs the diagram-solver ablation plan (comma list or "all") with the given
 * train config; writes the report as JSON + CSV at report_prefix. */
isaaq_status isaaq_ablate(isaaq_pipeline* p, const char* plan, const char* config_path,
                          const char* report_prefix);

/* Exports attention weights (and optional heatmap PNGs) for one diagram
 * question using a diagram-solver checkpoint. */
isaaq_status isaaq_export_attention(isaaq_pipeline* p, const char* question_id,
                                    const char* checkpoint_dir, const char* out_prefix,
                                    int render_heatmaps);

#ifdef __cplusplus
}
#endif

#endif /* ISAAQ_H */
