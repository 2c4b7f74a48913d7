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

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isaaq/corpus.hpp"
#include "isaaq/ensemble.hpp"
#include "isaaq/retrieval.hpp"
#include "isaaq/solvers.hpp"

namespace isaaq {

// ---------------------------------------------------------------------------
// Configuration.

struct TrainConfig {
  SolverTask task = SolverTask::text_mc;
  Retriever retriever = Retriever::ir;
  double peak_lr = 1e-5;
  double warmup_fraction = 0.1;
  int epochs = 4;
  int batch_size = 8;
  double dropout = 0.1;
  int max_len = 180;
  unsigned long long seed = 42;
  int roi_cap = kMaxRois;
  bool paper_parity = false;  // enforces the released learning-rate range
  bool use_background_diagram = false;
  DiagramVariant variant = DiagramVariant::butd;
  std::string premise_mode = "passage";  // or per_sentence_max

  // toy encoder dims
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int max_positions = 256;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& file);

  EncoderSpec encoder_spec(int vocab_size) const;
};

// Linear warmup to peak over warmup_fraction of total steps, then linear
// decay to zero at total_steps. schedule(0) == 0 and schedule(total) == 0.
double lr_schedule(long step, long total_steps, double warmup_fraction, double peak_lr);

// ---------------------------------------------------------------------------
// Workspace layout: dataset root plus a cache directory for every derived
// artifact. ISAAQ_CACHE_DIR overrides the cache location.

struct Workspace {
  std::filesystem::path dataset_root;
  std::filesystem::path cache_dir;

  static Workspace open(const std::filesystem::path& dataset_root,
                        const std::optional<std::filesystem::path>& cache_override = {});

  std::filesystem::path passages_file(SplitName split, Retriever r) const;
  std::filesystem::path features_dir() const { return cache_dir / "features"; }
  std::filesystem::path checkpoints_dir() const { return cache_dir / "checkpoints"; }
  std::filesystem::path scores_dir() const { return cache_dir / "scores"; }
  std::filesystem::path reports_dir() const { return cache_dir / "reports"; }
  std::filesystem::path vocab_file() const { return cache_dir / "vocab.txt"; }
};

// Scope and budget the pipeline uses for each retriever.
RetrieverConfig default_retriever_config(Retriever r, int n = 10);

// Vocabulary over the whole corpus text: sentences, stems and options.
Vocab vocab_from_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Frozen encoder used by the transformer retrievers (scorer heads included).

struct FrozenEncoderBundle {
  EncoderSpec spec;
  ParamStore params;  // encoder tensors + nsp head
  Vocab vocab;
  int max_len = 64;

  // Deterministic bundle built from the corpus vocabulary. Used whenever no
  // trained checkpoint is supplied to retrieve.
  static FrozenEncoderBundle deterministic(const Corpus& corpus,
                                           unsigned long long seed = 17,
                                           int hidden = 32, int layers = 1,
                                           int heads = 4);
};

class EncoderNextSentenceScorer : public NextSentenceScorer {
 public:
  explicit EncoderNextSentenceScorer(FrozenEncoderBundle bundle)
      : bundle_(std::move(bundle)) {}
  double is_next_prob(const std::string& first, const std::string& second) const override;

 private:
  mutable FrozenEncoderBundle bundle_;
};

class EncoderPooledEmbedder : public PooledEmbedder {
 public:
  explicit EncoderPooledEmbedder(FrozenEncoderBundle bundle)
      : bundle_(std::move(bundle)) {}
  Eigen::VectorXd embed(const std::string& text) const override;

 private:
  mutable FrozenEncoderBundle bundle_;
};

// ---------------------------------------------------------------------------
// Pipeline steps (each one backs a CLI verb).

// Fills the passage cache for (split, retriever). The bundle feeds the
// transformer retrievers; pass nullopt to use the deterministic one.
void run_retrieval(const Corpus& corpus, const Workspace& ws, Retriever retriever,
                   SplitName split, int n = 10,
                   const std::optional<FrozenEncoderBundle>& bundle = {});

// Featurizes every diagram: global feature file, detected regions and
// per-region features, plus the manifest.
struct FeatureStats {
  int diagrams = 0;
  int rois = 0;
};
FeatureStats run_features(const Corpus& corpus, const Workspace& ws, RoiSource source);

RoISet load_cached_rois(const Workspace& ws, const std::string& diagram_id);
RoI load_cached_whole_diagram(const Workspace& ws, const std::string& diagram_id);

// Builds solver-ready examples for a split from the caches. Throws
// Error(state) directing to the missing pipeline step.
std::vector<AnyExample> assemble_examples(const Corpus& corpus, const Workspace& ws,
                                          const TrainConfig& config, SplitName split,
                                          std::optional<QuestionKind> kind_override = {});

std::unique_ptr<Solver> build_solver(const TrainConfig& config, const Vocab& vocab,
                                     const std::string& id_override = "");

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochLog> epochs;
  std::filesystem::path checkpoint_dir;
};

// Adam with the linear warmup/decay schedule; evaluates after every epoch and
// retains the best-epoch checkpoint (ties keep the earliest epoch).
TrainResult train(const TrainConfig& config, Solver& solver,
                  const std::vector<AnyExample>& train_examples,
                  const std::vector<AnyExample>& val_examples,
                  const std::filesystem::path& checkpoint_out);

double accuracy(Solver& solver, const std::vector<AnyExample>& examples);

struct FinetuneStage {
  std::vector<AnyExample> train;
  std::vector<AnyExample> val;
  TrainConfig config;
};

// Runs the stages sequentially, carrying parameters forward. Stage/solver
// task mismatches are rejected before any training starts.
std::vector<TrainResult> multi_stage_finetune(const std::vector<FinetuneStage>& stages,
                                              Solver& solver,
                                              const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Evaluation and reports.

struct EvalCell {
  int correct = 0;
  int total = 0;
  double pct() const { return total == 0 ? 0.0 : 100.0 * correct / total; }
};

struct EvalRow {
  std::string solver_id;
  EvalCell overall;
  std::map<std::string, EvalCell> by_kind;
  std::map<std::string, EvalCell> by_subject;
};

struct EvalReport {
  std::string split;
  std::vector<EvalRow> rows;

  std::string to_json() const;
  std::string to_csv() const;
};

// predictions: solver_id -> question_id -> predicted option. Rows appear in
// map order; each row aggregates only the questions that solver scored.
EvalReport evaluate_predictions(const Corpus& corpus,
                                const std::vector<const Question*>& questions,
                                const std::map<std::string, std::map<std::string, int>>& predictions,
                                const std::string& split_label_text);

// Scores a split with one solver (kind defaults to the solver's own task).
std::vector<SolverScores> solve_split(const Corpus& corpus, const Workspace& ws,
                                      Solver& solver, SplitName split,
                                      std::optional<QuestionKind> kind_override = {});

// ---------------------------------------------------------------------------
// Ablations: one diagram solver per requested variant, trained on the train
// split and reported on validation, one report row per variant.

std::vector<DiagramVariant> parse_ablation_plan(const std::string& plan);

EvalReport ablate(const Corpus& corpus, const Workspace& ws,
                  const std::vector<DiagramVariant>& plan, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Attention export for one diagram question: JSON (bboxes + weights per
// option) and optionally one heatmap PNG per option.

std::filesystem::path export_attention(const Corpus& corpus, const Workspace& ws,
                                       DiagramMcSolver& solver,
                                       const std::string& question_id,
                                       const std::filesystem::path& out_prefix,
                                       bool render_heatmaps);

// "<task>_<retriever>" solver ids carry their retriever; everything else
// falls back to the default.
Retriever retriever_from_solver_id(const std::string& id,
                                   Retriever fallback = Retriever::ir);

}  // namespace isaaq
