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

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "isaaq/encoder.hpp"
#include "isaaq/retrieval.hpp"
#include "isaaq/vision.hpp"

namespace isaaq {

enum class SolverTask { tf, text_mc, diagram_mc };
const char* solver_task_name(SolverTask t);
SolverTask solver_task_from_name(const std::string& name);

// How the diagram solver consumes visual input. The ablation harness runs
// one solver per variant.
enum class DiagramVariant {
  text_only,   // u_i = C_i, the diagram is ignored
  visual,      // one whole-diagram region, no attention
  visual_bg,   // whole question diagram + whole background diagram
  bu,          // detected regions, uniform weights
  butd,        // detected regions, question-conditioned attention
};
const char* diagram_variant_name(DiagramVariant v);
DiagramVariant diagram_variant_from_name(const std::string& name);
const char* diagram_variant_report_label(DiagramVariant v);

int argmax_lowest_index(const Eigen::VectorXd& v);
Eigen::VectorXd softmax_vector(const Eigen::VectorXd& v);

struct SolverScores {
  std::string question_id;
  std::string solver_id;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;   // softmax(logits)
  int predicted = 0;       // argmax, ties to the lowest index

  static SolverScores from_logits(std::string question_id, std::string solver_id,
                                  Eigen::VectorXd logits);
};

// JSON-lines persistence: {question_id, solver_id, logits, predicted}.
void save_scores(const std::filesystem::path& file, const std::vector<SolverScores>& scores);
std::vector<SolverScores> load_scores(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Examples (question + retrieved background, ready for a solver).

struct TfExample {
  const Question* question = nullptr;
  std::string premise_text;
  std::vector<std::string> premise_sentences;  // for per-sentence-max mode
};

struct TextMcExample {
  const Question* question = nullptr;
  std::vector<std::string> passages;  // one per option
};

struct DiagramMcExample {
  const Question* question = nullptr;
  std::vector<std::string> passages;
  RoISet rois;                                // detected question-diagram regions
  std::optional<RoI> whole_diagram;           // global feature, used by `visual`
  std::optional<RoI> whole_background;        // retrieved background diagram
  std::optional<RoISet> background_rois;      // its detected regions
};

using AnyExample = std::variant<TfExample, TextMcExample, DiagramMcExample>;
const Question* example_question(const AnyExample& ex);

// ---------------------------------------------------------------------------
// Attention building blocks.

// Adds attn.W_g, attn.b_g, attn.W_s, attn.b_s ((d_v+H)->H maps), attn.w_a and
// attn.W_u (H vectors). The fusion step is elementwise, so d_v must equal H.
void add_attention_params(ParamStore& store, int d_v, int hidden,
                          unsigned long long seed);

// y = tanh(W_g x + b_g) * sigmoid(W_s x + b_s), row-wise over x.
ad::Var gated_tanh_graph(ad::Graph& g, ad::Var x, ParamStore& params);
Eigen::VectorXd gated_tanh(const Eigen::VectorXd& x, ParamStore& params);

struct ButdVars {
  ad::Var alpha;     // N x m, rows sum to 1
  ad::Var attended;  // N x d_v
  ad::Var fused;     // N x H, C ∘ attended
};

// Question-conditioned attention over region embeddings. C is N x H pooled
// text reps, V is m x d_v region embeddings. force_uniform replaces the
// learned weights with 1/m (the bottom-up-only ablation).
ButdVars butd_attend_graph(ad::Graph& g, ad::Var c, ad::Var v, ParamStore& params,
                           bool force_uniform = false);

struct AttentionResult {
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd attended;
  Eigen::MatrixXd fused;
};
AttentionResult butd_attend(const Eigen::MatrixXd& c, const Eigen::MatrixXd& v,
                            ParamStore& params, bool force_uniform = false);

// ---------------------------------------------------------------------------
// Solvers.

class Solver {
 public:
  virtual ~Solver() = default;

  const std::string& id() const { return id_; }
  virtual SolverTask task() const = 0;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const EncoderSpec& encoder_spec() const { return spec_; }
  const Vocab& vocab() const { return vocab_; }
  int max_len() const { return max_len_; }

  // Logit row (1 x N) for the example; parameters are bound into the graph.
  virtual ad::Var logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                               std::mt19937_64& rng) = 0;

  SolverScores score(const AnyExample& ex);
  ad::Var loss_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                     std::mt19937_64& rng);

  void save(const std::filesystem::path& dir) const;

 protected:
  Solver(std::string id, EncoderSpec spec, Vocab vocab, int max_len)
      : id_(std::move(id)), spec_(std::move(spec)), vocab_(std::move(vocab)),
        max_len_(max_len) {}
  virtual std::string extra_config_json() const { return "{}"; }

  std::string id_;
  EncoderSpec spec_;
  Vocab vocab_;
  int max_len_;
  ParamStore params_;
};

class TfSolver : public Solver {
 public:
  enum class PremiseMode { passage, per_sentence_max };

  TfSolver(std::string id, EncoderSpec spec, Vocab vocab, int max_len = 64,
           PremiseMode premise_mode = PremiseMode::passage,
           unsigned long long seed = 1);

  SolverTask task() const override { return SolverTask::tf; }
  ad::Var logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                       std::mt19937_64& rng) override;
  PremiseMode premise_mode() const { return premise_mode_; }

 protected:
  std::string extra_config_json() const override;

 private:
  PremiseMode premise_mode_;
};

class TextMcSolver : public Solver {
 public:
  TextMcSolver(std::string id, EncoderSpec spec, Vocab vocab, int max_len = 180,
               unsigned long long seed = 1);

  SolverTask task() const override { return SolverTask::text_mc; }
  ad::Var logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                       std::mt19937_64& rng) override;
};

class DiagramMcSolver : public Solver {
 public:
  DiagramMcSolver(std::string id, EncoderSpec spec, Vocab vocab, int max_len = 180,
                  DiagramVariant variant = DiagramVariant::butd,
                  int d_f = kRoiFeatureDim, unsigned long long seed = 1);

  SolverTask task() const override { return SolverTask::diagram_mc; }
  ad::Var logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                       std::mt19937_64& rng) override;

  DiagramVariant variant() const { return variant_; }
  int roi_feature_dim() const { return d_f_; }

  struct AttentionExport {
    std::vector<std::array<double, 4>> bboxes;
    Eigen::MatrixXd alpha;  // N x m
  };
  // Attention weights actually used for the example (uniform for `bu`).
  AttentionExport attention(const DiagramMcExample& ex);

  // Region embeddings the solver would attend over (variant-dependent).
  std::vector<RoI> effective_rois(const DiagramMcExample& ex) const;

 protected:
  std::string extra_config_json() const override;

 private:
  ad::Var build_c(ad::Graph& g, const DiagramMcExample& ex, RunMode mode,
                  std::mt19937_64& rng);
  ad::Var build_v(ad::Graph& g, const DiagramMcExample& ex);

  DiagramVariant variant_;
  int d_f_;
};

// Merges question and background regions under the cap, keeping question
// regions preferentially.
std::vector<RoI> merge_roi_sets(const std::vector<RoI>& question_rois,
                                const std::vector<RoI>& background_rois, int cap = kMaxRois);

std::unique_ptr<Solver> load_solver(const std::filesystem::path& dir);

// Retrieval-only baseline: the raw score of each option is the BM25 score of
// its top hit. No trainable parameters; plugs into the ensemble like any
// other solver.
class IrBaselineSolver {
 public:
  IrBaselineSolver(std::string id, const Corpus& corpus, RetrieverConfig config)
      : id_(std::move(id)), retriever_(corpus, std::move(config)) {}

  SolverScores score(const Question& q) const;
  const std::string& id() const { return id_; }

 private:
  std::string id_;
  IrRetriever retriever_;
};

}  // namespace isaaq
