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

#include "isaaq/solvers.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

const char* solver_task_name(SolverTask t) {
  switch (t) {
    case SolverTask::tf: return "tf";
    case SolverTask::text_mc: return "text_mc";
    case SolverTask::diagram_mc: return "diagram_mc";
  }
  return "tf";
}

SolverTask solver_task_from_name(const std::string& name) {
  if (name == "tf") return SolverTask::tf;
  if (name == "text_mc") return SolverTask::text_mc;
  if (name == "diagram_mc") return SolverTask::diagram_mc;
  throw Error(ErrorCode::config, "unknown task: '" + name + "'");
}

const char* diagram_variant_name(DiagramVariant v) {
  switch (v) {
    case DiagramVariant::text_only: return "text-only";
    case DiagramVariant::visual: return "+visual";
    case DiagramVariant::visual_bg: return "+background-diagram";
    case DiagramVariant::bu: return "+BU";
    case DiagramVariant::butd: return "+BUTD";
  }
  return "+BUTD";
}

DiagramVariant diagram_variant_from_name(const std::string& name) {
  if (name == "text-only") return DiagramVariant::text_only;
  if (name == "+visual" || name == "visual") return DiagramVariant::visual;
  if (name == "+background-diagram" || name == "background-diagram") return DiagramVariant::visual_bg;
  if (name == "+BU" || name == "BU" || name == "+bu" || name == "bu") return DiagramVariant::bu;
  if (name == "+BUTD" || name == "BUTD" || name == "+butd" || name == "butd") return DiagramVariant::butd;
  throw Error(ErrorCode::config, "unknown ablation variant: '" + name + "'");
}

const char* diagram_variant_report_label(DiagramVariant v) {
  switch (v) {
    case DiagramVariant::text_only: return "text";
    case DiagramVariant::visual: return "text+visual";
    case DiagramVariant::visual_bg: return "text+visual+background diagram";
    case DiagramVariant::bu: return "text+visual+BU attention";
    case DiagramVariant::butd: return "text+visual+BUTD attention";
  }
  return "text+visual+BUTD attention";
}

int argmax_lowest_index(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

Eigen::VectorXd softmax_vector(const Eigen::VectorXd& v) {
  double m = v.maxCoeff();
  Eigen::ArrayXd e = (v.array() - m).exp();
  return (e / e.sum()).matrix();
}

SolverScores SolverScores::from_logits(std::string question_id, std::string solver_id,
                                       Eigen::VectorXd logits) {
  SolverScores s;
  s.question_id = std::move(question_id);
  s.solver_id = std::move(solver_id);
  s.probs = softmax_vector(logits);
  s.predicted = argmax_lowest_index(logits);
  s.logits = std::move(logits);
  return s;
}

void save_scores(const std::filesystem::path& file, const std::vector<SolverScores>& scores) {
  std::filesystem::create_directories(file.parent_path().empty() ? "." : file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    for (const auto& s : scores) {
      json rec;
      rec["question_id"] = s.question_id;
      rec["solver_id"] = s.solver_id;
      json logits = json::array();
      for (Eigen::Index i = 0; i < s.logits.size(); ++i) logits.push_back(s.logits(i));
      rec["logits"] = std::move(logits);
      rec["predicted"] = s.predicted;
      out << rec.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, file);
}

std::vector<SolverScores> load_scores(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::state, "missing scores file " + file.string());
  std::vector<SolverScores> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) {
      throw Error(ErrorCode::io, "bad scores record in " + file.string());
    }
    Eigen::VectorXd logits(rec.at("logits").size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = rec["logits"][i].get<double>();
    out.push_back(SolverScores::from_logits(rec.at("question_id").get<std::string>(),
                                            rec.at("solver_id").get<std::string>(),
                                            std::move(logits)));
  }
  return out;
}

const Question* example_question(const AnyExample& ex) {
  return std::visit([](const auto& e) { return e.question; }, ex);
}

// ---------------------------------------------------------------------------
// Attention.

void add_attention_params(ParamStore& store, int d_v, int hidden,
                          unsigned long long seed) {
  if (d_v != hidden) {
    throw Error(ErrorCode::config,
                "elementwise fusion requires d_v == H, got d_v=" + std::to_string(d_v) +
                    " H=" + std::to_string(hidden));
  }
  std::mt19937_64 rng(seed);
  int in_dim = d_v + hidden;
  store.add("attn.W_g", gaussian_init(hidden, in_dim, 0.02, rng));
  store.add_zeros("attn.b_g", 1, hidden);
  store.add("attn.W_s", gaussian_init(hidden, in_dim, 0.02, rng));
  store.add_zeros("attn.b_s", 1, hidden);
  store.add("attn.w_a", gaussian_init(1, hidden, 0.02, rng));
  store.add("attn.W_u", gaussian_init(1, hidden, 0.02, rng));
}

ad::Var gated_tanh_graph(ad::Graph& g, ad::Var x, ParamStore& params) {
  const Tensor& wg = params.at("attn.W_g");
  if (g.value(x).cols() != wg.value.cols()) {
    throw Error(ErrorCode::config,
                "gated tanh input width " + std::to_string(g.value(x).cols()) +
                    " does not match W_g input dim " + std::to_string(wg.value.cols()));
  }
  ad::Var lin_g = g.add_row_broadcast(g.matmul(x, g.transpose(g.param(params.at("attn.W_g")))),
                                      g.param(params.at("attn.b_g")));
  ad::Var lin_s = g.add_row_broadcast(g.matmul(x, g.transpose(g.param(params.at("attn.W_s")))),
                                      g.param(params.at("attn.b_s")));
  return g.hadamard(g.tanh_op(lin_g), g.sigmoid_op(lin_s));
}

Eigen::VectorXd gated_tanh(const Eigen::VectorXd& x, ParamStore& params) {
  ad::Graph g;
  ad::Var out = gated_tanh_graph(g, g.constant(x.transpose()), params);
  return g.value(out).row(0).transpose();
}

ButdVars butd_attend_graph(ad::Graph& g, ad::Var c, ad::Var v, ParamStore& params,
                           bool force_uniform) {
  int n = static_cast<int>(g.value(c).rows());
  int m = static_cast<int>(g.value(v).rows());
  if (m < 1) throw Error(ErrorCode::config, "attention needs at least one region");
  if (g.value(c).cols() != g.value(v).cols()) {
    throw Error(ErrorCode::config, "fusion requires matching C and V widths");
  }

  ButdVars out;
  if (force_uniform) {
    out.alpha = g.constant(Eigen::MatrixXd::Constant(n, m, 1.0 / m));
  } else {
    // rows ordered option-major: row i*m+j holds [v_j, C_i]
    ad::Var pairs = g.concat_cols(g.tile_rows(v, n), g.repeat_rows_each(c, m));
    ad::Var hidden = gated_tanh_graph(g, pairs, params);
    ad::Var raw = g.matmul(hidden, g.transpose(g.param(params.at("attn.w_a"))));
    out.alpha = g.softmax_rows(g.reshape_rows(raw, n, m));
  }
  out.attended = g.matmul(out.alpha, v);
  out.fused = g.hadamard(c, out.attended);
  return out;
}

AttentionResult butd_attend(const Eigen::MatrixXd& c, const Eigen::MatrixXd& v,
                            ParamStore& params, bool force_uniform) {
  ad::Graph g;
  ButdVars vars = butd_attend_graph(g, g.constant(c), g.constant(v), params, force_uniform);
  return {g.value(vars.alpha), g.value(vars.attended), g.value(vars.fused)};
}

// ---------------------------------------------------------------------------
// Solver base.

SolverScores Solver::score(const AnyExample& ex) {
  ad::Graph g;
  std::mt19937_64 rng(0);
  ad::Var logits = logits_graph(g, ex, RunMode::eval, rng);
  return SolverScores::from_logits(example_question(ex)->id, id_,
                                   g.value(logits).row(0).transpose());
}

ad::Var Solver::loss_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                           std::mt19937_64& rng) {
  ad::Var logits = logits_graph(g, ex, mode, rng);
  return g.nll_of_softmax_row(logits, example_question(ex)->answer_index);
}

void Solver::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json config;
  config["solver_id"] = id_;
  config["task"] = solver_task_name(task());
  config["max_len"] = max_len_;
  config["encoder"] = json::parse(spec_.to_json());
  config["extra"] = json::parse(extra_config_json());
  std::ofstream out(dir / "config.json");
  if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "config.json").string());
  out << config.dump(2) << '\n';
  params_.save(dir / "weights.bin");
  vocab_.save(dir / "vocab.txt");
}

namespace {

void load_weights_into(Solver& solver, const std::filesystem::path& bin_path) {
  std::map<std::string, std::pair<int, int>> expected;
  for (const auto* t : solver.params().all()) {
    expected[t->name] = {static_cast<int>(t->value.rows()),
                         static_cast<int>(t->value.cols())};
  }
  ParamStore loaded = ParamStore::load_checked(bin_path, expected);
  for (Tensor* t : solver.params().all()) {
    t->value = loaded.at(t->name).value;
    t->zero_grad();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// True/false solver.

TfSolver::TfSolver(std::string id, EncoderSpec spec, Vocab vocab, int max_len,
                   PremiseMode premise_mode, unsigned long long seed)
    : Solver(std::move(id), std::move(spec), std::move(vocab), max_len),
      premise_mode_(premise_mode) {
  spec_.validate();
  params_ = init_encoder_params(spec_, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  params_.add("head.W", gaussian_init(spec_.hidden, 2, 0.02, rng));
  params_.add_zeros("head.b", 1, 2);
}

std::string TfSolver::extra_config_json() const {
  json j{{"premise_mode",
          premise_mode_ == PremiseMode::passage ? "passage" : "per_sentence_max"}};
  return j.dump();
}

ad::Var TfSolver::logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                               std::mt19937_64& rng) {
  const auto* tf = std::get_if<TfExample>(&ex);
  if (!tf) throw Error(ErrorCode::config, "tf solver fed a non-tf example");
  const Question& q = *tf->question;
  if (q.kind != QuestionKind::true_false) {
    throw Error(ErrorCode::validation,
                "question " + q.id + " is not true/false; tf solver refuses it");
  }

  std::string premise = tf->premise_text;
  if (premise_mode_ == PremiseMode::per_sentence_max && !tf->premise_sentences.empty()) {
    // Most confident sentence wins; ties keep the earliest.
    double best_conf = -1.0;
    for (const auto& sentence : tf->premise_sentences) {
      EncodedSequence seq = build_sequence_tf(vocab_, q.stem, sentence, max_len_);
      EncodeResult enc = encode(seq, params_, spec_, RunMode::eval);
      Eigen::VectorXd logits = params_.at("head.W").value.transpose() * enc.pooled +
                               params_.at("head.b").value.row(0).transpose();
      double conf = softmax_vector(logits).maxCoeff();
      if (conf > best_conf) {
        best_conf = conf;
        premise = sentence;
      }
    }
  }

  EncodedSequence seq = build_sequence_tf(vocab_, q.stem, premise, max_len_);
  EncodeVars enc = encode_graph(g, seq, params_, spec_, mode, rng);
  return g.add(g.matmul(enc.pooled, g.param(params_.at("head.W"))),
               g.param(params_.at("head.b")));
}

// ---------------------------------------------------------------------------
// Text multiple choice solver.

TextMcSolver::TextMcSolver(std::string id, EncoderSpec spec, Vocab vocab, int max_len,
                           unsigned long long seed)
    : Solver(std::move(id), std::move(spec), std::move(vocab), max_len) {
  spec_.validate();
  params_ = init_encoder_params(spec_, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  params_.add("head.w", gaussian_init(spec_.hidden, 1, 0.02, rng));
  params_.add_zeros("head.b", 1, 1);
}

ad::Var TextMcSolver::logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                                   std::mt19937_64& rng) {
  const auto* mc = std::get_if<TextMcExample>(&ex);
  if (!mc) throw Error(ErrorCode::config, "text MC solver fed a non-text-MC example");
  const Question& q = *mc->question;
  if (q.kind == QuestionKind::true_false) {
    throw Error(ErrorCode::validation,
                "question " + q.id + " is true/false; use the tf solver");
  }
  if (mc->passages.size() != q.options.size()) {
    throw Error(ErrorCode::config,
                "question " + q.id + ": " + std::to_string(mc->passages.size()) +
                    " passages for " + std::to_string(q.options.size()) + " options");
  }

  ad::Var logits;
  for (size_t i = 0; i < q.options.size(); ++i) {
    EncodedSequence seq = build_sequence(vocab_, mc->passages[i], q.stem, q.options[i], max_len_);
    EncodeVars enc = encode_graph(g, seq, params_, spec_, mode, rng);
    ad::Var score = g.add(g.matmul(enc.pooled, g.param(params_.at("head.w"))),
                          g.param(params_.at("head.b")));
    logits = (i == 0) ? score : g.concat_cols(logits, score);
  }
  return logits;
}

// ---------------------------------------------------------------------------
// Diagram multiple choice solver.

DiagramMcSolver::DiagramMcSolver(std::string id, EncoderSpec spec, Vocab vocab,
                                 int max_len, DiagramVariant variant, int d_f,
                                 unsigned long long seed)
    : Solver(std::move(id), std::move(spec), std::move(vocab), max_len),
      variant_(variant), d_f_(d_f) {
  spec_.validate();
  params_ = init_encoder_params(spec_, seed);
  RoIEmbedderParams::add_to(params_, spec_.hidden, d_f_, kRoiPositionDim,
                            seed ^ 0xc2b2ae3d27d4eb4fULL);
  add_attention_params(params_, spec_.hidden, spec_.hidden, seed ^ 0x165667b19e3779f9ULL);
}

std::string DiagramMcSolver::extra_config_json() const {
  json j{{"variant", diagram_variant_name(variant_)}, {"d_f", d_f_}};
  return j.dump();
}

std::vector<RoI> merge_roi_sets(const std::vector<RoI>& question_rois,
                                const std::vector<RoI>& background_rois, int cap) {
  std::vector<RoI> merged = question_rois;
  if (static_cast<int>(merged.size()) > cap) merged.resize(static_cast<size_t>(cap));
  for (const auto& roi : background_rois) {
    if (static_cast<int>(merged.size()) >= cap) break;
    merged.push_back(roi);
  }
  return merged;
}

std::vector<RoI> DiagramMcSolver::effective_rois(const DiagramMcExample& ex) const {
  switch (variant_) {
    case DiagramVariant::text_only:
      return {};
    case DiagramVariant::visual: {
      if (!ex.whole_diagram) {
        throw Error(ErrorCode::state, "whole-diagram feature missing for question " +
                                          ex.question->id);
      }
      return {*ex.whole_diagram};
    }
    case DiagramVariant::visual_bg: {
      if (!ex.whole_diagram) {
        throw Error(ErrorCode::state, "whole-diagram feature missing for question " +
                                          ex.question->id);
      }
      std::vector<RoI> rois{*ex.whole_diagram};
      if (ex.whole_background) rois.push_back(*ex.whole_background);
      return rois;
    }
    case DiagramVariant::bu:
    case DiagramVariant::butd: {
      if (ex.rois.rois.empty()) {
        throw Error(ErrorCode::validation,
                    "no regions for diagram of question " + ex.question->id);
      }
      return merge_roi_sets(ex.rois.rois,
                            ex.background_rois ? ex.background_rois->rois
                                               : std::vector<RoI>{});
    }
  }
  return {};
}

ad::Var DiagramMcSolver::build_c(ad::Graph& g, const DiagramMcExample& ex, RunMode mode,
                                 std::mt19937_64& rng) {
  const Question& q = *ex.question;
  ad::Var c;
  for (size_t i = 0; i < q.options.size(); ++i) {
    EncodedSequence seq = build_sequence(vocab_, ex.passages[i], q.stem, q.options[i], max_len_);
    EncodeVars enc = encode_graph(g, seq, params_, spec_, mode, rng);
    c = (i == 0) ? enc.pooled : g.concat_rows(c, enc.pooled);
  }
  return c;
}

ad::Var DiagramMcSolver::build_v(ad::Graph& g, const DiagramMcExample& ex) {
  std::vector<RoI> rois = effective_rois(ex);
  int m = static_cast<int>(rois.size());
  Eigen::MatrixXd features(m, d_f_);
  Eigen::MatrixXd positions(m, kRoiPositionDim);
  for (int j = 0; j < m; ++j) {
    if (rois[static_cast<size_t>(j)].feature.size() != d_f_) {
      throw Error(ErrorCode::validation,
                  "RoI feature of length " +
                      std::to_string(rois[static_cast<size_t>(j)].feature.size()) +
                      " (want " + std::to_string(d_f_) + ") for question " +
                      ex.question->id);
    }
    features.row(j) = rois[static_cast<size_t>(j)].feature.transpose();
    positions.row(j) = rois[static_cast<size_t>(j)].position().transpose();
  }
  return embed_rois_graph(g, g.constant(std::move(features)),
                          g.constant(std::move(positions)), params_);
}

ad::Var DiagramMcSolver::logits_graph(ad::Graph& g, const AnyExample& ex, RunMode mode,
                                      std::mt19937_64& rng) {
  const auto* dmc = std::get_if<DiagramMcExample>(&ex);
  if (!dmc) throw Error(ErrorCode::config, "diagram solver fed a non-diagram example");
  const Question& q = *dmc->question;
  if (q.kind != QuestionKind::diagram_mc || !q.diagram) {
    throw Error(ErrorCode::validation,
                "question " + q.id + " has no diagram; diagram solver refuses it");
  }
  if (dmc->passages.size() != q.options.size()) {
    throw Error(ErrorCode::config,
                "question " + q.id + ": " + std::to_string(dmc->passages.size()) +
                    " passages for " + std::to_string(q.options.size()) + " options");
  }

  ad::Var c = build_c(g, *dmc, mode, rng);
  ad::Var fused;
  if (variant_ == DiagramVariant::text_only) {
    fused = c;
  } else {
    ad::Var v = build_v(g, *dmc);
    bool uniform = variant_ != DiagramVariant::butd;
    fused = butd_attend_graph(g, c, v, params_, uniform).fused;
  }
  return g.transpose(g.matmul(fused, g.transpose(g.param(params_.at("attn.W_u")))));
}

DiagramMcSolver::AttentionExport DiagramMcSolver::attention(const DiagramMcExample& ex) {
  AttentionExport out;
  if (variant_ == DiagramVariant::text_only) return out;

  ad::Graph g;
  std::mt19937_64 rng(0);
  AnyExample any = ex;
  const auto* dmc = std::get_if<DiagramMcExample>(&any);
  ad::Var c = build_c(g, *dmc, RunMode::eval, rng);
  ad::Var v = build_v(g, *dmc);
  bool uniform = variant_ != DiagramVariant::butd;
  ButdVars vars = butd_attend_graph(g, c, v, params_, uniform);
  out.alpha = g.value(vars.alpha);
  for (const auto& roi : effective_rois(ex)) out.bboxes.push_back(roi.bbox);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint loading.

std::unique_ptr<Solver> load_solver(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) {
    throw Error(ErrorCode::state, "missing checkpoint config " + (dir / "config.json").string());
  }
  json config;
  try {
    in >> config;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed checkpoint config: ") + e.what());
  }

  std::string id = config.at("solver_id").get<std::string>();
  SolverTask task = solver_task_from_name(config.at("task").get<std::string>());
  int max_len = config.at("max_len").get<int>();
  EncoderSpec spec = EncoderSpec::from_json(config.at("encoder").dump());
  Vocab vocab = Vocab::load(dir / "vocab.txt");
  json extra = config.value("extra", json::object());

  std::unique_ptr<Solver> solver;
  switch (task) {
    case SolverTask::tf: {
      auto mode = extra.value("premise_mode", "passage") == std::string("per_sentence_max")
                      ? TfSolver::PremiseMode::per_sentence_max
                      : TfSolver::PremiseMode::passage;
      solver = std::make_unique<TfSolver>(id, spec, std::move(vocab), max_len, mode);
      break;
    }
    case SolverTask::text_mc:
      solver = std::make_unique<TextMcSolver>(id, spec, std::move(vocab), max_len);
      break;
    case SolverTask::diagram_mc: {
      DiagramVariant variant = diagram_variant_from_name(extra.value("variant", "+BUTD"));
      int d_f = extra.value("d_f", kRoiFeatureDim);
      solver = std::make_unique<DiagramMcSolver>(id, spec, std::move(vocab), max_len,
                                                 variant, d_f);
      break;
    }
  }
  load_weights_into(*solver, dir / "weights.bin");
  return solver;
}

SolverScores IrBaselineSolver::score(const Question& q) const {
  Eigen::VectorXd logits(static_cast<Eigen::Index>(q.options.size()));
  for (int i = 0; i < static_cast<int>(q.options.size()); ++i) {
    logits(i) = retriever_.top_hit_score(q, i);
  }
  return SolverScores::from_logits(q.id, id_, std::move(logits));
}

}  // namespace isaaq
