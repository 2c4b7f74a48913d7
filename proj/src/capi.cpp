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

#include "isaaq.h"

#include <fstream>
#include <optional>
#include <string>

#include "isaaq/error.hpp"
#include "isaaq/harness.hpp"

using namespace isaaq;

struct isaaq_pipeline {
  Corpus corpus;
  Workspace workspace;
};

namespace {

thread_local std::string g_last_error;

isaaq_status status_of(ErrorCode code) { return static_cast<isaaq_status>(code); }

// Runs fn, captures any exception into the thread-local error slot.
template <typename Fn>
isaaq_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return ISAAQ_OK;
  } catch (const Error& e) {
    g_last_error = e.to_json();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = Error(ErrorCode::internal, e.what()).to_json();
    return ISAAQ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = Error(ErrorCode::internal, "unknown failure").to_json();
    return ISAAQ_ERR_INTERNAL;
  }
}

std::string str_or(const char* s, const char* fallback) {
  return s && *s ? std::string(s) : std::string(fallback);
}

void require(const char* p, const char* what) {
  if (!p || !*p) throw Error(ErrorCode::config, std::string(what) + " must be given");
}

}  // namespace

extern "C" {

const char* isaaq_version(void) { return "0.1.0"; }

const char* isaaq_last_error(void) { return g_last_error.c_str(); }

isaaq_status isaaq_convert(const char* raw_path, const char* out_root,
                           const char* default_subject, const char* subject_map_json) {
  return guarded([&] {
    require(raw_path, "raw_path");
    require(out_root, "out_root");
    convert_tqa_release(raw_path, out_root, str_or(default_subject, "life"),
                        subject_map_json ? std::filesystem::path(subject_map_json)
                                         : std::filesystem::path{});
  });
}

isaaq_pipeline* isaaq_open(const char* dataset_root, const char* cache_dir) {
  isaaq_pipeline* p = nullptr;
  guarded([&] {
    require(dataset_root, "dataset_root");
    auto corpus = Corpus::load(dataset_root);
    std::optional<std::filesystem::path> cache;
    if (cache_dir && *cache_dir) cache = cache_dir;
    auto ws = Workspace::open(dataset_root, cache);
    p = new isaaq_pipeline{std::move(corpus), std::move(ws)};
  });
  return p;
}

void isaaq_close(isaaq_pipeline* p) { delete p; }

isaaq_status isaaq_counts(isaaq_pipeline* p, int* lessons, int* sentences, int* questions) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    if (lessons) *lessons = static_cast<int>(p->corpus.lessons().size());
    if (sentences) {
      int n = 0;
      for (const auto& lesson : p->corpus.lessons()) {
        n += static_cast<int>(lesson.sentences.size());
      }
      *sentences = n;
    }
    if (questions) *questions = static_cast<int>(p->corpus.questions().size());
  });
}

isaaq_status isaaq_retrieve(isaaq_pipeline* p, const char* retriever, const char* split,
                            int n) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(retriever, "retriever");
    require(split, "split");
    run_retrieval(p->corpus, p->workspace, retriever_from_name(retriever),
                  split_from_label(split), n > 0 ? n : 10);
  });
}

isaaq_status isaaq_features(isaaq_pipeline* p, const char* source) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    std::string s = str_or(source, "annotations");
    RoiSource roi_source;
    if (s == "annotations") roi_source = RoiSource::annotations;
    else if (s == "trivial") roi_source = RoiSource::trivial_detector;
    else throw Error(ErrorCode::config, "unknown feature source '" + s + "'");
    run_features(p->corpus, p->workspace, roi_source);
  });
}

isaaq_status isaaq_train(isaaq_pipeline* p, const char* config_path, const char* task,
                         const char* retriever, const char* checkpoint_out) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(config_path, "config_path");
    require(checkpoint_out, "checkpoint_out");
    TrainConfig config = TrainConfig::from_file(config_path);
    if (task && *task) config.task = solver_task_from_name(task);
    if (retriever && *retriever) config.retriever = retriever_from_name(retriever);
    config.validate();

    Vocab vocab = vocab_from_corpus(p->corpus);
    auto solver = build_solver(config, vocab);
    auto train_examples = assemble_examples(p->corpus, p->workspace, config, SplitName::train);
    auto val_examples =
        assemble_examples(p->corpus, p->workspace, config, SplitName::validation);
    train(config, *solver, train_examples, val_examples, checkpoint_out);
  });
}

isaaq_status isaaq_evaluate(isaaq_pipeline* p, const char* split,
                            const char* const* checkpoints, size_t n_checkpoints,
                            const char* kind, const char* ensemble_model,
                            int with_ir_baseline, const char* out_prefix) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(split, "split");
    require(out_prefix, "out_prefix");
    if (n_checkpoints == 0 && !with_ir_baseline) {
      throw Error(ErrorCode::config, "evaluate needs at least one checkpoint");
    }
    SplitName split_name = split_from_label(split);
    std::optional<QuestionKind> kind_override;
    if (kind && *kind) kind_override = question_kind_from_name(kind);

    std::filesystem::path prefix(out_prefix);
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());

    std::map<std::string, std::map<std::string, int>> predictions;
    ScoreTable table;
    std::set<std::string> covered_questions;
    for (size_t i = 0; i < n_checkpoints; ++i) {
      auto solver = load_solver(checkpoints[i]);
      auto scores = solve_split(p->corpus, p->workspace, *solver, split_name, kind_override);
      std::filesystem::path scores_path = prefix;
      scores_path += "." + solver->id() + ".scores.jsonl";
      save_scores(scores_path, scores);
      for (const auto& s : scores) {
        predictions[s.solver_id][s.question_id] = s.predicted;
        table[s.solver_id][s.question_id] = s;
        covered_questions.insert(s.question_id);
      }
    }

    if (with_ir_baseline) {
      IrBaselineSolver baseline("ir_baseline", p->corpus, default_retriever_config(Retriever::ir));
      std::vector<SolverScores> scores;
      for (const Question* q : p->corpus.split_questions(split_name)) {
        if (kind_override && q->kind != *kind_override) continue;
        if (!kind_override && !covered_questions.empty() && !covered_questions.count(q->id)) {
          continue;
        }
        scores.push_back(baseline.score(*q));
      }
      std::filesystem::path scores_path = prefix;
      scores_path += ".ir_baseline.scores.jsonl";
      save_scores(scores_path, scores);
      for (const auto& s : scores) {
        predictions[s.solver_id][s.question_id] = s.predicted;
        table[s.solver_id][s.question_id] = s;
      }
    }

    if (ensemble_model && *ensemble_model) {
      CalibrationModel model = CalibrationModel::load(ensemble_model);
      for (const auto& cal : ensemble_predict_all(model, table)) {
        predictions["ensemble"][cal.question_id] = cal.predicted;
      }
    }

    EvalReport report = evaluate_predictions(
        p->corpus, p->corpus.split_questions(split_name), predictions, split);
    std::filesystem::path report_json = prefix;
    report_json += ".report.json";
    std::ofstream(report_json) << report.to_json() << '\n';
    std::filesystem::path report_csv = prefix;
    report_csv += ".report.csv";
    std::ofstream(report_csv) << report.to_csv();
  });
}

isaaq_status isaaq_ensemble_fit(isaaq_pipeline* p, const char* split,
                                const char* const* scores_files, size_t n_files,
                                const char* model_out) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(split, "split");
    require(model_out, "model_out");
    if (n_files == 0) throw Error(ErrorCode::config, "no scores files given");

    std::vector<std::vector<SolverScores>> all;
    for (size_t i = 0; i < n_files; ++i) all.push_back(load_scores(scores_files[i]));
    ScoreTable table = score_table(all);

    std::map<std::string, int> labels;
    std::set<std::string> scored;
    for (const auto& [solver_id, by_question] : table) {
      for (const auto& [qid, _] : by_question) scored.insert(qid);
    }
    for (const Question* q : p->corpus.split_questions(split_from_label(split))) {
      if (scored.count(q->id)) labels[q->id] = q->answer_index;
    }
    if (labels.empty()) {
      throw Error(ErrorCode::validation, "scores files cover no questions of split " +
                                             std::string(split));
    }

    CalibrationModel model = fit_calibration(table, labels);
    model.save(model_out);
  });
}

isaaq_status isaaq_ensemble_predict(isaaq_pipeline* p, const char* model_path,
                                    const char* const* scores_files, size_t n_files,
                                    const char* out_jsonl) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(model_path, "model_path");
    require(out_jsonl, "out_jsonl");
    if (n_files == 0) throw Error(ErrorCode::config, "no scores files given");

    CalibrationModel model = CalibrationModel::load(model_path);
    std::vector<std::vector<SolverScores>> all;
    for (size_t i = 0; i < n_files; ++i) all.push_back(load_scores(scores_files[i]));
    ScoreTable table = score_table(all);

    std::vector<SolverScores> out;
    for (const auto& cal : ensemble_predict_all(model, table)) {
      Eigen::VectorXd logits = cal.scores;  // calibrated scores reported as raw scores
      SolverScores s = SolverScores::from_logits(cal.question_id, "ensemble", logits);
      out.push_back(std::move(s));
    }
    save_scores(out_jsonl, out);
  });
}

isaaq_status isaaq_ablate(isaaq_pipeline* p, const char* plan, const char* config_path,
                          const char* report_prefix) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(config_path, "config_path");
    require(report_prefix, "report_prefix");
    TrainConfig config = TrainConfig::from_file(config_path);
    auto variants = parse_ablation_plan(str_or(plan, "all"));
    EvalReport report = ablate(p->corpus, p->workspace, variants, config);

    std::filesystem::path prefix(report_prefix);
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    std::filesystem::path report_json = prefix;
    report_json += ".report.json";
    std::ofstream(report_json) << report.to_json() << '\n';
    std::filesystem::path report_csv = prefix;
    report_csv += ".report.csv";
    std::ofstream(report_csv) << report.to_csv();
  });
}

isaaq_status isaaq_export_attention(isaaq_pipeline* p, const char* question_id,
                                    const char* checkpoint_dir, const char* out_prefix,
                                    int render_heatmaps) {
  return guarded([&] {
    if (!p) throw Error(ErrorCode::config, "null pipeline");
    require(question_id, "question_id");
    require(checkpoint_dir, "checkpoint_dir");
    require(out_prefix, "out_prefix");
    auto solver = load_solver(checkpoint_dir);
    auto* dmc = dynamic_cast<DiagramMcSolver*>(solver.get());
    if (!dmc) {
      throw Error(ErrorCode::config, "attention export needs a diagram-solver checkpoint");
    }
    export_attention(p->corpus, p->workspace, *dmc, question_id, out_prefix,
                     render_heatmaps != 0);
  });
}

}  // extern "C"
