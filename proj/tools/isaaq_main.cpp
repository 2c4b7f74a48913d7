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

// Command-line front end. Everything goes through the C API in isaaq.h; on
// failure the JSON error payload is printed to stderr and the status code
// becomes the exit code.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isaaq.h"

namespace {

int fail(isaaq_status status) {
  std::fprintf(stderr, "%s\n", isaaq_last_error());
  return status;
}

struct PipelineCloser {
  void operator()(isaaq_pipeline* p) const { isaaq_close(p); }
};
using Pipeline = std::unique_ptr<isaaq_pipeline, PipelineCloser>;

Pipeline open_pipeline(const std::string& dataset, const std::string& cache) {
  Pipeline p(isaaq_open(dataset.c_str(), cache.empty() ? nullptr : cache.c_str()));
  if (!p) std::fprintf(stderr, "%s\n", isaaq_last_error());
  return p;
}

std::vector<const char*> c_strings(const std::vector<std::string>& in) {
  std::vector<const char*> out;
  out.reserve(in.size());
  for (const auto& s : in) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isaaq: textbook question answering pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", isaaq_version());

  std::string dataset, cache;

  // convert
  auto* convert = app.add_subcommand("convert", "convert a raw TQA release to the dataset schema");
  std::string raw, out_root, default_subject = "life", subject_map;
  convert->add_option("--raw", raw, "release file or directory")->required();
  convert->add_option("--out", out_root, "output dataset root")->required();
  convert->add_option("--default-subject", default_subject, "life|earth|physical");
  convert->add_option("--subject-map", subject_map, "JSON file: lesson id -> subject");

  auto add_dataset_opts = [&](CLI::App* cmd) {
    cmd->add_option("--dataset", dataset, "dataset root")->required();
    cmd->add_option("--cache", cache, "cache directory (default: ISAAQ_CACHE_DIR or <dataset>/cache)");
  };

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "fill the passage cache for a split");
  std::string retriever, split = "train";
  int budget = 10;
  add_dataset_opts(retrieve);
  retrieve->add_option("--retriever", retriever, "ir|nsp|nn")->required();
  retrieve->add_option("--split", split, "train|validation|test");
  retrieve->add_option("--n", budget, "sentences per passage (default 10)");

  // features
  auto* features = app.add_subcommand("features", "featurize diagrams and their regions");
  std::string source = "annotations";
  add_dataset_opts(features);
  features->add_option("--source", source, "annotations|trivial");

  // train
  auto* train = app.add_subcommand("train", "train one solver");
  std::string config_path, task, train_retriever, checkpoint_out;
  add_dataset_opts(train);
  train->add_option("--config", config_path, "train config JSON")->required();
  train->add_option("--task", task, "tf|text_mc|diagram_mc (overrides config)");
  train->add_option("--retriever", train_retriever, "ir|nsp|nn (overrides config)");
  train->add_option("--out", checkpoint_out, "checkpoint directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score checkpoints on a split and report");
  std::string eval_split = "validation", eval_kind, ensemble_model, eval_out;
  std::vector<std::string> checkpoints;
  bool ir_baseline = false;
  add_dataset_opts(evaluate);
  evaluate->add_option("--split", eval_split, "train|validation|test");
  evaluate->add_option("--solver", checkpoints, "checkpoint directory (repeatable)");
  evaluate->add_option("--kind", eval_kind, "true_false|text_mc|diagram_mc override");
  evaluate->add_option("--ensemble", ensemble_model, "fitted calibration model JSON");
  evaluate->add_flag("--ir-baseline", ir_baseline, "include the retrieval-score baseline row");
  evaluate->add_option("--out", eval_out, "output prefix for scores and reports")->required();

  // ensemble fit / predict
  auto* ensemble = app.add_subcommand("ensemble", "fit or apply the calibration ensemble");
  ensemble->require_subcommand(1);
  auto* fit = ensemble->add_subcommand("fit", "fit calibration from per-solver scores");
  std::string fit_split = "train", model_out;
  std::vector<std::string> fit_scores;
  add_dataset_opts(fit);
  fit->add_option("--split", fit_split, "split providing the labels");
  fit->add_option("--scores", fit_scores, "per-solver scores JSONL (repeatable)")->required();
  fit->add_option("--out", model_out, "model output path")->required();

  auto* predict = ensemble->add_subcommand("predict", "apply a fitted calibration model");
  std::string model_path, predict_out;
  std::vector<std::string> predict_scores;
  add_dataset_opts(predict);
  predict->add_option("--model", model_path, "fitted model JSON")->required();
  predict->add_option("--scores", predict_scores, "per-solver scores JSONL (repeatable)")->required();
  predict->add_option("--out", predict_out, "ensemble scores JSONL")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the diagram-solver ablation ladder");
  std::string plan = "all", ablate_config, ablate_out;
  add_dataset_opts(ablate);
  ablate->add_option("--plan", plan, "comma list of text-only,+visual,+background-diagram,+BU,+BUTD");
  ablate->add_option("--config", ablate_config, "train config JSON")->required();
  ablate->add_option("--out", ablate_out, "report output prefix")->required();

  // export-attention
  auto* export_attn = app.add_subcommand("export-attention", "export attention weights for a question");
  std::string question_id, attn_ckpt, attn_out;
  bool heatmap = false;
  add_dataset_opts(export_attn);
  export_attn->add_option("--question", question_id, "question id")->required();
  export_attn->add_option("--solver", attn_ckpt, "diagram solver checkpoint")->required();
  export_attn->add_option("--out", attn_out, "output prefix")->required();
  export_attn->add_flag("--heatmap", heatmap, "also render per-option heatmap PNGs");

  CLI11_PARSE(app, argc, argv);

  if (convert->parsed()) {
    isaaq_status s = isaaq_convert(raw.c_str(), out_root.c_str(), default_subject.c_str(),
                                   subject_map.empty() ? nullptr : subject_map.c_str());
    if (s != ISAAQ_OK) return fail(s);
    std::printf("converted release into %s\n", out_root.c_str());
    return 0;
  }

  Pipeline pipeline = open_pipeline(dataset, cache);
  if (!pipeline) return ISAAQ_ERR_IO;

  isaaq_status s = ISAAQ_OK;
  if (retrieve->parsed()) {
    s = isaaq_retrieve(pipeline.get(), retriever.c_str(), split.c_str(), budget);
    if (s == ISAAQ_OK) std::printf("passage cache written for %s/%s\n", split.c_str(), retriever.c_str());
  } else if (features->parsed()) {
    s = isaaq_features(pipeline.get(), source.c_str());
    if (s == ISAAQ_OK) std::printf("diagram features written\n");
  } else if (train->parsed()) {
    s = isaaq_train(pipeline.get(), config_path.c_str(), task.empty() ? nullptr : task.c_str(),
                    train_retriever.empty() ? nullptr : train_retriever.c_str(),
                    checkpoint_out.c_str());
    if (s == ISAAQ_OK) std::printf("checkpoint written to %s\n", checkpoint_out.c_str());
  } else if (evaluate->parsed()) {
    auto ptrs = c_strings(checkpoints);
    s = isaaq_evaluate(pipeline.get(), eval_split.c_str(), ptrs.data(), ptrs.size(),
                       eval_kind.empty() ? nullptr : eval_kind.c_str(),
                       ensemble_model.empty() ? nullptr : ensemble_model.c_str(),
                       ir_baseline ? 1 : 0, eval_out.c_str());
    if (s == ISAAQ_OK) std::printf("report written to %s.report.json\n", eval_out.c_str());
  } else if (fit->parsed()) {
    auto ptrs = c_strings(fit_scores);
    s = isaaq_ensemble_fit(pipeline.get(), fit_split.c_str(), ptrs.data(), ptrs.size(),
                           model_out.c_str());
    if (s == ISAAQ_OK) std::printf("calibration model written to %s\n", model_out.c_str());
  } else if (predict->parsed()) {
    auto ptrs = c_strings(predict_scores);
    s = isaaq_ensemble_predict(pipeline.get(), model_path.c_str(), ptrs.data(), ptrs.size(),
                               predict_out.c_str());
    if (s == ISAAQ_OK) std::printf("ensemble scores written to %s\n", predict_out.c_str());
  } else if (ablate->parsed()) {
    s = isaaq_ablate(pipeline.get(), plan.c_str(), ablate_config.c_str(), ablate_out.c_str());
    if (s == ISAAQ_OK) std::printf("ablation report written to %s.report.json\n", ablate_out.c_str());
  } else if (export_attn->parsed()) {
    s = isaaq_export_attention(pipeline.get(), question_id.c_str(), attn_ckpt.c_str(),
                               attn_out.c_str(), heatmap ? 1 : 0);
    if (s == ISAAQ_OK) std::printf("attention written to %s.attention.json\n", attn_out.c_str());
  }

  return s == ISAAQ_OK ? 0 : fail(s);
}
