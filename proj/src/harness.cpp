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

#include "isaaq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig.

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorCode::config, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::config, "batch_size must be >= 1");
  if (max_len < 8) throw Error(ErrorCode::config, "max_len must be >= 8");
  if (peak_lr <= 0.0) throw Error(ErrorCode::config, "peak_lr must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw Error(ErrorCode::config, "warmup_fraction must be in [0,1]");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw Error(ErrorCode::config, "dropout must be in [0,1)");
  }
  if (roi_cap < 1 || roi_cap > kMaxRois) {
    throw Error(ErrorCode::config, "roi_cap must be in [1," + std::to_string(kMaxRois) + "]");
  }
  if (paper_parity && (peak_lr < 1e-6 || peak_lr > 5e-5)) {
    throw Error(ErrorCode::config,
                "parity configs keep the peak learning rate inside [1e-6, 5e-5]");
  }
}

std::string TrainConfig::to_json() const {
  json j;
  j["task"] = solver_task_name(task);
  j["retriever"] = retriever_name(retriever);
  j["peak_lr"] = peak_lr;
  j["warmup_fraction"] = warmup_fraction;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["dropout"] = dropout;
  j["max_len"] = max_len;
  j["seed"] = seed;
  j["roi_cap"] = roi_cap;
  j["paper_parity"] = paper_parity;
  j["use_background_diagram"] = use_background_diagram;
  j["variant"] = diagram_variant_name(variant);
  j["premise_mode"] = premise_mode;
  j["encoder"] = {{"hidden", hidden},
                  {"layers", layers},
                  {"heads", heads},
                  {"max_positions", max_positions}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed train config: ") + e.what());
  }
  TrainConfig c;
  if (j.contains("task")) c.task = solver_task_from_name(j["task"].get<std::string>());
  if (j.contains("retriever")) c.retriever = retriever_from_name(j["retriever"].get<std::string>());
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.dropout = j.value("dropout", c.dropout);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
  c.roi_cap = j.value("roi_cap", c.roi_cap);
  c.paper_parity = j.value("paper_parity", c.paper_parity);
  c.use_background_diagram = j.value("use_background_diagram", c.use_background_diagram);
  if (j.contains("variant")) c.variant = diagram_variant_from_name(j["variant"].get<std::string>());
  c.premise_mode = j.value("premise_mode", c.premise_mode);
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    c.hidden = e.value("hidden", c.hidden);
    c.layers = e.value("layers", c.layers);
    c.heads = e.value("heads", c.heads);
    c.max_positions = e.value("max_positions", c.max_positions);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

EncoderSpec TrainConfig::encoder_spec(int vocab_size) const {
  EncoderSpec spec;
  spec.vocab_size = vocab_size;
  spec.hidden = hidden;
  spec.layers = layers;
  spec.heads = heads;
  spec.max_positions = max_positions;
  spec.dropout = dropout;
  return spec;
}

double lr_schedule(long step, long total_steps, double warmup_fraction, double peak_lr) {
  if (total_steps <= 0 || step <= 0) return 0.0;
  if (step >= total_steps) return 0.0;
  long warmup = std::max<long>(1, std::lround(warmup_fraction * total_steps));
  if (step <= warmup) return peak_lr * static_cast<double>(step) / warmup;
  long decay = std::max<long>(1, total_steps - warmup);
  return peak_lr * static_cast<double>(total_steps - step) / decay;
}

// ---------------------------------------------------------------------------
// Workspace.

Workspace Workspace::open(const std::filesystem::path& dataset_root,
                          const std::optional<std::filesystem::path>& cache_override) {
  Workspace ws;
  ws.dataset_root = dataset_root;
  if (cache_override) {
    ws.cache_dir = *cache_override;
  } else if (const char* env = std::getenv("ISAAQ_CACHE_DIR"); env && *env) {
    ws.cache_dir = env;
  } else {
    ws.cache_dir = dataset_root / "cache";
  }
  return ws;
}

std::filesystem::path Workspace::passages_file(SplitName split, Retriever r) const {
  return cache_dir / "passages" /
         (std::string(split_label(split)) + "." + retriever_name(r) + ".jsonl");
}

RetrieverConfig default_retriever_config(Retriever r, int n) {
  RetrieverConfig config;
  config.n = n;
  config.scope =
      r == Retriever::ir ? RetrievalScope::whole_corpus : RetrievalScope::lesson_only;
  return config;
}

Vocab vocab_from_corpus(const Corpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& lesson : corpus.lessons()) {
    for (const auto& s : lesson.sentences) texts.push_back(s.text);
  }
  for (const auto& q : corpus.questions()) {
    texts.push_back(q.stem);
    for (const auto& o : q.options) texts.push_back(o);
  }
  return Vocab::build(texts);
}

// ---------------------------------------------------------------------------
// Frozen encoder glue for the transformer retrievers.

FrozenEncoderBundle FrozenEncoderBundle::deterministic(const Corpus& corpus,
                                                       unsigned long long seed,
                                                       int hidden, int layers, int heads) {
  FrozenEncoderBundle b;
  b.vocab = vocab_from_corpus(corpus);
  b.spec.vocab_size = b.vocab.size();
  b.spec.hidden = hidden;
  b.spec.layers = layers;
  b.spec.heads = heads;
  b.spec.dropout = 0.0;
  b.spec.max_positions = 512;
  b.params = init_encoder_params(b.spec, seed);
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  b.params.add("nsp.W", gaussian_init(hidden, 2, 0.02, rng));
  b.params.add_zeros("nsp.b", 1, 2);
  return b;
}

double EncoderNextSentenceScorer::is_next_prob(const std::string& first,
                                               const std::string& second) const {
  // first occupies the context slot, the candidate sentence the second slot
  EncodedSequence seq = build_sequence(bundle_.vocab, first, second, "", bundle_.max_len);
  EncodeResult enc = encode(seq, bundle_.params, bundle_.spec, RunMode::eval);
  Eigen::VectorXd logits = bundle_.params.at("nsp.W").value.transpose() * enc.pooled +
                           bundle_.params.at("nsp.b").value.row(0).transpose();
  return softmax_vector(logits)(0);
}

Eigen::VectorXd EncoderPooledEmbedder::embed(const std::string& text) const {
  EncodedSequence seq = build_sequence(bundle_.vocab, "", text, "", bundle_.max_len);
  return encode(seq, bundle_.params, bundle_.spec, RunMode::eval).pooled;
}

// ---------------------------------------------------------------------------
// Pipeline steps.

void run_retrieval(const Corpus& corpus, const Workspace& ws, Retriever retriever,
                   SplitName split, int n,
                   const std::optional<FrozenEncoderBundle>& bundle) {
  RetrieverConfig config = default_retriever_config(retriever, n);
  PassageCache cache;

  std::optional<IrRetriever> ir;
  std::optional<EncoderNextSentenceScorer> nsp;
  std::optional<EncoderPooledEmbedder> nn;
  if (retriever == Retriever::ir) {
    ir.emplace(corpus, config);
  } else {
    FrozenEncoderBundle b = bundle ? *bundle : FrozenEncoderBundle::deterministic(corpus);
    if (retriever == Retriever::nsp) nsp.emplace(std::move(b));
    else nn.emplace(std::move(b));
  }

  for (const Question* q : corpus.split_questions(split)) {
    const Lesson& lesson = corpus.lesson(q->lesson_id);
    for (int i = 0; i < static_cast<int>(q->options.size()); ++i) {
      Passage p;
      switch (retriever) {
        case Retriever::ir: p = ir->retrieve(*q, i); break;
        case Retriever::nsp: p = nsp_retrieve(*q, i, lesson, *nsp, config); break;
        case Retriever::nn: p = nn_retrieve(*q, i, lesson, *nn, config); break;
      }
      cache.put(std::move(p));
    }
  }
  cache.save(ws.passages_file(split, retriever), config);
}

FeatureStats run_features(const Corpus& corpus, const Workspace& ws, RoiSource source) {
  GridHistogramFeaturizer featurizer;
  auto dir = ws.features_dir();
  std::filesystem::create_directories(dir);
  {
    std::ofstream manifest(dir / "manifest.json");
    manifest << json{{"dim", kRoiFeatureDim}}.dump(2) << '\n';
  }

  std::set<std::string> seen;
  std::vector<DiagramRef> all;
  for (const auto& lesson : corpus.lessons()) {
    for (const auto& d : lesson.diagrams) {
      if (seen.insert(d.id).second) all.push_back(d);
    }
  }
  for (const auto& q : corpus.questions()) {
    if (q.diagram && seen.insert(q.diagram->id).second) all.push_back(*q.diagram);
  }

  FeatureStats stats;
  for (const auto& d : all) {
    Image image = load_png_gray(corpus.diagram_image(d));
    write_f32_vector(dir / (d.id + ".f32"), featurizer.featurize(image));

    RoISet rois = acquire_rois(corpus, d, source, featurizer);
    json boxes = json::array();
    for (size_t k = 0; k < rois.rois.size(); ++k) {
      const RoI& roi = rois.rois[k];
      boxes.push_back({{"bbox", {roi.bbox[0], roi.bbox[1], roi.bbox[2], roi.bbox[3]}},
                       {"confidence", roi.confidence}});
      write_f32_vector(dir / (d.id + "." + std::to_string(k) + ".f32"), roi.feature);
      ++stats.rois;
    }
    std::ofstream out(dir / (d.id + ".rois.json"));
    out << boxes.dump(2) << '\n';
    ++stats.diagrams;
  }
  return stats;
}

RoISet load_cached_rois(const Workspace& ws, const std::string& diagram_id) {
  auto dir = ws.features_dir();
  std::ifstream in(dir / (diagram_id + ".rois.json"));
  if (!in) {
    throw Error(ErrorCode::state, "missing RoI cache for diagram " + diagram_id +
                                      "; run the features command first");
  }
  json boxes;
  in >> boxes;
  RoISet set;
  set.diagram_id = diagram_id;
  for (size_t k = 0; k < boxes.size(); ++k) {
    RoI roi;
    for (int i = 0; i < 4; ++i) roi.bbox[static_cast<size_t>(i)] = boxes[k]["bbox"][i].get<double>();
    roi.confidence = boxes[k].value("confidence", 1.0);
    roi.feature = read_f32_vector(dir / (diagram_id + "." + std::to_string(k) + ".f32"),
                                  kRoiFeatureDim);
    set.rois.push_back(std::move(roi));
  }
  if (set.rois.empty()) {
    throw Error(ErrorCode::state, "empty RoI cache for diagram " + diagram_id);
  }
  return set;
}

RoI load_cached_whole_diagram(const Workspace& ws, const std::string& diagram_id) {
  RoI whole;
  whole.bbox = {0.0, 0.0, 1.0, 1.0};
  whole.confidence = 1.0;
  auto file = ws.features_dir() / (diagram_id + ".f32");
  if (!std::filesystem::exists(file)) {
    throw Error(ErrorCode::state, "missing global feature for diagram " + diagram_id +
                                      "; run the features command first");
  }
  whole.feature = read_f32_vector(file, kRoiFeatureDim);
  return whole;
}

std::vector<AnyExample> assemble_examples(const Corpus& corpus, const Workspace& ws,
                                          const TrainConfig& config, SplitName split,
                                          std::optional<QuestionKind> kind_override) {
  RetrieverConfig rconfig = default_retriever_config(config.retriever);
  PassageCache cache = PassageCache::load(ws.passages_file(split, config.retriever),
                                          config.retriever, rconfig.fingerprint());

  QuestionKind kind = kind_override.value_or(
      config.task == SolverTask::tf ? QuestionKind::true_false
      : config.task == SolverTask::text_mc ? QuestionKind::text_mc
                                           : QuestionKind::diagram_mc);

  // sentence text lookup for per-sentence premises
  std::map<std::string, const std::string*> sentence_text;
  if (config.premise_mode == "per_sentence_max") {
    for (const auto& lesson : corpus.lessons()) {
      for (const auto& s : lesson.sentences) sentence_text.emplace(s.id, &s.text);
    }
  }

  std::optional<PrecomputedFeatureSource> feature_source;

  std::vector<AnyExample> out;
  for (const Question* q : corpus.split_questions(split)) {
    if (q->kind != kind) continue;

    auto passage_text = [&](int option) -> std::string {
      const Passage* p = cache.find(q->id, option);
      if (!p) {
        throw Error(ErrorCode::state,
                    "passage cache has no entry for question " + q->id + " option " +
                        std::to_string(option) + "; re-run the retrieve command");
      }
      return p->text;
    };

    switch (config.task) {
      case SolverTask::tf: {
        TfExample ex;
        ex.question = q;
        const Passage* p = cache.find(q->id, 0);
        if (!p) {
          throw Error(ErrorCode::state, "passage cache has no entry for question " + q->id +
                                            "; re-run the retrieve command");
        }
        ex.premise_text = p->text;
        if (config.premise_mode == "per_sentence_max") {
          for (const auto& [sid, score] : p->sentences) {
            auto it = sentence_text.find(sid);
            if (it != sentence_text.end()) ex.premise_sentences.push_back(*it->second);
          }
        }
        out.emplace_back(std::move(ex));
        break;
      }
      case SolverTask::text_mc: {
        TextMcExample ex;
        ex.question = q;
        for (int i = 0; i < static_cast<int>(q->options.size()); ++i) {
          ex.passages.push_back(passage_text(i));
        }
        out.emplace_back(std::move(ex));
        break;
      }
      case SolverTask::diagram_mc: {
        DiagramMcExample ex;
        ex.question = q;
        for (int i = 0; i < static_cast<int>(q->options.size()); ++i) {
          ex.passages.push_back(passage_text(i));
        }
        ex.rois = load_cached_rois(ws, q->diagram->id);
        if (static_cast<int>(ex.rois.rois.size()) > config.roi_cap) {
          ex.rois.rois.resize(static_cast<size_t>(config.roi_cap));
        }
        ex.whole_diagram = load_cached_whole_diagram(ws, q->diagram->id);
        if (config.use_background_diagram || config.variant == DiagramVariant::visual_bg) {
          if (!feature_source) feature_source.emplace(ws.features_dir());
          auto background =
              diagram_retrieve(corpus, *q->diagram, corpus.lesson(q->lesson_id), *feature_source);
          if (background) {
            ex.whole_background = load_cached_whole_diagram(ws, background->id);
            ex.background_rois = load_cached_rois(ws, background->id);
          }
        }
        out.emplace_back(std::move(ex));
        break;
      }
    }
  }
  return out;
}

std::unique_ptr<Solver> build_solver(const TrainConfig& config, const Vocab& vocab,
                                     const std::string& id_override) {
  config.validate();
  EncoderSpec spec = config.encoder_spec(vocab.size());
  std::string id = id_override.empty()
                       ? std::string(solver_task_name(config.task)) + "_" +
                             retriever_name(config.retriever)
                       : id_override;
  switch (config.task) {
    case SolverTask::tf: {
      auto mode = config.premise_mode == "per_sentence_max"
                      ? TfSolver::PremiseMode::per_sentence_max
                      : TfSolver::PremiseMode::passage;
      return std::make_unique<TfSolver>(id, spec, vocab, config.max_len, mode, config.seed);
    }
    case SolverTask::text_mc:
      return std::make_unique<TextMcSolver>(id, spec, vocab, config.max_len, config.seed);
    case SolverTask::diagram_mc:
      return std::make_unique<DiagramMcSolver>(id, spec, vocab, config.max_len,
                                               config.variant, kRoiFeatureDim, config.seed);
  }
  throw Error(ErrorCode::internal, "unreachable");
}

// ---------------------------------------------------------------------------
// Training.

double accuracy(Solver& solver, const std::vector<AnyExample>& examples) {
  if (examples.empty()) return 0.0;
  int correct = 0;
  for (const auto& ex : examples) {
    SolverScores s = solver.score(ex);
    if (s.predicted == example_question(ex)->answer_index) ++correct;
  }
  return static_cast<double>(correct) / examples.size();
}

TrainResult train(const TrainConfig& config, Solver& solver,
                  const std::vector<AnyExample>& train_examples,
                  const std::vector<AnyExample>& val_examples,
                  const std::filesystem::path& checkpoint_out) {
  config.validate();
  if (train_examples.empty()) {
    throw Error(ErrorCode::config, "no training examples for task " +
                                       std::string(solver_task_name(config.task)));
  }

  std::mt19937_64 rng(config.seed);
  Adam adam;
  long steps_per_epoch =
      (static_cast<long>(train_examples.size()) + config.batch_size - 1) / config.batch_size;
  long total_steps = steps_per_epoch * config.epochs;

  TrainResult result;
  ParamStore best_params = solver.params();
  double best_acc = -1.0;
  int best_epoch = 0;

  std::vector<size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t end = std::min(order.size(), start + config.batch_size);
      ad::Graph g;
      ad::Var total;
      for (size_t k = start; k < end; ++k) {
        ad::Var loss = solver.loss_graph(g, train_examples[order[k]], RunMode::train, rng);
        total = (k == start) ? loss : g.add(total, loss);
      }
      ad::Var mean = g.scale(total, 1.0 / static_cast<double>(end - start));
      solver.params().zero_grads();
      g.backward(mean);
      epoch_loss += g.value(mean)(0, 0) * static_cast<double>(end - start);
      ++step;
      adam.step(solver.params().all(), lr_schedule(step, total_steps, config.warmup_fraction,
                                                   config.peak_lr));
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train_examples.size());
    log.val_accuracy = accuracy(solver, val_examples.empty() ? train_examples : val_examples);
    result.epochs.push_back(log);

    if (log.val_accuracy > best_acc) {
      best_acc = log.val_accuracy;
      best_epoch = epoch;
      best_params = solver.params();
    }
  }

  if (config.epochs > 0) {
    // leave the solver holding the best-epoch parameters
    for (Tensor* t : solver.params().all()) t->value = best_params.at(t->name).value;
  } else {
    best_acc = accuracy(solver, val_examples.empty() ? train_examples : val_examples);
  }
  result.best_epoch = best_epoch;
  result.best_val_accuracy = std::max(best_acc, 0.0);
  result.checkpoint_dir = checkpoint_out;

  if (!checkpoint_out.empty()) {
    solver.save(checkpoint_out);
    json metrics;
    metrics["best_epoch"] = result.best_epoch;
    metrics["best_val_accuracy"] = result.best_val_accuracy;
    json epochs = json::array();
    for (const auto& log : result.epochs) {
      epochs.push_back({{"epoch", log.epoch},
                        {"train_loss", log.train_loss},
                        {"val_accuracy", log.val_accuracy}});
    }
    metrics["epochs"] = std::move(epochs);
    std::ofstream out(checkpoint_out / "metrics.json");
    out << metrics.dump(2) << '\n';
  }
  return result;
}

std::vector<TrainResult> multi_stage_finetune(const std::vector<FinetuneStage>& stages,
                                              Solver& solver,
                                              const std::filesystem::path& out_dir) {
  // reject everything up front so no stage trains on a mismatched schema
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].config.task != solver.task()) {
      throw Error(ErrorCode::config,
                  "stage " + std::to_string(i) + " trains task " +
                      solver_task_name(stages[i].config.task) + " but the solver is " +
                      solver_task_name(solver.task()));
    }
    for (const auto& ex : stages[i].train) {
      bool ok = (solver.task() == SolverTask::tf && std::holds_alternative<TfExample>(ex)) ||
                (solver.task() == SolverTask::text_mc &&
                 std::holds_alternative<TextMcExample>(ex)) ||
                (solver.task() == SolverTask::diagram_mc &&
                 std::holds_alternative<DiagramMcExample>(ex));
      if (!ok) {
        throw Error(ErrorCode::config,
                    "stage " + std::to_string(i) + " holds examples of the wrong schema");
      }
    }
  }

  std::vector<TrainResult> results;
  for (size_t i = 0; i < stages.size(); ++i) {
    auto ckpt = out_dir.empty() ? std::filesystem::path{}
                                : out_dir / ("stage" + std::to_string(i));
    results.push_back(train(stages[i].config, solver, stages[i].train, stages[i].val, ckpt));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Evaluation.

EvalReport evaluate_predictions(const Corpus& corpus,
                                const std::vector<const Question*>& questions,
                                const std::map<std::string, std::map<std::string, int>>& predictions,
                                const std::string& split_label_text) {
  if (questions.empty()) throw Error(ErrorCode::config, "empty split, nothing to evaluate");

  EvalReport report;
  report.split = split_label_text;
  for (const auto& [solver_id, preds] : predictions) {
    EvalRow row;
    row.solver_id = solver_id;
    for (const Question* q : questions) {
      auto it = preds.find(q->id);
      if (it == preds.end()) continue;
      bool correct = it->second == q->answer_index;
      auto bump = [correct](EvalCell& cell) {
        cell.total++;
        if (correct) cell.correct++;
      };
      bump(row.overall);
      bump(row.by_kind[question_kind_name(q->kind)]);
      bump(row.by_subject[subject_name(corpus.lesson(q->lesson_id).subject)]);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["split"] = split;
  json rows_j = json::array();
  for (const auto& row : rows) {
    json r;
    r["solver_id"] = row.solver_id;
    r["overall"] = {{"correct", row.overall.correct},
                    {"total", row.overall.total},
                    {"accuracy", row.overall.pct()}};
    json kinds = json::object(), subjects = json::object();
    for (const auto& [k, cell] : row.by_kind) {
      kinds[k] = {{"correct", cell.correct}, {"total", cell.total}, {"accuracy", cell.pct()}};
    }
    for (const auto& [s, cell] : row.by_subject) {
      subjects[s] = {{"correct", cell.correct}, {"total", cell.total}, {"accuracy", cell.pct()}};
    }
    r["by_kind"] = std::move(kinds);
    r["by_subject"] = std::move(subjects);
    rows_j.push_back(std::move(r));
  }
  j["rows"] = std::move(rows_j);
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::string out = "solver,overall_accuracy,overall_correct,overall_total";
  std::vector<std::string> kinds, subjects;
  for (const auto& row : rows) {
    for (const auto& [k, _] : row.by_kind) {
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
    for (const auto& [s, _] : row.by_subject) {
      if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
    }
  }
  for (const auto& k : kinds) out += "," + k;
  for (const auto& s : subjects) out += "," + s;
  out += "\n";
  char buf[64];
  for (const auto& row : rows) {
    out += row.solver_id;
    std::snprintf(buf, sizeof(buf), ",%.2f,%d,%d", row.overall.pct(), row.overall.correct,
                  row.overall.total);
    out += buf;
    for (const auto& k : kinds) {
      auto it = row.by_kind.find(k);
      std::snprintf(buf, sizeof(buf), ",%.2f", it == row.by_kind.end() ? 0.0 : it->second.pct());
      out += buf;
    }
    for (const auto& s : subjects) {
      auto it = row.by_subject.find(s);
      std::snprintf(buf, sizeof(buf), ",%.2f",
                    it == row.by_subject.end() ? 0.0 : it->second.pct());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

Retriever retriever_from_solver_id(const std::string& id, Retriever fallback) {
  for (Retriever r : {Retriever::ir, Retriever::nsp, Retriever::nn}) {
    std::string suffix = std::string("_") + retriever_name(r);
    if (id.size() >= suffix.size() &&
        id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return r;
    }
  }
  return fallback;
}

std::vector<SolverScores> solve_split(const Corpus& corpus, const Workspace& ws,
                                      Solver& solver, SplitName split,
                                      std::optional<QuestionKind> kind_override) {
  TrainConfig config;
  config.task = solver.task();
  config.max_len = solver.max_len();
  if (auto* dmc = dynamic_cast<DiagramMcSolver*>(&solver)) config.variant = dmc->variant();
  config.retriever = retriever_from_solver_id(solver.id());
  std::vector<AnyExample> examples = assemble_examples(corpus, ws, config, split, kind_override);
  std::vector<SolverScores> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(solver.score(ex));
  return out;
}

// ---------------------------------------------------------------------------
// Ablations.

std::vector<DiagramVariant> parse_ablation_plan(const std::string& plan) {
  std::vector<DiagramVariant> out;
  if (plan.empty() || plan == "all") {
    return {DiagramVariant::text_only, DiagramVariant::visual, DiagramVariant::visual_bg,
            DiagramVariant::bu, DiagramVariant::butd};
  }
  std::string token;
  std::stringstream ss(plan);
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(diagram_variant_from_name(token));
  }
  if (out.empty()) throw Error(ErrorCode::config, "empty ablation plan");
  return out;
}

EvalReport ablate(const Corpus& corpus, const Workspace& ws,
                  const std::vector<DiagramVariant>& plan, const TrainConfig& base_config) {
  Vocab vocab = vocab_from_corpus(corpus);
  std::map<std::string, std::map<std::string, int>> predictions;
  std::vector<std::string> row_order;

  for (DiagramVariant variant : plan) {
    TrainConfig config = base_config;
    config.task = SolverTask::diagram_mc;
    config.variant = variant;
    std::string label = diagram_variant_report_label(variant);

    auto solver = build_solver(config, vocab, std::string("ablate:") + label);
    auto train_examples = assemble_examples(corpus, ws, config, SplitName::train);
    auto val_examples = assemble_examples(corpus, ws, config, SplitName::validation);
    train(config, *solver, train_examples, val_examples, {});

    std::map<std::string, int> preds;
    for (const auto& ex : val_examples) {
      SolverScores s = solver->score(ex);
      preds[s.question_id] = s.predicted;
    }
    predictions[label] = std::move(preds);
    row_order.push_back(label);
  }

  EvalReport report = evaluate_predictions(
      corpus, corpus.split_questions(SplitName::validation), predictions, "validation");
  // evaluate_predictions emits rows in map order; restore plan order
  std::vector<EvalRow> ordered;
  for (const auto& label : row_order) {
    for (auto& row : report.rows) {
      if (row.solver_id == label) ordered.push_back(std::move(row));
    }
  }
  report.rows = std::move(ordered);
  return report;
}

// ---------------------------------------------------------------------------
// Attention export.

std::filesystem::path export_attention(const Corpus& corpus, const Workspace& ws,
                                       DiagramMcSolver& solver,
                                       const std::string& question_id,
                                       const std::filesystem::path& out_prefix,
                                       bool render_heatmaps) {
  const Question& q = corpus.question(question_id);
  if (q.kind != QuestionKind::diagram_mc || !q.diagram) {
    throw Error(ErrorCode::validation, "question " + question_id + " has no diagram");
  }

  TrainConfig assemble_config;
  assemble_config.task = SolverTask::diagram_mc;
  assemble_config.variant = solver.variant();
  assemble_config.max_len = solver.max_len();
  assemble_config.retriever = retriever_from_solver_id(solver.id());
  std::vector<AnyExample> examples;
  SplitName home = SplitName::train;
  for (SplitName split : {SplitName::train, SplitName::validation, SplitName::test}) {
    if (corpus.split(split).lesson_ids.count(q.lesson_id)) home = split;
  }
  examples = assemble_examples(corpus, ws, assemble_config, home);
  const DiagramMcExample* target = nullptr;
  for (const auto& ex : examples) {
    const auto* dmc = std::get_if<DiagramMcExample>(&ex);
    if (dmc && dmc->question->id == question_id) {
      target = dmc;
      break;
    }
  }
  if (!target) {
    throw Error(ErrorCode::not_found,
                "question " + question_id + " not found among assembled diagram examples");
  }

  auto attn = solver.attention(*target);
  json j;
  j["question_id"] = question_id;
  json options = json::array();
  for (Eigen::Index i = 0; i < attn.alpha.rows(); ++i) {
    json bboxes = json::array(), alpha = json::array();
    for (size_t b = 0; b < attn.bboxes.size(); ++b) {
      const auto& box = attn.bboxes[b];
      bboxes.push_back({box[0], box[1], box[2], box[3]});
      alpha.push_back(attn.alpha(i, static_cast<Eigen::Index>(b)));
    }
    options.push_back({{"option_index", i}, {"bboxes", bboxes}, {"alpha", alpha}});
  }
  j["options"] = std::move(options);

  std::filesystem::path json_path = out_prefix;
  json_path += ".attention.json";
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  std::ofstream out(json_path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + json_path.string());
  out << j.dump(2) << '\n';

  if (render_heatmaps && attn.alpha.size() > 0) {
    Image base = load_png_gray(corpus.diagram_image(*q.diagram));
    double amax = std::max(attn.alpha.maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < attn.alpha.rows(); ++i) {
      Image heat = base;
      for (int y = 0; y < heat.height; ++y) {
        for (int x = 0; x < heat.width; ++x) {
          double nx = (x + 0.5) / heat.width, ny = (y + 0.5) / heat.height;
          double weight = 0.0;
          for (size_t b = 0; b < attn.bboxes.size(); ++b) {
            const auto& box = attn.bboxes[b];
            if (nx >= box[0] && nx <= box[2] && ny >= box[1] && ny <= box[3]) {
              weight = std::max(weight, attn.alpha(i, static_cast<Eigen::Index>(b)) / amax);
            }
          }
          heat.at(x, y) = 0.35 * heat.at(x, y) + 0.65 * (1.0 - weight);
        }
      }
      std::filesystem::path png_path = out_prefix;
      png_path += ".opt" + std::to_string(i) + ".png";
      save_png_gray(png_path, heat);
    }
  }
  return json_path;
}

}  // namespace isaaq
