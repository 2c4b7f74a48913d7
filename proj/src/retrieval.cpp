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

#include "isaaq/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

const char* retriever_name(Retriever r) {
  switch (r) {
    case Retriever::ir: return "ir";
    case Retriever::nsp: return "nsp";
    case Retriever::nn: return "nn";
  }
  return "ir";
}

Retriever retriever_from_name(const std::string& name) {
  if (name == "ir") return Retriever::ir;
  if (name == "nsp") return Retriever::nsp;
  if (name == "nn") return Retriever::nn;
  throw Error(ErrorCode::config, "unknown retriever: '" + name + "'");
}

void RetrieverConfig::validate() const {
  if (n < 1) throw Error(ErrorCode::config, "retriever budget n must be >= 1");
}

std::string RetrieverConfig::fingerprint() const {
  std::string blob = "n=" + std::to_string(n) +
                     ";scope=" + (scope == RetrievalScope::whole_corpus ? "corpus" : "lesson");
  blob += ";stop=";
  for (const auto& w : stopword_list) {
    blob += w;
    blob += ',';
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016zx", std::hash<std::string>{}(blob));
  return buf;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::config, "cosine over vectors of different lengths");
  }
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return -1.0;  // degenerate, sorts last
  return a.dot(b) / (na * nb);
}

namespace {

std::vector<std::string> content_tokens(const std::string& text,
                                        const std::set<std::string>& stopwords) {
  std::vector<std::string> out;
  for (auto& tok : tokenize(text)) {
    if (!stopwords.count(tok)) out.push_back(std::move(tok));
  }
  return out;
}

// Rank ties: sentence position, then lexicographic sentence id.
struct Ranked {
  double score;
  int position;
  const std::string* id;
  const std::string* text;
};

void sort_ranked(std::vector<Ranked>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.position != b.position) return a.position < b.position;
    return *a.id < *b.id;
  });
}

Passage passage_from_ranked(std::vector<Ranked> rows, int n, Retriever retriever,
                            const Question& q, int option_index) {
  sort_ranked(rows);
  if (static_cast<int>(rows.size()) > n) rows.resize(static_cast<size_t>(n));
  Passage p;
  p.retriever = retriever;
  p.question_id = q.id;
  p.option_index = option_index;
  for (const auto& row : rows) {
    if (!p.text.empty()) p.text += ' ';
    p.text += *row.text;
    p.sentences.emplace_back(*row.id, row.score);
  }
  return p;
}

void check_option(const Question& q, int option_index) {
  if (option_index < 0 || option_index >= static_cast<int>(q.options.size())) {
    throw Error(ErrorCode::config, "option index " + std::to_string(option_index) +
                                       " out of range for question " + q.id);
  }
}

}  // namespace

Bm25Index::Bm25Index(const Corpus& corpus, const std::set<std::string>& stopwords) {
  long total_len = 0;
  for (const auto& lesson : corpus.lessons()) {
    for (const auto& sentence : lesson.sentences) {
      size_t doc = docs_.size();
      docs_.push_back({&lesson, &sentence});
      std::map<std::string, int> tf;
      for (auto& tok : content_tokens(sentence.text, stopwords)) tf[tok]++;
      int len = 0;
      for (const auto& [term, count] : tf) {
        postings_[term].emplace_back(doc, count);
        len += count;
      }
      doc_len_.push_back(len);
      total_len += len;
    }
  }
  avgdl_ = docs_.empty() ? 0.0 : static_cast<double>(total_len) / docs_.size();
}

std::vector<Bm25Index::Hit> Bm25Index::query(const std::vector<std::string>& terms) const {
  std::set<std::string> unique(terms.begin(), terms.end());
  std::map<size_t, double> acc;
  double n_docs = static_cast<double>(docs_.size());
  for (const auto& term : unique) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    double df = static_cast<double>(it->second.size());
    double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& [doc, tf] : it->second) {
      double norm = kK1 * (1.0 - kB + kB * doc_len_[doc] / std::max(avgdl_, 1e-9));
      acc[doc] += idf * (tf * (kK1 + 1.0)) / (tf + norm);
    }
  }
  std::vector<Hit> hits;
  hits.reserve(acc.size());
  for (const auto& [doc, score] : acc) hits.push_back({doc, score});
  return hits;
}

IrRetriever::IrRetriever(const Corpus& corpus, RetrieverConfig config)
    : corpus_(corpus), config_(std::move(config)), index_(corpus, config_.stopword_list) {
  config_.validate();
  if (config_.scope != RetrievalScope::whole_corpus) {
    throw Error(ErrorCode::config, "the lexical retriever searches the whole corpus");
  }
}

Passage IrRetriever::retrieve(const Question& q, int option_index) const {
  check_option(q, option_index);
  const std::string& option = q.options[static_cast<size_t>(option_index)];

  std::set<std::string> option_terms;
  for (auto& tok : content_tokens(option, config_.stopword_list)) {
    option_terms.insert(std::move(tok));
  }

  std::vector<std::string> query_terms = content_tokens(q.stem, config_.stopword_list);
  query_terms.insert(query_terms.end(), option_terms.begin(), option_terms.end());

  std::vector<Ranked> rows;
  if (!option_terms.empty()) {
    for (const auto& hit : index_.query(query_terms)) {
      const auto& doc = index_.docs()[hit.doc];
      bool eligible = false;
      for (const auto& tok : content_tokens(doc.sentence->text, config_.stopword_list)) {
        if (option_terms.count(tok)) {
          eligible = true;
          break;
        }
      }
      if (!eligible) continue;
      rows.push_back({hit.score, doc.sentence->position, &doc.sentence->id, &doc.sentence->text});
    }
  }
  return passage_from_ranked(std::move(rows), config_.n, Retriever::ir, q, option_index);
}

double IrRetriever::top_hit_score(const Question& q, int option_index) const {
  Passage p = retrieve(q, option_index);
  return p.sentences.empty() ? 0.0 : p.sentences.front().second;
}

Passage ir_retrieve(const Question& q, int option_index, const Corpus& corpus,
                    const RetrieverConfig& config) {
  return IrRetriever(corpus, config).retrieve(q, option_index);
}

Passage nsp_retrieve(const Question& q, int option_index, const Lesson& lesson,
                     const NextSentenceScorer& scorer, const RetrieverConfig& config) {
  config.validate();
  if (config.scope != RetrievalScope::lesson_only) {
    throw Error(ErrorCode::config, "transformer retrievers focus on the question's lesson");
  }
  check_option(q, option_index);
  std::string first = q.stem + " " + q.options[static_cast<size_t>(option_index)];
  std::vector<Ranked> rows;
  for (const auto& sentence : lesson.sentences) {
    double score = scorer.is_next_prob(first, sentence.text);
    rows.push_back({score, sentence.position, &sentence.id, &sentence.text});
  }
  return passage_from_ranked(std::move(rows), config.n, Retriever::nsp, q, option_index);
}

Passage nn_retrieve(const Question& q, int option_index, const Lesson& lesson,
                    const PooledEmbedder& embedder, const RetrieverConfig& config) {
  config.validate();
  if (config.scope != RetrievalScope::lesson_only) {
    throw Error(ErrorCode::config, "transformer retrievers focus on the question's lesson");
  }
  check_option(q, option_index);
  Eigen::VectorXd anchor =
      embedder.embed(q.stem + " " + q.options[static_cast<size_t>(option_index)]);
  std::vector<Ranked> rows;
  for (const auto& sentence : lesson.sentences) {
    Eigen::VectorXd v = embedder.embed(sentence.text);
    double score = cosine_similarity(anchor, v);  // zero-norm embeddings score -1
    rows.push_back({score, sentence.position, &sentence.id, &sentence.text});
  }
  return passage_from_ranked(std::move(rows), config.n, Retriever::nn, q, option_index);
}

std::optional<DiagramRef> diagram_retrieve(const Corpus& corpus,
                                           const DiagramRef& question_diagram,
                                           const Lesson& lesson,
                                           const DiagramFeatureSource& features) {
  if (lesson.diagrams.empty()) return std::nullopt;
  Eigen::VectorXd anchor = features.global_feature(corpus, question_diagram);
  int best = 0;
  double best_score = -2.0;
  for (size_t i = 0; i < lesson.diagrams.size(); ++i) {
    double score = cosine_similarity(anchor, features.global_feature(corpus, lesson.diagrams[i]));
    if (score > best_score) {  // ties keep the lowest index
      best_score = score;
      best = static_cast<int>(i);
    }
  }
  return lesson.diagrams[static_cast<size_t>(best)];
}

void PassageCache::put(Passage passage) {
  entries_[{passage.question_id, passage.option_index}] = std::move(passage);
}

const Passage* PassageCache::find(const std::string& question_id, int option_index) const {
  auto it = entries_.find({question_id, option_index});
  return it == entries_.end() ? nullptr : &it->second;
}

void PassageCache::save(const std::filesystem::path& file,
                        const RetrieverConfig& config) const {
  std::filesystem::create_directories(file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    for (const auto& [key, p] : entries_) {
      json rec;
      rec["question_id"] = p.question_id;
      rec["option_index"] = p.option_index;
      json ids = json::array(), scores = json::array();
      for (const auto& [sid, score] : p.sentences) {
        ids.push_back(sid);
        scores.push_back(score);
      }
      rec["sentence_ids"] = std::move(ids);
      rec["scores"] = std::move(scores);
      rec["text"] = p.text;
      out << rec.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, file);

  auto meta_tmp = file;
  meta_tmp += ".meta.json.tmp";
  {
    std::ofstream out(meta_tmp);
    out << json{{"fingerprint", config.fingerprint()}, {"n", config.n}}.dump(2) << '\n';
  }
  auto meta = file;
  meta += ".meta.json";
  std::filesystem::rename(meta_tmp, meta);
}

PassageCache PassageCache::load(const std::filesystem::path& file, Retriever retriever,
                                const std::optional<std::string>& expected_fingerprint) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorCode::state, "missing passage cache " + file.string() +
                                      "; run the retrieve command first");
  }
  if (expected_fingerprint) {
    auto meta_path = file;
    meta_path += ".meta.json";
    std::ifstream meta(meta_path);
    if (!meta) {
      throw Error(ErrorCode::state, "missing cache meta " + meta_path.string() +
                                        "; re-run the retrieve command");
    }
    json mj;
    meta >> mj;
    if (mj.value("fingerprint", "") != *expected_fingerprint) {
      throw Error(ErrorCode::state,
                  "passage cache " + file.string() +
                      " was built with a different retriever config; re-run retrieve");
    }
  }

  PassageCache cache;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::io, "bad cache record at " + file.string() + ":" +
                                     std::to_string(line_no) + ": " + e.what());
    }
    Passage p;
    p.retriever = retriever;
    p.question_id = rec.at("question_id").get<std::string>();
    p.option_index = rec.at("option_index").get<int>();
    auto ids = rec.at("sentence_ids");
    auto scores = rec.at("scores");
    for (size_t i = 0; i < ids.size(); ++i) {
      p.sentences.emplace_back(ids[i].get<std::string>(), scores[i].get<double>());
    }
    p.text = rec.at("text").get<std::string>();
    cache.put(std::move(p));
  }
  return cache;
}

}  // namespace isaaq
