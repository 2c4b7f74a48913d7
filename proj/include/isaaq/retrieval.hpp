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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isaaq/corpus.hpp"
#include "isaaq/text.hpp"
#include "isaaq/vision.hpp"

namespace isaaq {

enum class Retriever { ir, nsp, nn };
const char* retriever_name(Retriever r);
Retriever retriever_from_name(const std::string& name);

enum class RetrievalScope { whole_corpus, lesson_only };

struct RetrieverConfig {
  int n = 10;  // sentence budget per passage
  RetrievalScope scope = RetrievalScope::whole_corpus;
  std::set<std::string> stopword_list = english_stopwords();

  void validate() const;
  // Fingerprint of everything that changes retrieval output; cache files
  // carry it so stale caches are rejected instead of silently reused.
  std::string fingerprint() const;
};

// Ranked background sentences for one (question, option).
struct Passage {
  std::vector<std::pair<std::string, double>> sentences;  // (sentence_id, score), rank order
  std::string text;  // member texts joined with single spaces, rank order
  Retriever retriever = Retriever::ir;
  std::string question_id;
  int option_index = 0;

  bool empty() const { return sentences.empty(); }
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// BM25 (k1=1.2, b=0.75) over lowercased, punctuation-stripped, stopword-
// filtered sentence tokens. idf = ln(1 + (N - df + 0.5)/(df + 0.5)); query
// terms are deduplicated.
class Bm25Index {
 public:
  Bm25Index(const Corpus& corpus, const std::set<std::string>& stopwords);

  struct Hit {
    size_t doc = 0;  // index into docs()
    double score = 0.0;
  };
  // All documents with nonzero score for the query terms.
  std::vector<Hit> query(const std::vector<std::string>& terms) const;

  struct Doc {
    const Lesson* lesson;
    const Sentence* sentence;
  };
  const std::vector<Doc>& docs() const { return docs_; }

  static constexpr double kK1 = 1.2;
  static constexpr double kB = 0.75;

 private:
  std::vector<Doc> docs_;
  std::vector<int> doc_len_;
  double avgdl_ = 0.0;
  std::map<std::string, std::vector<std::pair<size_t, int>>> postings_;  // term -> (doc, tf)
};

// Whole-corpus lexical retriever. Eligibility: a sentence must share at
// least one non-stop token with the option text.
class IrRetriever {
 public:
  IrRetriever(const Corpus& corpus, RetrieverConfig config);

  Passage retrieve(const Question& q, int option_index) const;
  // BM25 score of the best eligible hit; 0 when nothing is eligible.
  double top_hit_score(const Question& q, int option_index) const;

 private:
  const Corpus& corpus_;
  RetrieverConfig config_;
  Bm25Index index_;
};

Passage ir_retrieve(const Question& q, int option_index, const Corpus& corpus,
                    const RetrieverConfig& config);

// Probability that `second` follows from `first`. Implementations must hold
// frozen parameters: retrieval never trains the scorer.
class NextSentenceScorer {
 public:
  virtual ~NextSentenceScorer() = default;
  virtual double is_next_prob(const std::string& first, const std::string& second) const = 0;
};

Passage nsp_retrieve(const Question& q, int option_index, const Lesson& lesson,
                     const NextSentenceScorer& scorer, const RetrieverConfig& config);

class PooledEmbedder {
 public:
  virtual ~PooledEmbedder() = default;
  virtual Eigen::VectorXd embed(const std::string& text) const = 0;
};

Passage nn_retrieve(const Question& q, int option_index, const Lesson& lesson,
                    const PooledEmbedder& embedder, const RetrieverConfig& config);

// Lesson diagram whose global feature is closest (cosine) to the question
// diagram's. Ties resolve to the lowest diagram index. nullopt when the
// lesson has no diagrams.
std::optional<DiagramRef> diagram_retrieve(const Corpus& corpus,
                                           const DiagramRef& question_diagram,
                                           const Lesson& lesson,
                                           const DiagramFeatureSource& features);

// JSON-lines passage cache, one file per (split, retriever). Records are
// {question_id, option_index, sentence_ids, scores, text}; a sidecar meta
// file carries the config fingerprint.
class PassageCache {
 public:
  void put(Passage passage);
  const Passage* find(const std::string& question_id, int option_index) const;
  size_t size() const { return entries_.size(); }

  // Writes file + sidecar atomically (temp file, then rename).
  void save(const std::filesystem::path& file, const RetrieverConfig& config) const;
  static PassageCache load(const std::filesystem::path& file, Retriever retriever,
                           const std::optional<std::string>& expected_fingerprint = {});

 private:
  std::map<std::pair<std::string, int>, Passage> entries_;
};

}  // namespace isaaq
