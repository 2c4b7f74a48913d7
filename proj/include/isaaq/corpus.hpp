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

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace isaaq {

enum class Subject { life, earth, physical };
enum class QuestionKind { true_false, text_mc, diagram_mc };
enum class SplitName { train, validation, test };

const char* subject_name(Subject s);
Subject subject_from_name(const std::string& name);
const char* question_kind_name(QuestionKind k);
QuestionKind question_kind_from_name(const std::string& name);
const char* split_label(SplitName s);
SplitName split_from_label(const std::string& label);

// A diagram is identified by id; the files live at diagrams/<id>.png and
// diagrams/<id>.boxes.json under the dataset root.
struct DiagramRef {
  std::string id;
  bool operator==(const DiagramRef&) const = default;
};

struct Sentence {
  std::string id;
  std::string text;
  int position = 0;  // 0-based index within the lesson
  bool operator==(const Sentence&) const = default;
};

struct Lesson {
  std::string id;
  Subject subject = Subject::life;
  std::vector<Sentence> sentences;
  std::vector<DiagramRef> diagrams;
  bool operator==(const Lesson&) const = default;
};

struct Question {
  std::string id;
  QuestionKind kind = QuestionKind::text_mc;
  std::string stem;
  std::vector<std::string> options;
  int answer_index = 0;
  std::string lesson_id;
  std::optional<DiagramRef> diagram;  // present iff kind == diagram_mc
  bool operator==(const Question&) const = default;
};

struct DatasetSplit {
  SplitName name = SplitName::train;
  std::set<std::string> lesson_ids;
  bool operator==(const DatasetSplit&) const = default;
};

// Immutable after load; safe for concurrent readers.
class Corpus {
 public:
  // Reads corpus.json / questions.json / splits.json under root and runs
  // full validation. Throws Error(validation) naming the offending record.
  static Corpus load(const std::filesystem::path& root);

  // In-memory construction for fixtures and converters. File-existence
  // checks for diagrams only run when root is non-empty.
  static Corpus from_parts(std::vector<Lesson> lessons,
                           std::vector<Question> questions,
                           std::array<DatasetSplit, 3> splits,
                           std::filesystem::path root = {});

  // Writes the three schema files back under root. Reloading yields a
  // structurally identical corpus.
  void save(const std::filesystem::path& root) const;

  const std::vector<Lesson>& lessons() const { return lessons_; }
  const std::vector<Question>& questions() const { return questions_; }
  const std::array<DatasetSplit, 3>& splits() const { return splits_; }
  const DatasetSplit& split(SplitName name) const;

  const Lesson& lesson(const std::string& id) const;
  const Question& question(const std::string& id) const;
  const Lesson& lesson_of(const std::string& question_id) const;

  std::vector<const Question*> split_questions(SplitName name) const;
  std::vector<const Question*> lesson_questions(const std::string& lesson_id) const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path diagram_image(const DiagramRef& d) const;
  std::filesystem::path diagram_boxes(const DiagramRef& d) const;

  bool structurally_equal(const Corpus& other) const;

 private:
  Corpus() = default;
  void index();
  void validate() const;

  std::filesystem::path root_;
  std::vector<Lesson> lessons_;
  std::vector<Question> questions_;
  std::array<DatasetSplit, 3> splits_;
  std::unordered_map<std::string, size_t> lesson_index_;
  std::unordered_map<std::string, size_t> question_index_;
};

struct ConvertStats {
  int lessons = 0;
  int sentences = 0;
  int questions = 0;
  int skipped_questions = 0;  // unsupported raw question types
};

// One-shot converter from the raw TQA release layout (tqa_v1_*.json lesson
// arrays) to the normalized schema. `raw` may be a single release file or a
// directory that is scanned for *.json release files. Subjects are not part
// of the release lesson records; they come from `subject_map` (lesson id ->
// subject name) with `default_subject` as fallback.
ConvertStats convert_tqa_release(const std::filesystem::path& raw,
                                 const std::filesystem::path& out_root,
                                 const std::string& default_subject = "life",
                                 const std::filesystem::path& subject_map = {});

}  // namespace isaaq
