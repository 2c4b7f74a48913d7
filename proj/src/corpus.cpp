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

#include "isaaq/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io, "cannot open " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, "malformed JSON in " + file.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::io, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

}  // namespace

const char* subject_name(Subject s) {
  switch (s) {
    case Subject::life: return "life";
    case Subject::earth: return "earth";
    case Subject::physical: return "physical";
  }
  return "life";
}

Subject subject_from_name(const std::string& name) {
  if (name == "life") return Subject::life;
  if (name == "earth") return Subject::earth;
  if (name == "physical") return Subject::physical;
  throw Error(ErrorCode::validation, "unknown subject: '" + name + "'");
}

const char* question_kind_name(QuestionKind k) {
  switch (k) {
    case QuestionKind::true_false: return "true_false";
    case QuestionKind::text_mc: return "text_mc";
    case QuestionKind::diagram_mc: return "diagram_mc";
  }
  return "text_mc";
}

QuestionKind question_kind_from_name(const std::string& name) {
  if (name == "true_false") return QuestionKind::true_false;
  if (name == "text_mc") return QuestionKind::text_mc;
  if (name == "diagram_mc") return QuestionKind::diagram_mc;
  throw Error(ErrorCode::validation, "unknown question kind: '" + name + "'");
}

const char* split_label(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
  }
  return "train";
}

SplitName split_from_label(const std::string& label) {
  if (label == "train") return SplitName::train;
  if (label == "validation" || label == "val") return SplitName::validation;
  if (label == "test") return SplitName::test;
  throw Error(ErrorCode::validation, "unknown split: '" + label + "'");
}

Corpus Corpus::load(const std::filesystem::path& root) {
  json corpus_j = read_json_file(root / "corpus.json");
  json questions_j = read_json_file(root / "questions.json");
  json splits_j = read_json_file(root / "splits.json");

  std::vector<Lesson> lessons;
  for (const auto& lj : corpus_j.value("lessons", json::array())) {
    Lesson lesson;
    lesson.id = lj.at("id").get<std::string>();
    lesson.subject = subject_from_name(lj.at("subject").get<std::string>());
    int pos = 0;
    for (const auto& sj : lj.value("sentences", json::array())) {
      Sentence s;
      s.id = sj.at("id").get<std::string>();
      s.text = sj.at("text").get<std::string>();
      s.position = pos++;
      lesson.sentences.push_back(std::move(s));
    }
    for (const auto& dj : lj.value("diagrams", json::array())) {
      lesson.diagrams.push_back(DiagramRef{dj.get<std::string>()});
    }
    lessons.push_back(std::move(lesson));
  }

  std::vector<Question> questions;
  for (const auto& qj : questions_j.value("questions", json::array())) {
    Question q;
    q.id = qj.at("id").get<std::string>();
    q.kind = question_kind_from_name(qj.at("kind").get<std::string>());
    q.stem = qj.at("stem").get<std::string>();
    for (const auto& oj : qj.at("options")) q.options.push_back(oj.get<std::string>());
    q.answer_index = qj.at("answer_index").get<int>();
    q.lesson_id = qj.at("lesson_id").get<std::string>();
    if (qj.contains("diagram") && !qj["diagram"].is_null()) {
      q.diagram = DiagramRef{qj["diagram"].get<std::string>()};
    }
    questions.push_back(std::move(q));
  }

  std::array<DatasetSplit, 3> splits = {
      DatasetSplit{SplitName::train, {}},
      DatasetSplit{SplitName::validation, {}},
      DatasetSplit{SplitName::test, {}},
  };
  for (auto& split : splits) {
    for (const auto& idj : splits_j.value(split_label(split.name), json::array())) {
      split.lesson_ids.insert(idj.get<std::string>());
    }
  }

  Corpus c;
  c.root_ = root;
  c.lessons_ = std::move(lessons);
  c.questions_ = std::move(questions);
  c.splits_ = std::move(splits);
  c.index();
  c.validate();
  return c;
}

Corpus Corpus::from_parts(std::vector<Lesson> lessons, std::vector<Question> questions,
                          std::array<DatasetSplit, 3> splits, std::filesystem::path root) {
  Corpus c;
  c.root_ = std::move(root);
  c.lessons_ = std::move(lessons);
  c.questions_ = std::move(questions);
  c.splits_ = std::move(splits);
  c.index();
  c.validate();
  return c;
}

void Corpus::save(const std::filesystem::path& root) const {
  std::filesystem::create_directories(root);
  json lessons_j = json::array();
  for (const auto& lesson : lessons_) {
    json lj;
    lj["id"] = lesson.id;
    lj["subject"] = subject_name(lesson.subject);
    json sents = json::array();
    for (const auto& s : lesson.sentences) sents.push_back({{"id", s.id}, {"text", s.text}});
    lj["sentences"] = std::move(sents);
    json diags = json::array();
    for (const auto& d : lesson.diagrams) diags.push_back(d.id);
    lj["diagrams"] = std::move(diags);
    lessons_j.push_back(std::move(lj));
  }
  write_json_file(root / "corpus.json", json{{"lessons", lessons_j}});

  json questions_j = json::array();
  for (const auto& q : questions_) {
    json qj;
    qj["id"] = q.id;
    qj["kind"] = question_kind_name(q.kind);
    qj["stem"] = q.stem;
    qj["options"] = q.options;
    qj["answer_index"] = q.answer_index;
    qj["lesson_id"] = q.lesson_id;
    if (q.diagram) qj["diagram"] = q.diagram->id;
    questions_j.push_back(std::move(qj));
  }
  write_json_file(root / "questions.json", json{{"questions", questions_j}});

  json splits_j;
  for (const auto& split : splits_) {
    splits_j[split_label(split.name)] = std::vector<std::string>(
        split.lesson_ids.begin(), split.lesson_ids.end());
  }
  write_json_file(root / "splits.json", splits_j);
}

void Corpus::index() {
  lesson_index_.clear();
  question_index_.clear();
  for (size_t i = 0; i < lessons_.size(); ++i) {
    if (!lesson_index_.emplace(lessons_[i].id, i).second) {
      throw Error(ErrorCode::validation, "duplicate lesson id: " + lessons_[i].id);
    }
  }
  for (size_t i = 0; i < questions_.size(); ++i) {
    if (!question_index_.emplace(questions_[i].id, i).second) {
      throw Error(ErrorCode::validation, "duplicate question id: " + questions_[i].id);
    }
  }
}

void Corpus::validate() const {
  for (const auto& lesson : lessons_) {
    std::set<std::string> sentence_ids;
    int last_pos = -1;
    for (const auto& s : lesson.sentences) {
      if (!sentence_ids.insert(s.id).second) {
        throw Error(ErrorCode::validation,
                    "lesson " + lesson.id + ": duplicate sentence id " + s.id);
      }
      if (s.position <= last_pos) {
        throw Error(ErrorCode::validation,
                    "lesson " + lesson.id + ": sentence positions not strictly increasing at " + s.id);
      }
      last_pos = s.position;
      if (trim(s.text).empty()) {
        throw Error(ErrorCode::validation,
                    "lesson " + lesson.id + ": sentence " + s.id + " is empty");
      }
    }
    if (!root_.empty()) {
      for (const auto& d : lesson.diagrams) {
        if (!std::filesystem::exists(diagram_image(d)) &&
            !std::filesystem::exists(diagram_boxes(d))) {
          throw Error(ErrorCode::validation,
                      "lesson " + lesson.id + ": diagram " + d.id +
                          " resolves to neither an image nor an annotation record");
        }
      }
    }
  }

  for (const auto& q : questions_) {
    int n = static_cast<int>(q.options.size());
    if (q.answer_index < 0 || q.answer_index >= n) {
      throw Error(ErrorCode::validation,
                  "question " + q.id + ": answer_index " + std::to_string(q.answer_index) +
                      " out of range for " + std::to_string(n) + " options");
    }
    if (q.kind == QuestionKind::true_false) {
      if (n != 2 || q.options[0] != "true" || q.options[1] != "false") {
        throw Error(ErrorCode::validation,
                    "question " + q.id + ": true/false options must be [\"true\",\"false\"]");
      }
    }
    if ((q.kind == QuestionKind::diagram_mc) != q.diagram.has_value()) {
      throw Error(ErrorCode::validation,
                  "question " + q.id + ": diagram must be present iff kind is diagram_mc");
    }
    auto lit = lesson_index_.find(q.lesson_id);
    if (lit == lesson_index_.end()) {
      throw Error(ErrorCode::validation,
                  "question " + q.id + ": unknown lesson " + q.lesson_id);
    }
    if (q.diagram && !root_.empty()) {
      if (!std::filesystem::exists(diagram_image(*q.diagram)) &&
          !std::filesystem::exists(diagram_boxes(*q.diagram))) {
        throw Error(ErrorCode::validation,
                    "question " + q.id + ": diagram " + q.diagram->id +
                        " resolves to neither an image nor an annotation record");
      }
    }
  }

  for (size_t a = 0; a < splits_.size(); ++a) {
    for (const auto& id : splits_[a].lesson_ids) {
      if (!lesson_index_.count(id)) {
        throw Error(ErrorCode::validation,
                    std::string("split ") + split_label(splits_[a].name) +
                        ": unknown lesson " + id);
      }
    }
    for (size_t b = a + 1; b < splits_.size(); ++b) {
      std::vector<std::string> overlap;
      std::set_intersection(splits_[a].lesson_ids.begin(), splits_[a].lesson_ids.end(),
                            splits_[b].lesson_ids.begin(), splits_[b].lesson_ids.end(),
                            std::back_inserter(overlap));
      if (!overlap.empty()) {
        throw Error(ErrorCode::validation,
                    std::string("splits ") + split_label(splits_[a].name) + " and " +
                        split_label(splits_[b].name) + " share lesson " + overlap.front());
      }
    }
  }
}

const DatasetSplit& Corpus::split(SplitName name) const {
  for (const auto& s : splits_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::internal, "split table corrupt");
}

const Lesson& Corpus::lesson(const std::string& id) const {
  auto it = lesson_index_.find(id);
  if (it == lesson_index_.end()) throw Error(ErrorCode::not_found, "unknown lesson: " + id);
  return lessons_[it->second];
}

const Question& Corpus::question(const std::string& id) const {
  auto it = question_index_.find(id);
  if (it == question_index_.end()) throw Error(ErrorCode::not_found, "unknown question: " + id);
  return questions_[it->second];
}

const Lesson& Corpus::lesson_of(const std::string& question_id) const {
  return lesson(question(question_id).lesson_id);
}

std::vector<const Question*> Corpus::split_questions(SplitName name) const {
  const auto& ids = split(name).lesson_ids;
  std::vector<const Question*> out;
  for (const auto& q : questions_) {
    if (ids.count(q.lesson_id)) out.push_back(&q);
  }
  return out;
}

std::vector<const Question*> Corpus::lesson_questions(const std::string& lesson_id) const {
  std::vector<const Question*> out;
  for (const auto& q : questions_) {
    if (q.lesson_id == lesson_id) out.push_back(&q);
  }
  return out;
}

std::filesystem::path Corpus::diagram_image(const DiagramRef& d) const {
  return root_ / "diagrams" / (d.id + ".png");
}

std::filesystem::path Corpus::diagram_boxes(const DiagramRef& d) const {
  return root_ / "diagrams" / (d.id + ".boxes.json");
}

bool Corpus::structurally_equal(const Corpus& other) const {
  return lessons_ == other.lessons_ && questions_ == other.questions_ &&
         splits_ == other.splits_;
}

// ---------------------------------------------------------------------------
// Raw TQA release converter.

namespace {

// Splits topic prose into sentences on ./!/? followed by whitespace.
std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < text.size(); ++i) {
    cur += text[i];
    bool boundary = (text[i] == '.' || text[i] == '!' || text[i] == '?') &&
                    (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (boundary) {
      std::string t = trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
    }
  }
  std::string t = trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

int option_letter_index(const std::string& letter) {
  if (letter.size() == 1 && letter[0] >= 'a' && letter[0] <= 'z') return letter[0] - 'a';
  return -1;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string stem_of_image(const std::string& image_path) {
  return std::filesystem::path(image_path).stem().string();
}

struct RawDiagram {
  std::string id;
  std::filesystem::path source_image;  // may be empty if unresolvable
};

}  // namespace

ConvertStats convert_tqa_release(const std::filesystem::path& raw,
                                 const std::filesystem::path& out_root,
                                 const std::string& default_subject,
                                 const std::filesystem::path& subject_map) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(raw)) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(raw)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json" &&
          entry.path().filename().string().rfind("tqa_", 0) == 0) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw Error(ErrorCode::io, "no tqa_*.json release files under " + raw.string());
    }
  } else if (std::filesystem::exists(raw)) {
    files.push_back(raw);
  } else {
    throw Error(ErrorCode::io, "release path does not exist: " + raw.string());
  }

  std::unordered_map<std::string, std::string> subjects;
  if (!subject_map.empty()) {
    json m = read_json_file(subject_map);
    for (auto it = m.begin(); it != m.end(); ++it) {
      subjects[it.key()] = it.value().get<std::string>();
    }
  }

  ConvertStats stats;
  std::vector<Lesson> lessons;
  std::vector<Question> questions;
  std::array<DatasetSplit, 3> splits = {
      DatasetSplit{SplitName::train, {}},
      DatasetSplit{SplitName::validation, {}},
      DatasetSplit{SplitName::test, {}},
  };
  std::vector<RawDiagram> diagrams;
  std::set<std::string> seen_lessons;

  for (const auto& file : files) {
    // Release files are named tqa_v?_<split>.json; default to train.
    SplitName split_name = SplitName::train;
    std::string fname = lower(file.filename().string());
    if (fname.find("val") != std::string::npos) split_name = SplitName::validation;
    else if (fname.find("test") != std::string::npos) split_name = SplitName::test;

    json release = read_json_file(file);
    if (!release.is_array()) {
      throw Error(ErrorCode::io, "release file is not a lesson array: " + file.string());
    }

    for (const auto& lj : release) {
      Lesson lesson;
      lesson.id = lj.value("globalID", lj.value("lessonName", ""));
      if (lesson.id.empty()) {
        throw Error(ErrorCode::validation, "release lesson without globalID in " + file.string());
      }
      if (!seen_lessons.insert(lesson.id).second) continue;
      auto sit = subjects.find(lesson.id);
      lesson.subject = subject_from_name(sit == subjects.end() ? default_subject : sit->second);

      int sentence_pos = 0;
      if (lj.contains("topics")) {
        // Topic keys sorted so sentence order is reproducible.
        std::vector<std::string> topic_keys;
        for (auto it = lj["topics"].begin(); it != lj["topics"].end(); ++it) {
          topic_keys.push_back(it.key());
        }
        std::sort(topic_keys.begin(), topic_keys.end());
        for (const auto& key : topic_keys) {
          const auto& topic = lj["topics"][key];
          std::string text = topic.contains("content")
                                 ? topic["content"].value("text", "")
                                 : topic.value("text", "");
          for (auto& sentence : split_sentences(text)) {
            Sentence s;
            s.id = lesson.id + ":s" + std::to_string(sentence_pos);
            s.position = sentence_pos++;
            s.text = std::move(sentence);
            lesson.sentences.push_back(std::move(s));
          }
        }
      }

      if (lj.contains("instructionalDiagrams")) {
        std::vector<std::string> keys;
        for (auto it = lj["instructionalDiagrams"].begin();
             it != lj["instructionalDiagrams"].end(); ++it) {
          keys.push_back(it.key());
        }
        std::sort(keys.begin(), keys.end());
        for (const auto& key : keys) {
          const auto& dj = lj["instructionalDiagrams"][key];
          RawDiagram rd;
          rd.id = key;
          std::string image = dj.value("imagePath", "");
          if (!image.empty()) rd.source_image = file.parent_path() / image;
          diagrams.push_back(rd);
          lesson.diagrams.push_back(DiagramRef{rd.id});
        }
      }

      auto convert_question = [&](const std::string& qid, const json& qj, bool with_diagram) {
        Question q;
        q.id = qid;
        q.lesson_id = lesson.id;
        q.stem = qj.contains("beingAsked")
                     ? qj["beingAsked"].value("processedText", "")
                     : qj.value("processedText", "");
        std::string raw_type = lower(qj.value("questionType", with_diagram ? "Diagram Multiple Choice" : ""));
        bool is_tf = raw_type.find("true") != std::string::npos;

        std::vector<std::pair<std::string, std::string>> choices;
        if (qj.contains("answerChoices")) {
          for (auto it = qj["answerChoices"].begin(); it != qj["answerChoices"].end(); ++it) {
            choices.emplace_back(it.key(), it.value().value("processedText", ""));
          }
          std::sort(choices.begin(), choices.end());
        }
        std::string correct = lower(qj.contains("correctAnswer")
                                        ? qj["correctAnswer"].value("processedText", "")
                                        : "");

        if (is_tf) {
          q.kind = QuestionKind::true_false;
          q.options = {"true", "false"};
          q.answer_index = (correct == "true" || correct == "a") ? 0 : 1;
        } else if (!choices.empty()) {
          q.kind = with_diagram ? QuestionKind::diagram_mc : QuestionKind::text_mc;
          int idx = option_letter_index(correct);
          for (const auto& [letter, text] : choices) {
            if (idx < 0 && lower(text) == correct) {
              idx = static_cast<int>(q.options.size());
            }
            q.options.push_back(text);
          }
          if (idx < 0 || idx >= static_cast<int>(q.options.size())) {
            stats.skipped_questions++;
            return;
          }
          q.answer_index = idx;
        } else {
          stats.skipped_questions++;
          return;
        }

        if (with_diagram) {
          std::string image = qj.value("imagePath", "");
          RawDiagram rd;
          rd.id = image.empty() ? (qid + "_diagram") : stem_of_image(image);
          if (!image.empty()) rd.source_image = file.parent_path() / image;
          diagrams.push_back(rd);
          q.diagram = DiagramRef{rd.id};
        }
        questions.push_back(std::move(q));
        stats.questions++;
      };

      if (lj.contains("questions")) {
        const auto& qs = lj["questions"];
        for (const char* group : {"nonDiagramQuestions", "diagramQuestions"}) {
          if (!qs.contains(group)) continue;
          bool with_diagram = std::string(group) == "diagramQuestions";
          std::vector<std::string> keys;
          for (auto it = qs[group].begin(); it != qs[group].end(); ++it) keys.push_back(it.key());
          std::sort(keys.begin(), keys.end());
          for (const auto& key : keys) convert_question(key, qs[group][key], with_diagram);
        }
      }

      splits[static_cast<size_t>(split_name)].lesson_ids.insert(lesson.id);
      stats.sentences += static_cast<int>(lesson.sentences.size());
      lessons.push_back(std::move(lesson));
      stats.lessons++;
    }
  }

  std::filesystem::create_directories(out_root / "diagrams");
  std::set<std::string> written;
  for (const auto& rd : diagrams) {
    if (!written.insert(rd.id).second) continue;
    auto image_out = out_root / "diagrams" / (rd.id + ".png");
    if (!rd.source_image.empty() && std::filesystem::exists(rd.source_image)) {
      std::filesystem::copy_file(rd.source_image, image_out,
                                 std::filesystem::copy_options::overwrite_existing);
    }
    // The release carries no RoI annotations; an empty boxes file makes the
    // diagram resolvable and leaves detection to the features command.
    auto boxes_out = out_root / "diagrams" / (rd.id + ".boxes.json");
    if (!std::filesystem::exists(boxes_out)) {
      std::ofstream out(boxes_out);
      out << "[]\n";
    }
  }

  Corpus corpus = Corpus::from_parts(std::move(lessons), std::move(questions),
                                     std::move(splits), out_root);
  corpus.save(out_root);
  return stats;
}

}  // namespace isaaq
