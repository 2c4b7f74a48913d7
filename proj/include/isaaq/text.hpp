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
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace isaaq {

// Lowercases and splits on anything that is not [a-z0-9]. Bytes >= 0x80
// (UTF-8 continuation or lead bytes) are kept inside tokens untouched.
std::vector<std::string> tokenize(std::string_view text);

// The fixed English stopword list shipped with the library. Versioned in
// source so retrieval results are reproducible across installs.
const std::set<std::string>& english_stopwords();

// Token table with one token per line, id == line number. Ids 0..3 are the
// reserved control tokens below; anything unknown maps to kUnk.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab();

  // Builds a vocabulary from raw texts: reserved tokens first, then the
  // unique tokens of all texts in lexicographic order.
  static Vocab build(const std::vector<std::string>& texts);

  static Vocab load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  int id(const std::string& token) const;
  std::vector<int> ids(const std::vector<std::string>& tokens) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  void push(const std::string& token);
};

}  // namespace isaaq
