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

#include "isaaq/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "isaaq/error.hpp"

namespace isaaq {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::config: return "config";
    case ErrorCode::state: return "state";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

std::string Error::to_json() const {
  std::string msg;
  msg.reserve(std::strlen(what()) + 8);
  for (const char* p = what(); *p; ++p) {
    switch (*p) {
      case '"': msg += "\\\""; break;
      case '\\': msg += "\\\\"; break;
      case '\n': msg += "\\n"; break;
      case '\t': msg += "\\t"; break;
      default:
        if (static_cast<unsigned char>(*p) < 0x20) break;
        msg += *p;
    }
  }
  std::string out = "{\"error\":{\"code\":\"";
  out += error_code_name(code_);
  out += "\",\"message\":\"";
  out += msg;
  out += "\"}}";
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    bool keep = std::isalnum(c) != 0 || c >= 0x80;
    if (keep) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Vocab::Vocab() {
  push("[PAD]");
  push("[UNK]");
  push("[CLS]");
  push("[SEP]");
}

void Vocab::push(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
  std::set<std::string> unique;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) unique.insert(std::move(tok));
  }
  Vocab v;
  for (const auto& tok : unique) v.push(tok);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io, "cannot open vocab file: " + file.string());
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.push(line);
  }
  if (v.size() < 4) {
    throw Error(ErrorCode::validation,
                "vocab file too short (needs the 4 reserved tokens): " + file.string());
  }
  return v;
}

void Vocab::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::io, "cannot write vocab file: " + file.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) out.push_back(id(tok));
  return out;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorCode::not_found, "token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<size_t>(id)];
}

}  // namespace isaaq
