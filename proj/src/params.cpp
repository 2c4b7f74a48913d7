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

#include "isaaq/params.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

ParamStore::ParamStore(const ParamStore& other) { *this = other; }

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this == &other) return *this;
  items_.clear();
  index_.clear();
  for (const auto& item : other.items_) {
    add(item->name, item->value).grad = item->grad;
  }
  return *this;
}

Tensor& ParamStore::add(const std::string& name, Eigen::MatrixXd value) {
  if (index_.count(name)) {
    throw Error(ErrorCode::config, "duplicate parameter name: " + name);
  }
  index_[name] = items_.size();
  items_.push_back(std::make_unique<Tensor>(name, std::move(value)));
  return *items_.back();
}

Tensor& ParamStore::add_zeros(const std::string& name, int rows, int cols) {
  return add(name, Eigen::MatrixXd::Zero(rows, cols));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::not_found, "unknown parameter: " + name);
  return *items_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::not_found, "unknown parameter: " + name);
  return *items_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

std::vector<Tensor*> ParamStore::all() {
  std::vector<Tensor*> out;
  out.reserve(items_.size());
  for (auto& item : items_) out.push_back(item.get());
  return out;
}

std::vector<const Tensor*> ParamStore::all() const {
  std::vector<const Tensor*> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& item : items_) item->zero_grad();
}

void ParamStore::save(const std::filesystem::path& bin_path) const {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorCode::io, "cannot write " + bin_path.string());
  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& item : items_) {
    manifest.push_back({
        {"name", item->name},
        {"shape", {item->value.rows(), item->value.cols()}},
        {"offset", offset},
    });
    // row-major float32 payload
    for (Eigen::Index r = 0; r < item->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < item->value.cols(); ++c) {
        float f = static_cast<float>(item->value(r, c));
        bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
      }
    }
    offset += static_cast<uint64_t>(item->value.size()) * sizeof(float);
  }
  if (!bin) throw Error(ErrorCode::io, "short write to " + bin_path.string());
  std::ofstream mf(bin_path.string() + ".json");
  if (!mf) throw Error(ErrorCode::io, "cannot write " + bin_path.string() + ".json");
  mf << manifest.dump(2) << '\n';
}

ParamStore ParamStore::load(const std::filesystem::path& bin_path) {
  std::ifstream mf(bin_path.string() + ".json");
  if (!mf) throw Error(ErrorCode::io, "cannot open manifest " + bin_path.string() + ".json");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, "malformed manifest: " + std::string(e.what()));
  }

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorCode::io, "cannot open " + bin_path.string());
  bin.seekg(0, std::ios::end);
  uint64_t file_size = static_cast<uint64_t>(bin.tellg());

  ParamStore store;
  for (const auto& entry : manifest) {
    std::string name = entry.at("name").get<std::string>();
    int rows = entry.at("shape")[0].get<int>();
    int cols = entry.at("shape")[1].get<int>();
    uint64_t offset = entry.at("offset").get<uint64_t>();
    uint64_t bytes = static_cast<uint64_t>(rows) * cols * sizeof(float);
    if (offset + bytes > file_size) {
      throw Error(ErrorCode::io, "weight file truncated at tensor " + name + " (" +
                                     bin_path.string() + ")");
    }
    bin.seekg(static_cast<std::streamoff>(offset));
    Eigen::MatrixXd value(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        float f;
        bin.read(reinterpret_cast<char*>(&f), sizeof(float));
        value(r, c) = static_cast<double>(f);
      }
    }
    if (!bin) throw Error(ErrorCode::io, "short read in " + bin_path.string());
    store.add(name, std::move(value));
  }
  return store;
}

ParamStore ParamStore::load_checked(
    const std::filesystem::path& bin_path,
    const std::map<std::string, std::pair<int, int>>& expected) {
  ParamStore store = load(bin_path);
  std::string problems;
  for (const auto& [name, shape] : expected) {
    if (!store.has(name)) {
      problems += "  missing tensor " + name + " (want " + std::to_string(shape.first) +
                  "x" + std::to_string(shape.second) + ")\n";
      continue;
    }
    const Tensor& t = store.at(name);
    if (t.value.rows() != shape.first || t.value.cols() != shape.second) {
      problems += "  tensor " + name + ": got " + std::to_string(t.value.rows()) + "x" +
                  std::to_string(t.value.cols()) + ", want " +
                  std::to_string(shape.first) + "x" + std::to_string(shape.second) + "\n";
    }
  }
  for (const auto* t : store.all()) {
    if (!expected.count(t->name)) problems += "  unexpected tensor " + t->name + "\n";
  }
  if (!problems.empty()) {
    throw Error(ErrorCode::config,
                "weight file does not match the declared encoder spec:\n" + problems);
  }
  return store;
}

Eigen::MatrixXd gaussian_init(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = static_cast<double>(static_cast<float>(dist(rng)));
  }
  return out;
}

void Adam::step(const std::vector<Tensor*>& tensors, double lr) {
  ++step_count_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (Tensor* t : tensors) {
    Slot& s = slots_[t->name];
    if (s.m.size() == 0) {
      s.m = Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols());
      s.v = Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * t->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * t->grad.cwiseProduct(t->grad);
    Eigen::MatrixXd mhat = s.m / bc1;
    Eigen::MatrixXd vhat = s.v / bc2;
    t->value -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
  }
}

}  // namespace isaaq
