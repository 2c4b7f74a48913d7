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
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "isaaq/ad.hpp"

namespace isaaq {

// Ordered collection of named tensors. Insertion order is stable and defines
// the layout of the serialized weight file.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Tensor& add(const std::string& name, Eigen::MatrixXd value);
  Tensor& add_zeros(const std::string& name, int rows, int cols);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Tensor*> all();
  std::vector<const Tensor*> all() const;
  size_t count() const { return items_.size(); }
  void zero_grads();

  // Weight file: <path> holds the little-endian float32 payload and
  // <path>.json the manifest [{name, shape, offset}, ...]. Offsets are in
  // bytes into the payload.
  void save(const std::filesystem::path& bin_path) const;
  static ParamStore load(const std::filesystem::path& bin_path);

  // Loads and checks every tensor against `expected` (name -> rows, cols).
  // Mismatches and missing/extra tensors are reported together.
  static ParamStore load_checked(
      const std::filesystem::path& bin_path,
      const std::map<std::string, std::pair<int, int>>& expected);

 private:
  std::vector<std::unique_ptr<Tensor>> items_;
  std::map<std::string, size_t> index_;
};

// Gaussian init at float32 granularity: values are exactly representable in
// float32, so a save/load round trip reproduces them bit for bit.
Eigen::MatrixXd gaussian_init(int rows, int cols, double stddev, std::mt19937_64& rng);

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update over the tensors' accumulated grads at learning rate lr.
  void step(const std::vector<Tensor*>& tensors, double lr);

 private:
  struct Slot {
    Eigen::MatrixXd m, v;
  };
  double beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace isaaq
