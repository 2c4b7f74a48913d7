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
#include <string>
#include <vector>

#include "isaaq/ad.hpp"
#include "isaaq/params.hpp"
#include "isaaq/text.hpp"

namespace isaaq {

enum class RunMode { eval, train };

// Tokenized model input. Layout is always
//   [CLS] <first segment> [SEP] <second segment> [SEP]
// with segment ids 0 through the first SEP and 1 after it.
struct EncodedSequence {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> attention_mask;
  int max_len = 0;

  int length() const { return static_cast<int>(token_ids.size()); }
};

// Context/question-option sequence. When over budget the context k is cut
// from its end first; the question+option segment is only cut once k is
// exhausted, so the classification signal survives truncation.
EncodedSequence build_sequence(const Vocab& vocab, const std::string& k,
                               const std::string& q, const std::string& a,
                               int max_len);

// Hypothesis/premise sequence for entailment. The premise ls is cut from its
// end first; q is only cut once ls is exhausted.
EncodedSequence build_sequence_tf(const Vocab& vocab, const std::string& q,
                                  const std::string& ls, int max_len);

struct EncoderSpec {
  int vocab_size = 0;
  int hidden = 64;       // H
  int layers = 2;
  int heads = 4;
  int max_positions = 256;
  double dropout = 0.1;  // applied to the pooled output in train mode
  bool pooler = false;   // optional learned tanh transform on the CLS vector

  int ff_dim() const { return 4 * hidden; }
  void validate() const;

  std::string to_json() const;
  static EncoderSpec from_json(const std::string& text);
};

// Fresh parameters for the spec. Deterministic for a given seed.
ParamStore init_encoder_params(const EncoderSpec& spec, unsigned long long seed);

// Tensor name -> shape for every tensor the spec declares.
std::map<std::string, std::pair<int, int>> encoder_tensor_shapes(const EncoderSpec& spec);

// Loads a weight file exported in the declared format and verifies it against
// the spec, reporting every offending tensor name/shape at once.
ParamStore load_external_encoder(const std::filesystem::path& weights_path,
                                 const EncoderSpec& spec);

struct EncodeVars {
  ad::Var tokens;  // len x H
  ad::Var pooled;  // 1 x H, the CLS row (after optional pooler / dropout)
};

// Builds the encoder forward pass on the graph. Parameters are bound, so a
// later backward() accumulates their gradients.
EncodeVars encode_graph(ad::Graph& graph, const EncodedSequence& seq,
                        ParamStore& params, const EncoderSpec& spec, RunMode mode,
                        std::mt19937_64& rng);

struct EncodeResult {
  Eigen::MatrixXd token_reps;  // len x H
  Eigen::VectorXd pooled;      // H
};

// Single-sequence forward pass. Deterministic in eval mode.
EncodeResult encode(const EncodedSequence& seq, ParamStore& params,
                    const EncoderSpec& spec, RunMode mode = RunMode::eval,
                    unsigned long long dropout_seed = 0);

}  // namespace isaaq
