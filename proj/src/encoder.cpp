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

#include "isaaq/encoder.hpp"

#include <cmath>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

namespace {

// Assembles [CLS] first [SEP] second [SEP] under max_len. `second` is
// protected: it is only truncated after `first` is fully consumed.
EncodedSequence assemble(std::vector<int> protected_seg, std::vector<int> cut_seg,
                         bool protected_goes_second, int max_len) {
  int budget = max_len - 3;
  int p = static_cast<int>(protected_seg.size());
  int c = static_cast<int>(cut_seg.size());
  if (p + c > budget) {
    c = std::max(0, budget - p);
    cut_seg.resize(static_cast<size_t>(c));
    if (p > budget) {
      p = budget;
      protected_seg.resize(static_cast<size_t>(p));
    }
  }

  const std::vector<int>& first = protected_goes_second ? cut_seg : protected_seg;
  const std::vector<int>& second = protected_goes_second ? protected_seg : cut_seg;

  EncodedSequence seq;
  seq.max_len = max_len;
  seq.token_ids.push_back(Vocab::kCls);
  seq.token_ids.insert(seq.token_ids.end(), first.begin(), first.end());
  seq.token_ids.push_back(Vocab::kSep);
  size_t first_len = seq.token_ids.size();
  seq.token_ids.insert(seq.token_ids.end(), second.begin(), second.end());
  seq.token_ids.push_back(Vocab::kSep);

  seq.segment_ids.assign(seq.token_ids.size(), 1);
  for (size_t i = 0; i < first_len; ++i) seq.segment_ids[i] = 0;
  seq.attention_mask.assign(seq.token_ids.size(), 1);
  return seq;
}

}  // namespace

EncodedSequence build_sequence(const Vocab& vocab, const std::string& k,
                               const std::string& q, const std::string& a,
                               int max_len) {
  if (max_len < 8) throw Error(ErrorCode::config, "max_len must be >= 8");
  std::vector<int> k_ids = vocab.ids(tokenize(k));
  std::vector<int> qa_ids = vocab.ids(tokenize(q));
  std::vector<int> a_ids = vocab.ids(tokenize(a));
  qa_ids.insert(qa_ids.end(), a_ids.begin(), a_ids.end());
  // k sits in the first segment and is cut first
  return assemble(std::move(qa_ids), std::move(k_ids), /*protected_goes_second=*/true,
                  max_len);
}

EncodedSequence build_sequence_tf(const Vocab& vocab, const std::string& q,
                                  const std::string& ls, int max_len) {
  if (max_len < 8) throw Error(ErrorCode::config, "max_len must be >= 8");
  std::vector<int> q_ids = vocab.ids(tokenize(q));
  std::vector<int> ls_ids = vocab.ids(tokenize(ls));
  // q sits in the first segment; the premise ls is cut first
  return assemble(std::move(q_ids), std::move(ls_ids), /*protected_goes_second=*/false,
                  max_len);
}

void EncoderSpec::validate() const {
  if (vocab_size < 4) throw Error(ErrorCode::config, "encoder vocab_size must be >= 4");
  if (hidden <= 0 || layers <= 0 || heads <= 0 || max_positions <= 0) {
    throw Error(ErrorCode::config, "encoder dims must be positive");
  }
  if (hidden % heads != 0) {
    throw Error(ErrorCode::config, "hidden size " + std::to_string(hidden) +
                                       " not divisible by " + std::to_string(heads) +
                                       " heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw Error(ErrorCode::config, "dropout must be in [0,1)");
  }
}

std::string EncoderSpec::to_json() const {
  json j{{"vocab_size", vocab_size}, {"hidden", hidden},   {"layers", layers},
         {"heads", heads},           {"max_positions", max_positions},
         {"dropout", dropout},       {"pooler", pooler}};
  return j.dump(2);
}

EncoderSpec EncoderSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed encoder spec: ") + e.what());
  }
  EncoderSpec spec;
  spec.vocab_size = j.value("vocab_size", spec.vocab_size);
  spec.hidden = j.value("hidden", spec.hidden);
  spec.layers = j.value("layers", spec.layers);
  spec.heads = j.value("heads", spec.heads);
  spec.max_positions = j.value("max_positions", spec.max_positions);
  spec.dropout = j.value("dropout", spec.dropout);
  spec.pooler = j.value("pooler", spec.pooler);
  spec.validate();
  return spec;
}

std::map<std::string, std::pair<int, int>> encoder_tensor_shapes(const EncoderSpec& spec) {
  std::map<std::string, std::pair<int, int>> shapes;
  int h = spec.hidden, ff = spec.ff_dim();
  shapes["enc.tok_emb"] = {spec.vocab_size, h};
  shapes["enc.seg_emb"] = {2, h};
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "enc.l" + std::to_string(l) + ".";
    for (const char* w : {"attn.Wq", "attn.Wk", "attn.Wv", "attn.Wo"}) shapes[p + w] = {h, h};
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) shapes[p + b] = {1, h};
    shapes[p + "ln1.gain"] = {1, h};
    shapes[p + "ln1.bias"] = {1, h};
    shapes[p + "ff.W1"] = {h, ff};
    shapes[p + "ff.b1"] = {1, ff};
    shapes[p + "ff.W2"] = {ff, h};
    shapes[p + "ff.b2"] = {1, h};
    shapes[p + "ln2.gain"] = {1, h};
    shapes[p + "ln2.bias"] = {1, h};
  }
  if (spec.pooler) {
    shapes["enc.pooler.W"] = {h, h};
    shapes["enc.pooler.b"] = {1, h};
  }
  return shapes;
}

ParamStore init_encoder_params(const EncoderSpec& spec, unsigned long long seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  const double std_w = 0.02;
  for (const auto& [name, shape] : encoder_tensor_shapes(spec)) {
    if (name.find("ln") != std::string::npos && name.find("gain") != std::string::npos) {
      store.add(name, Eigen::MatrixXd::Ones(shape.first, shape.second));
    } else if (name.find(".b") != std::string::npos ||
               name.find("bias") != std::string::npos) {
      store.add_zeros(name, shape.first, shape.second);
    } else {
      store.add(name, gaussian_init(shape.first, shape.second, std_w, rng));
    }
  }
  return store;
}

ParamStore load_external_encoder(const std::filesystem::path& weights_path,
                                 const EncoderSpec& spec) {
  return ParamStore::load_checked(weights_path, encoder_tensor_shapes(spec));
}

namespace {

Eigen::MatrixXd sinusoidal_positions(int len, int hidden) {
  Eigen::MatrixXd pos(len, hidden);
  for (int p = 0; p < len; ++p) {
    for (int i = 0; i < hidden; ++i) {
      double exponent = static_cast<double>(2 * (i / 2)) / hidden;
      double angle = p / std::pow(10000.0, exponent);
      pos(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

}  // namespace

EncodeVars encode_graph(ad::Graph& g, const EncodedSequence& seq, ParamStore& params,
                        const EncoderSpec& spec, RunMode mode, std::mt19937_64& rng) {
  spec.validate();
  int len = seq.length();
  if (len == 0) throw Error(ErrorCode::config, "cannot encode an empty sequence");
  if (len > spec.max_positions) {
    throw Error(ErrorCode::config, "sequence length " + std::to_string(len) +
                                       " exceeds max_positions " +
                                       std::to_string(spec.max_positions));
  }
  for (int id : seq.token_ids) {
    if (id < 0 || id >= spec.vocab_size) {
      throw Error(ErrorCode::validation,
                  "token id " + std::to_string(id) + " outside vocab of size " +
                      std::to_string(spec.vocab_size));
    }
  }

  ad::Var tok = g.gather_rows(g.param(params.at("enc.tok_emb")), seq.token_ids);
  ad::Var seg = g.gather_rows(g.param(params.at("enc.seg_emb")), seq.segment_ids);
  ad::Var x = g.add(g.add(tok, seg), g.constant(sinusoidal_positions(len, spec.hidden)));

  // Additive mask: masked-out key positions get a large negative score.
  bool any_masked = false;
  for (int m : seq.attention_mask) any_masked |= (m == 0);
  ad::Var mask;
  if (any_masked) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(len, len);
    for (int j = 0; j < len; ++j) {
      if (seq.attention_mask[static_cast<size_t>(j)] == 0) m.col(j).setConstant(-1e9);
    }
    mask = g.constant(std::move(m));
  }

  int dk = spec.hidden / spec.heads;
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "enc.l" + std::to_string(l) + ".";
    ad::Var q = g.add_row_broadcast(g.matmul(x, g.param(params.at(p + "attn.Wq"))),
                                    g.param(params.at(p + "attn.bq")));
    ad::Var k = g.add_row_broadcast(g.matmul(x, g.param(params.at(p + "attn.Wk"))),
                                    g.param(params.at(p + "attn.bk")));
    ad::Var v = g.add_row_broadcast(g.matmul(x, g.param(params.at(p + "attn.Wv"))),
                                    g.param(params.at(p + "attn.bv")));
    ad::Var ctx;
    for (int h = 0; h < spec.heads; ++h) {
      ad::Var qh = g.slice_cols(q, h * dk, dk);
      ad::Var kh = g.slice_cols(k, h * dk, dk);
      ad::Var vh = g.slice_cols(v, h * dk, dk);
      ad::Var scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dk);
      if (mask.valid()) scores = g.add(scores, mask);
      ad::Var attn = g.softmax_rows(scores);
      ad::Var head = g.matmul(attn, vh);
      ctx = (h == 0) ? head : g.concat_cols(ctx, head);
    }
    ad::Var proj = g.add_row_broadcast(g.matmul(ctx, g.param(params.at(p + "attn.Wo"))),
                                       g.param(params.at(p + "attn.bo")));
    x = g.layer_norm_rows(g.add(x, proj), g.param(params.at(p + "ln1.gain")),
                          g.param(params.at(p + "ln1.bias")));

    ad::Var inner = g.gelu_op(g.add_row_broadcast(
        g.matmul(x, g.param(params.at(p + "ff.W1"))), g.param(params.at(p + "ff.b1"))));
    ad::Var ff = g.add_row_broadcast(g.matmul(inner, g.param(params.at(p + "ff.W2"))),
                                     g.param(params.at(p + "ff.b2")));
    x = g.layer_norm_rows(g.add(x, ff), g.param(params.at(p + "ln2.gain")),
                          g.param(params.at(p + "ln2.bias")));
  }

  ad::Var pooled = g.row(x, 0);
  if (spec.pooler) {
    pooled = g.tanh_op(g.add_row_broadcast(g.matmul(pooled, g.param(params.at("enc.pooler.W"))),
                                           g.param(params.at("enc.pooler.b"))));
  }
  pooled = g.dropout(pooled, spec.dropout, rng, mode == RunMode::train);
  return {x, pooled};
}

EncodeResult encode(const EncodedSequence& seq, ParamStore& params,
                    const EncoderSpec& spec, RunMode mode,
                    unsigned long long dropout_seed) {
  ad::Graph g;
  std::mt19937_64 rng(dropout_seed);
  EncodeVars vars = encode_graph(g, seq, params, spec, mode, rng);
  EncodeResult out;
  out.token_reps = g.value(vars.tokens);
  out.pooled = g.value(vars.pooled).row(0).transpose();
  return out;
}

}  // namespace isaaq
