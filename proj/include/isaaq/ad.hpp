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

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace isaaq {

// Named parameter tensor. Values are double so finite-difference gradient
// checks are meaningful; serialization converts to float32.
struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Tensor(std::string n, Eigen::MatrixXd v)
      : name(std::move(n)), value(std::move(v)),
        grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

namespace ad {

using Mat = Eigen::MatrixXd;

// Handle into a Graph's tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Dynamic reverse-mode tape over Eigen matrices. One Graph per forward pass;
// build the expression, call backward(loss) on a 1x1 node, then read
// gradients off leaves or let bound Tensors accumulate them.
class Graph {
 public:
  Var constant(Mat value);                  // no gradient tracked
  Var leaf(Mat value);                      // gradient tracked, read via grad()
  Var param(Tensor& tensor);                // tracked; backward() adds into tensor.grad

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);                    // same shape
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var add_row_broadcast(Var a, Var row);    // a(m,n) + replicated row(1,n)
  Var hadamard(Var a, Var b);
  Var tanh_op(Var a);
  Var sigmoid_op(Var a);
  Var gelu_op(Var a);                       // exact erf form
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var slice_cols(Var a, int start, int count);
  Var row(Var a, int r);
  Var tile_rows(Var a, int times);          // stack a vertically `times` times
  Var repeat_rows_each(Var a, int times);   // each row repeated `times` consecutive times
  Var reshape_rows(Var a, int rows, int cols);  // row-major reinterpret
  Var gather_rows(Var table, const std::vector<int>& ids);
  Var sum_all(Var a);                       // 1x1
  Var nll_of_softmax_row(Var logits, int target);  // logits 1xN -> 1x1 loss
  Var dropout(Var a, double rate, std::mt19937_64& rng, bool enabled);

  void backward(Var root);                  // root must be 1x1

  const Mat& value(Var v) const { return nodes_[v.idx].value; }
  const Mat& grad(Var v) const { return nodes_[v.idx].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Graph&)> backprop;  // reads this node's grad, adds to parents
  };

  int push(Mat value, bool requires_grad, std::function<void(Graph&)> backprop);
  Node& node(Var v) { return nodes_[v.idx]; }
  void add_grad(int idx, const Mat& g);
  bool needs(Var v) const { return nodes_[v.idx].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<std::pair<Tensor*, int>> bindings_;
};

// max |a-n| / max(1e-6, |a|+|n|) over all coefficients.
double max_rel_error(const Mat& analytic, const Mat& numeric);

// Central-difference gradient of scalar_fn w.r.t. tensor, evaluated entry by
// entry. scalar_fn must rebuild its graph from current tensor values.
Mat finite_difference(Tensor& tensor, const std::function<double()>& scalar_fn,
                      double delta = 1e-5);

}  // namespace ad
}  // namespace isaaq
