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

#include "isaaq/ad.hpp"

#include <cmath>

#include "isaaq/error.hpp"

namespace isaaq::ad {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

int Graph::push(Mat value, bool requires_grad, std::function<void(Graph&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::add_grad(int idx, const Mat& g) {
  Node& n = nodes_[idx];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Graph::constant(Mat value) { return {push(std::move(value), false, nullptr)}; }

Var Graph::leaf(Mat value) { return {push(std::move(value), true, nullptr)}; }

Var Graph::param(Tensor& tensor) {
  Var v = leaf(tensor.value);
  bindings_.emplace_back(&tensor, v.idx);
  return v;
}

Var Graph::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    throw Error(ErrorCode::config,
                "matmul shape mismatch: (" + std::to_string(value(a).rows()) + "x" +
                    std::to_string(value(a).cols()) + ") * (" +
                    std::to_string(value(b).rows()) + "x" +
                    std::to_string(value(b).cols()) + ")");
  }
  Mat out = value(a) * value(b);
  int ai = a.idx, bi = b.idx;
  int self = size();
  return {push(std::move(out), needs(a) || needs(b), [self, ai, bi](Graph& g) {
    const Mat up = g.nodes_[self].grad;
    g.add_grad(ai, up * g.nodes_[bi].value.transpose());
    g.add_grad(bi, g.nodes_[ai].value.transpose() * up);
  })};
}

Var Graph::transpose(Var a) {
  int ai = a.idx;
  int self = size();
  return {push(value(a).transpose(), needs(a), [self, ai](Graph& g) {
    g.add_grad(ai, g.nodes_[self].grad.transpose());
  })};
}

Var Graph::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw Error(ErrorCode::config, "add shape mismatch");
  }
  int ai = a.idx, bi = b.idx;
  int self = size();
  return {push(value(a) + value(b), needs(a) || needs(b), [self, ai, bi](Graph& g) {
    g.add_grad(ai, g.nodes_[self].grad);
    g.add_grad(bi, g.nodes_[self].grad);
  })};
}

Var Graph::sub(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw Error(ErrorCode::config, "sub shape mismatch");
  }
  int ai = a.idx, bi = b.idx;
  int self = size();
  return {push(value(a) - value(b), needs(a) || needs(b), [self, ai, bi](Graph& g) {
    g.add_grad(ai, g.nodes_[self].grad);
    g.add_grad(bi, -g.nodes_[self].grad);
  })};
}

Var Graph::scale(Var a, double s) {
  int ai = a.idx;
  int self = size();
  return {push(value(a) * s, needs(a), [self, ai, s](Graph& g) {
    g.add_grad(ai, g.nodes_[self].grad * s);
  })};
}

Var Graph::add_row_broadcast(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw Error(ErrorCode::config, "add_row_broadcast shape mismatch");
  }
  Mat out = value(a).rowwise() + value(row).row(0);
  int ai = a.idx, ri = row.idx;
  int self = size();
  return {push(std::move(out), needs(a) || needs(row), [self, ai, ri](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    g.add_grad(ai, up);
    g.add_grad(ri, up.colwise().sum());
  })};
}

Var Graph::hadamard(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw Error(ErrorCode::config, "hadamard shape mismatch");
  }
  Mat out = value(a).cwiseProduct(value(b));
  int ai = a.idx, bi = b.idx;
  int self = size();
  return {push(std::move(out), needs(a) || needs(b), [self, ai, bi](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    g.add_grad(ai, up.cwiseProduct(g.nodes_[bi].value));
    g.add_grad(bi, up.cwiseProduct(g.nodes_[ai].value));
  })};
}

Var Graph::tanh_op(Var a) {
  Mat out = value(a).array().tanh();
  int ai = a.idx;
  int self = size();
  return {push(std::move(out), needs(a), [self, ai](Graph& g) {
    const Mat& y = g.nodes_[self].value;
    g.add_grad(ai, g.nodes_[self].grad.cwiseProduct(
                       (1.0 - y.array().square()).matrix()));
  })};
}

Var Graph::sigmoid_op(Var a) {
  Mat out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  int ai = a.idx;
  int self = size();
  return {push(std::move(out), needs(a), [self, ai](Graph& g) {
    const Mat& y = g.nodes_[self].value;
    g.add_grad(ai, g.nodes_[self].grad.cwiseProduct(
                       (y.array() * (1.0 - y.array())).matrix()));
  })};
}

Var Graph::gelu_op(Var a) {
  Mat x = value(a);
  Mat out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = x(i) * 0.5 * (1.0 + std::erf(x(i) * kInvSqrt2));
  }
  int ai = a.idx;
  int self = size();
  return {push(std::move(out), needs(a), [self, ai](Graph& g) {
    const Mat& x = g.nodes_[ai].value;
    Mat d = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double phi = 0.5 * (1.0 + std::erf(x(i) * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x(i) * x(i));
      d(i) = phi + x(i) * pdf;
    }
    g.add_grad(ai, g.nodes_[self].grad.cwiseProduct(d));
  })};
}

Var Graph::softmax_rows(Var a) {
  Mat out = value(a);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double m = out.row(r).maxCoeff();
    Eigen::ArrayXd e = (out.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  int ai = a.idx;
  int self = size();
  return {push(std::move(out), needs(a), [self, ai](Graph& g) {
    const Mat& y = g.nodes_[self].value;
    const Mat& up = g.nodes_[self].grad;
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = up.row(r).dot(y.row(r));
      dx.row(r) = (up.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
    }
    g.add_grad(ai, dx);
  })};
}

Var Graph::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const Mat& x = value(a);
  if (value(gain).rows() != 1 || value(gain).cols() != x.cols() ||
      value(bias).rows() != 1 || value(bias).cols() != x.cols()) {
    throw Error(ErrorCode::config, "layer_norm gain/bias must be 1 x n");
  }
  Eigen::Index n = x.cols();
  Mat xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    double s = std::sqrt(var + eps);
    inv_std(r) = 1.0 / s;
    xhat.row(r) = (x.row(r).array() - mu).matrix() / s;
  }
  Mat out = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
  out = out.rowwise() + value(bias).row(0);

  int ai = a.idx, gi = gain.idx, bi = bias.idx;
  int self = size();
  return {push(std::move(out), needs(a) || needs(gain) || needs(bias),
               [self, ai, gi, bi, xhat, inv_std](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    const Mat& gval = g.nodes_[gi].value;
    Eigen::Index n = up.cols();
    g.add_grad(gi, up.cwiseProduct(xhat).colwise().sum());
    g.add_grad(bi, up.colwise().sum());
    if (g.nodes_[ai].requires_grad) {
      Mat dx(up.rows(), n);
      for (Eigen::Index r = 0; r < up.rows(); ++r) {
        Eigen::RowVectorXd dy = up.row(r).cwiseProduct(gval.row(0));
        double mean_dy = dy.mean();
        double mean_dy_xhat = dy.cwiseProduct(xhat.row(r)).mean();
        dx.row(r) =
            (dy.array() - mean_dy - xhat.row(r).array() * mean_dy_xhat).matrix() *
            inv_std(r);
      }
      g.add_grad(ai, dx);
    }
  })};
}

Var Graph::concat_cols(Var a, Var b) {
  if (value(a).rows() != value(b).rows()) {
    throw Error(ErrorCode::config, "concat_cols row mismatch");
  }
  Mat out(value(a).rows(), value(a).cols() + value(b).cols());
  out << value(a), value(b);
  int ai = a.idx, bi = b.idx;
  int p = static_cast<int>(value(a).cols());
  int self = size();
  return {push(std::move(out), needs(a) || needs(b), [self, ai, bi, p](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    g.add_grad(ai, up.leftCols(p));
    g.add_grad(bi, up.rightCols(up.cols() - p));
  })};
}

Var Graph::concat_rows(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) {
    throw Error(ErrorCode::config, "concat_rows column mismatch");
  }
  Mat out(value(a).rows() + value(b).rows(), value(a).cols());
  out << value(a), value(b);
  int ai = a.idx, bi = b.idx;
  int p = static_cast<int>(value(a).rows());
  int self = size();
  return {push(std::move(out), needs(a) || needs(b), [self, ai, bi, p](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    g.add_grad(ai, up.topRows(p));
    g.add_grad(bi, up.bottomRows(up.rows() - p));
  })};
}

Var Graph::slice_cols(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > value(a).cols()) {
    throw Error(ErrorCode::config, "slice_cols out of range");
  }
  Mat out = value(a).middleCols(start, count);
  int ai = a.idx;
  Eigen::Index rows = value(a).rows(), cols = value(a).cols();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, start, count, rows, cols](Graph& g) {
    Mat d = Mat::Zero(rows, cols);
    d.middleCols(start, count) = g.nodes_[self].grad;
    g.add_grad(ai, d);
  })};
}

Var Graph::row(Var a, int r) {
  if (r < 0 || r >= value(a).rows()) {
    throw Error(ErrorCode::config, "row index out of range");
  }
  Mat out = value(a).row(r);
  int ai = a.idx;
  Eigen::Index rows = value(a).rows(), cols = value(a).cols();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, r, rows, cols](Graph& g) {
    Mat d = Mat::Zero(rows, cols);
    d.row(r) = g.nodes_[self].grad;
    g.add_grad(ai, d);
  })};
}

Var Graph::tile_rows(Var a, int times) {
  const Mat& x = value(a);
  Mat out(x.rows() * times, x.cols());
  for (int k = 0; k < times; ++k) out.middleRows(k * x.rows(), x.rows()) = x;
  int ai = a.idx;
  Eigen::Index m = x.rows();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, m, times](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    Mat d = Mat::Zero(m, up.cols());
    for (int k = 0; k < times; ++k) d += up.middleRows(k * m, m);
    g.add_grad(ai, d);
  })};
}

Var Graph::repeat_rows_each(Var a, int times) {
  const Mat& x = value(a);
  Mat out(x.rows() * times, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < times; ++k) out.row(i * times + k) = x.row(i);
  }
  int ai = a.idx;
  Eigen::Index m = x.rows();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, m, times](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    Mat d = Mat::Zero(m, up.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int k = 0; k < times; ++k) d.row(i) += up.row(i * times + k);
    }
    g.add_grad(ai, d);
  })};
}

Var Graph::reshape_rows(Var a, int rows, int cols) {
  const Mat& x = value(a);
  if (static_cast<Eigen::Index>(rows) * cols != x.size()) {
    throw Error(ErrorCode::config, "reshape_rows size mismatch");
  }
  Mat out(rows, cols);
  Eigen::Index xc = x.cols();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    // row-major flat index on both sides
    Eigen::Index src_r = i / xc, src_c = i % xc;
    out(i / cols, i % cols) = x(src_r, src_c);
  }
  int ai = a.idx;
  Eigen::Index xr = x.rows();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, xr, xc, cols](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    Mat d(xr, xc);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      d(i / xc, i % xc) = up(i / cols, i % cols);
    }
    g.add_grad(ai, d);
  })};
}

Var Graph::gather_rows(Var table, const std::vector<int>& ids) {
  const Mat& t = value(table);
  Mat out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= t.rows()) {
      throw Error(ErrorCode::not_found, "gather_rows id out of range: " + std::to_string(ids[k]));
    }
    out.row(static_cast<Eigen::Index>(k)) = t.row(ids[k]);
  }
  int ti = table.idx;
  Eigen::Index rows = t.rows(), cols = t.cols();
  int self = size();
  return {push(std::move(out), needs(table), [self, ti, ids, rows, cols](Graph& g) {
    const Mat& up = g.nodes_[self].grad;
    Mat d = Mat::Zero(rows, cols);
    for (size_t k = 0; k < ids.size(); ++k) {
      d.row(ids[k]) += up.row(static_cast<Eigen::Index>(k));
    }
    g.add_grad(ti, d);
  })};
}

Var Graph::sum_all(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  int ai = a.idx;
  Eigen::Index rows = value(a).rows(), cols = value(a).cols();
  int self = size();
  return {push(std::move(out), needs(a), [self, ai, rows, cols](Graph& g) {
    g.add_grad(ai, Mat::Constant(rows, cols, g.nodes_[self].grad(0, 0)));
  })};
}

Var Graph::nll_of_softmax_row(Var logits, int target) {
  const Mat& z = value(logits);
  if (z.rows() != 1) throw Error(ErrorCode::config, "nll expects a 1xN logit row");
  if (target < 0 || target >= z.cols()) {
    throw Error(ErrorCode::config, "nll target out of range");
  }
  double m = z.row(0).maxCoeff();
  Eigen::ArrayXd e = (z.row(0).array() - m).exp();
  double lse = m + std::log(e.sum());
  Mat out(1, 1);
  out(0, 0) = lse - z(0, target);
  Eigen::RowVectorXd p = (e / e.sum()).matrix().transpose();
  int li = logits.idx;
  int self = size();
  return {push(std::move(out), needs(logits), [self, li, p, target](Graph& g) {
    double up = g.nodes_[self].grad(0, 0);
    Eigen::RowVectorXd d = p;
    d(target) -= 1.0;
    g.add_grad(li, up * d);
  })};
}

Var Graph::dropout(Var a, double rate, std::mt19937_64& rng, bool enabled) {
  if (!enabled || rate <= 0.0) return a;
  const Mat& x = value(a);
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(x.rows(), x.cols());
  double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? scale : 0.0;
  Var m = constant(std::move(mask));
  return hadamard(a, m);
}

void Graph::backward(Var root) {
  if (value(root).rows() != 1 || value(root).cols() != 1) {
    throw Error(ErrorCode::config, "backward root must be a scalar");
  }
  for (auto& n : nodes_) n.grad = Mat();
  nodes_[root.idx].grad = Mat::Ones(1, 1);
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this);
  }
  for (auto& [tensor, idx] : bindings_) {
    if (nodes_[idx].grad.size() != 0) tensor->grad += nodes_[idx].grad;
  }
}

double max_rel_error(const Mat& analytic, const Mat& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    double a = analytic(i);
    double n = numeric(i);
    double denom = std::max(1e-6, std::abs(a) + std::abs(n));
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

Mat finite_difference(Tensor& tensor, const std::function<double()>& scalar_fn, double delta) {
  Mat out(tensor.value.rows(), tensor.value.cols());
  for (Eigen::Index i = 0; i < tensor.value.size(); ++i) {
    double orig = tensor.value(i);
    tensor.value(i) = orig + delta;
    double up = scalar_fn();
    tensor.value(i) = orig - delta;
    double down = scalar_fn();
    tensor.value(i) = orig;
    out(i) = (up - down) / (2.0 * delta);
  }
  return out;
}

}  // namespace isaaq::ad
