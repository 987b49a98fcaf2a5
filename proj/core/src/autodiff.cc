// Copyright 2026 The gvswhip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gvswhip/autodiff.h"

#include <cmath>
#include <memory>
#include <string>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

void CheckSameShape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

}  // namespace

Tape::Var Tape::Push(Eigen::MatrixXd value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

void Tape::Accumulate(Var v, const Eigen::MatrixXd& g) {
  Node& n = nodes_[v];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Tape::Var Tape::Leaf(Eigen::MatrixXd value, bool requires_grad) {
  return Push(std::move(value), requires_grad);
}

Tape::Var Tape::MatMul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "matmul: inner dimensions " + std::to_string(value(a).cols()) + " and " +
                    std::to_string(value(b).rows()));
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  const Var out = Push(value(a) * value(b), rg);
  if (rg) {
    nodes_[out].backward = [a, b, out](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out].grad;
      if (t.requires_grad(a)) t.Accumulate(a, g * t.value(b).transpose());
      if (t.requires_grad(b)) t.Accumulate(b, t.value(a).transpose() * g);
    };
  }
  return out;
}

Tape::Var Tape::Add(Var a, Var b) {
  CheckSameShape(value(a), value(b), "add");
  const bool rg = requires_grad(a) || requires_grad(b);
  const Var out = Push(value(a) + value(b), rg);
  if (rg) {
    nodes_[out].backward = [a, b, out](Tape& t) {
      const Eigen::MatrixXd g = t.nodes_[out].grad;
      t.Accumulate(a, g);
      t.Accumulate(b, g);
    };
  }
  return out;
}

Tape::Var Tape::AddRow(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add_row: row has " +
                                               std::to_string(value(row).cols()) +
                                               " columns, matrix " +
                                               std::to_string(value(a).cols()));
  }
  const bool rg = requires_grad(a) || requires_grad(row);
  Eigen::MatrixXd v = value(a);
  v.rowwise() += value(row).row(0);
  const Var out = Push(std::move(v), rg);
  if (rg) {
    nodes_[out].backward = [a, row, out](Tape& t) {
      const Eigen::MatrixXd g = t.nodes_[out].grad;
      t.Accumulate(a, g);
      if (t.requires_grad(row)) t.Accumulate(row, g.colwise().sum());
    };
  }
  return out;
}

Tape::Var Tape::Gelu(Var a) {
  const Eigen::ArrayXXd x = value(a).array();
  const Eigen::ArrayXXd th = (kGeluC * (x + kGeluA * x.cube())).tanh();
  const bool rg = requires_grad(a);
  const Var out = Push((0.5 * x * (1.0 + th)).matrix(), rg);
  if (rg) {
    nodes_[out].backward = [a, out, x, th](Tape& t) {
      const Eigen::ArrayXXd d =
          0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * kGeluC * (1.0 + 3.0 * kGeluA * x.square());
      t.Accumulate(a, (t.nodes_[out].grad.array() * d).matrix());
    };
  }
  return out;
}

Tape::Var Tape::Silu(Var a) {
  const Eigen::ArrayXXd x = value(a).array();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x).exp());
  const bool rg = requires_grad(a);
  const Var out = Push((x * s).matrix(), rg);
  if (rg) {
    nodes_[out].backward = [a, out, x, s](Tape& t) {
      const Eigen::ArrayXXd d = s * (1.0 + x * (1.0 - s));
      t.Accumulate(a, (t.nodes_[out].grad.array() * d).matrix());
    };
  }
  return out;
}

Tape::Var Tape::LayerNorm(Var x, Var gain, Var bias, double eps) {
  const Eigen::MatrixXd& xv = value(x);
  const int n = static_cast<int>(xv.rows());
  const int c = static_cast<int>(xv.cols());
  if (value(gain).size() != c || value(bias).size() != c) {
    throw Error(ErrorCode::kShapeMismatch, "layer_norm: gain/bias width mismatch");
  }
  Eigen::MatrixXd xhat(n, c);
  Eigen::VectorXd rstd(n);
  for (int r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const Eigen::RowVectorXd centered = xv.row(r).array() - mu;
    rstd(r) = 1.0 / std::sqrt(centered.squaredNorm() / c + eps);
    xhat.row(r) = centered * rstd(r);
  }
  Eigen::MatrixXd y = xhat.array().rowwise() * value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  const bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(bias);
  const Var out = Push(std::move(y), rg);
  if (rg) {
    nodes_[out].backward = [x, gain, bias, out, xhat, rstd, c](Tape& t) {
      const Eigen::MatrixXd g = t.nodes_[out].grad;
      if (t.requires_grad(gain)) t.Accumulate(gain, (g.array() * xhat.array()).colwise().sum().matrix());
      if (t.requires_grad(bias)) t.Accumulate(bias, g.colwise().sum());
      if (t.requires_grad(x)) {
        const Eigen::MatrixXd dxhat = g.array().rowwise() * t.value(gain).row(0).array();
        Eigen::MatrixXd dx(g.rows(), c);
        for (int r = 0; r < g.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / c;
          dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        t.Accumulate(x, dx);
      }
    };
  }
  return out;
}

Tape::Var Tape::Attention(Var q, Var k, Var v, int heads, bool causal) {
  const Eigen::MatrixXd& Q = value(q);
  const Eigen::MatrixXd& K = value(k);
  const Eigen::MatrixXd& V = value(v);
  const int n = static_cast<int>(Q.rows());
  const int m = static_cast<int>(K.rows());
  const int d = static_cast<int>(Q.cols());
  if (K.cols() != d || V.cols() != d || V.rows() != m || heads <= 0 || d % heads != 0) {
    throw Error(ErrorCode::kShapeMismatch, "attention: incompatible q/k/v shapes or head count");
  }
  if (causal && n != m) {
    throw Error(ErrorCode::kShapeMismatch, "attention: causal mask needs equal lengths");
  }
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Eigen::MatrixXd>>(heads);
  Eigen::MatrixXd out_value(n, d);
  for (int h = 0; h < heads; ++h) {
    Eigen::MatrixXd s = scale * Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
    for (int i = 0; i < n; ++i) {
      const int visible = causal ? i + 1 : m;
      const double mx = s.row(i).head(visible).maxCoeff();
      double sum = 0.0;
      for (int j = 0; j < visible; ++j) {
        s(i, j) = std::exp(s(i, j) - mx);
        sum += s(i, j);
      }
      s.row(i).head(visible) /= sum;
      if (visible < m) s.row(i).tail(m - visible).setZero();
    }
    out_value.middleCols(h * dh, dh) = s * V.middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  const bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
  const Var out = Push(std::move(out_value), rg);
  if (rg) {
    nodes_[out].backward = [q, k, v, out, probs, heads, dh, scale](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out].grad;
      const Eigen::MatrixXd& Q = t.value(q);
      const Eigen::MatrixXd& K = t.value(k);
      const Eigen::MatrixXd& V = t.value(v);
      Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(Q.rows(), Q.cols());
      Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(K.rows(), K.cols());
      Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(V.rows(), V.cols());
      for (int h = 0; h < heads; ++h) {
        const Eigen::MatrixXd& P = (*probs)[h];
        const Eigen::MatrixXd go = g.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh) = P.transpose() * go;
        const Eigen::MatrixXd dp = go * V.middleCols(h * dh, dh).transpose();
        const Eigen::VectorXd rowdot = (dp.array() * P.array()).rowwise().sum();
        const Eigen::MatrixXd ds = P.array() * (dp.colwise() - rowdot).array();
        dq.middleCols(h * dh, dh) = scale * ds * K.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh) = scale * ds.transpose() * Q.middleCols(h * dh, dh);
      }
      t.Accumulate(q, dq);
      t.Accumulate(k, dk);
      t.Accumulate(v, dv);
    };
  }
  return out;
}

Tape::Var Tape::Reshape(Var a, int rows, int cols) {
  const Eigen::MatrixXd& av = value(a);
  if (static_cast<Eigen::Index>(rows) * cols != av.size()) {
    throw Error(ErrorCode::kShapeMismatch, "reshape: element count mismatch");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = av;
  const RowMajor dst = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  const bool rg = requires_grad(a);
  const Var out = Push(Eigen::MatrixXd(dst), rg);
  if (rg) {
    const int ar = static_cast<int>(av.rows());
    const int ac = static_cast<int>(av.cols());
    nodes_[out].backward = [a, out, ar, ac](Tape& t) {
      const RowMajor g = t.nodes_[out].grad;
      t.Accumulate(a, Eigen::MatrixXd(Eigen::Map<const RowMajor>(g.data(), ar, ac)));
    };
  }
  return out;
}

void Tape::Backward(Var out, const Eigen::MatrixXd& seed) {
  CheckSameShape(value(out), seed, "backward seed");
  if (!requires_grad(out)) return;
  Accumulate(out, seed);
  for (Var i = out; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this);
  }
}

}  // namespace gvswhip
