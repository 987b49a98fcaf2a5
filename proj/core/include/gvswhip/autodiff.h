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

#ifndef GVSWHIP_AUTODIFF_H_
#define GVSWHIP_AUTODIFF_H_

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace gvswhip {

// Reverse-mode tape over dense matrices. Values are recorded eagerly;
// Backward() walks the nodes in reverse creation order. Nodes that do not
// depend on a leaf marked requires_grad record no backward closure.
class Tape {
 public:
  using Var = int;

  Var Leaf(Eigen::MatrixXd value, bool requires_grad = false);

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v].value; }
  // Zero-sized when no gradient reached the node.
  const Eigen::MatrixXd& grad(Var v) const { return nodes_[v].grad; }
  bool requires_grad(Var v) const { return nodes_[v].requires_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var MatMul(Var a, Var b);
  Var Add(Var a, Var b);
  // Adds the 1 x c row to every row of a.
  Var AddRow(Var a, Var row);
  Var Gelu(Var a);
  Var Silu(Var a);
  // Row-wise normalization with 1 x c gain and bias.
  Var LayerNorm(Var x, Var gain, Var bias, double eps = 1e-5);
  // Multi-head scaled dot-product attention. With causal set, query i sees
  // keys 0..i only (requires equal lengths).
  Var Attention(Var q, Var k, Var v, int heads, bool causal);
  // Row-major reshape.
  Var Reshape(Var a, int rows, int cols);

  void Backward(Var out, const Eigen::MatrixXd& seed);

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  Var Push(Eigen::MatrixXd value, bool requires_grad);
  void Accumulate(Var v, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
};

}  // namespace gvswhip

#endif  // GVSWHIP_AUTODIFF_H_
