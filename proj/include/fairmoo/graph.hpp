#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fairmoo/param_vector.hpp"
#include "fairmoo/tensor.hpp"

namespace fairmoo::ad {

using NodeId = int;

enum class Op {
  Input,      // differentiable leaf
  Constant,   // non-differentiable leaf
  Affine,     // y[B,out] = x[B,in] * W[out,in]^T + b[out]
  MatMul,     // C[m,n] = A[m,k] * B[k,n]
  Tanh,
  Relu,
  Add,        // elementwise, same shape
  Mul,        // elementwise, same shape
  Scale,      // x * constant scalar
  Sum,        // -> scalar
  Mean,       // -> scalar
  SqErr,      // mean((a-b)^2) -> scalar
  MaskedSqErr // masked squared error vs a constant mask -> scalar
};

// How a masked squared error is normalized: by the total element count
// (keeps small regions small, matching the default objectives) or by the
// number of mask-active cells.
enum class MaskNorm { FullCount, MaskedCount };

struct Node {
  Op op;
  std::array<NodeId, 3> in{-1, -1, -1};
  Tensor value;
  double scalar = 0.0;    // Scale factor / MaskedSqErr divisor
  MaskNorm norm = MaskNorm::FullCount;
};

// Record-and-replay tape over a fixed operator vocabulary. Forward values
// are computed eagerly at construction; construction order is the
// topological order, so the backward pass is a single reverse scan that
// touches every node exactly once. Unsupported compositions cannot be
// expressed: shape or argument errors throw at graph construction.
class Graph {
 public:
  NodeId input(Tensor v);
  NodeId constant(Tensor v);

  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double c);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId sq_err(NodeId a, NodeId b);
  NodeId masked_sq_err(NodeId a, NodeId b, NodeId mask, MaskNorm norm = MaskNorm::FullCount);

  const Tensor& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  double scalar_value(NodeId id) const { return value(id).scalar_value(); }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient of the scalar node `out` with respect to each node in `wrt`
  // (must be Input leaves). Reverse topological sweep; forward values are
  // reused, so several losses on one graph share one forward pass.
  std::vector<Tensor> gradients(NodeId out, const std::vector<NodeId>& wrt) const;

  // Recomputes every non-leaf value from its inputs and returns the
  // maximum absolute deviation from the recorded values. Zero by
  // construction; exists so tests can pin the replay contract.
  double replay_deviation() const;

 private:
  NodeId push(Node n);
  Tensor eval(const Node& n) const;

  std::vector<Node> nodes_;
};

// Scalar function of a parameter vector, expressed by building tape nodes
// over one Input leaf per parameter segment.
using ScalarFn = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

// Value and exact reverse-mode gradient of f at theta.
std::pair<double, ParamVector> value_and_grad(const ScalarFn& f, const ParamVector& theta);

// Forward evaluation only.
double evaluate(const ScalarFn& f, const ParamVector& theta);

// Central-difference gradient, (f(x+h e_j) - f(x-h e_j)) / 2h per
// coordinate. Independent oracle for value_and_grad; throws naming the
// coordinate if an evaluation is non-finite.
ParamVector finite_diff(const ScalarFn& f, const ParamVector& theta, double h);

// Eager masked squared error sharing the tape kernel bit-for-bit.
double masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask,
                  MaskNorm norm = MaskNorm::FullCount);

}  // namespace fairmoo::ad
