#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gaclab/tensor.hpp"

// Reverse-mode differentiation over an explicitly recorded graph. The graph
// is rebuilt on every forward pass; backward() releases it. Every op stores
// a closure that pulls this node's gradient into its parents'.
namespace gaclab::autodiff {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // may be empty (leaves, constants)
  Param* param = nullptr;               // set when this leaf tracks a Param
  bool needs_grad = true;

  explicit Node(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
};

// Leaf tracking a trainable Param; backward() accumulates into p.grad.
Var leaf(Param& p);
// Untracked input; gradients do not flow past it.
Var constant(Tensor v);
// Tracked input without a Param (used to differentiate w.r.t. activations).
Var input(Tensor v);

// --- primitive ops ---
Var conv2d(const Var& in, const Var& kern, int stride, int pad);
Var linear(const Var& x, const Var& w, const Var& b = nullptr);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var l2_normalize(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise, same shape
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// base[c] .* mask for every output channel c; mask shape = base shape minus
// the leading axis.
Var mask_kernel(const Var& base, const Var& mask);
// feat[c,:,:] *= gains[c]
Var channel_scale(const Var& feat, const Var& gains);
// feat[c,:,:] *= gate[:,:] for every channel c; gate is 1 x oh x ow.
Var spatial_scale(const Var& feat, const Var& gate);
// r-th row of a 2-d (or higher) tensor along axis 0.
Var row(const Var& m, int r);

Var reshape(const Var& x, std::vector<int> shape);
Var flatten(const Var& x);
Var sum(const Var& x);                         // scalar
Var mean(const Var& x);                        // scalar
Var abs(const Var& x);
Var dot(const Var& a, const Var& b);           // scalar
Var square_norm(const Var& x);                 // scalar, x . x
Var concat_scalars(const std::vector<Var>& xs);

// -log softmax(logits)[label]
Var cross_entropy(const Var& logits, int label);

// Runs reverse-mode accumulation from a scalar output and adds each tracked
// leaf's gradient into its Param::grad.
void backward(const Var& out);

// Central finite-difference check of a scalar-valued graph over `params`.
// Returns max over parameter entries of |analytic - numeric| / max(1, |numeric|).
// eps must lie in [1e-6, 1e-3]; non-scalar graphs are rejected.
double grad_check(const std::function<Var()>& build, const std::vector<Param*>& params, double eps);

}  // namespace gaclab::autodiff
