#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tensor.hpp"

namespace clusdiff::ad {

struct Node;
using NodeP = std::shared_ptr<Node>;

/// One value in a dynamically built reverse-mode graph. Graphs are
/// rebuilt per forward pass; backward() walks them once in reverse
/// topological order. All ops are pure with respect to their inputs.
struct Node {
  Tensor val;
  Tensor grad;  // allocated on demand during backward
  bool needs_grad = false;
  int param_id = -1;  // >= 0 marks a parameter leaf
  std::vector<NodeP> parents;
  std::function<void(Node&)> backfn;  // reads this->grad, accumulates into parents

  Tensor& grad_buf();
  bool has_grad() const { return grad.numel() == val.numel() && grad.rank() == val.rank(); }
};

NodeP constant(Tensor v);
NodeP leaf(Tensor v, int param_id = -1);

/// Seeds root (a scalar) with gradient 1 and propagates.
void backward(const NodeP& root);

// -- elementwise / shape --
NodeP add(const NodeP& a, const NodeP& b);
NodeP sub(const NodeP& a, const NodeP& b);
NodeP mul(const NodeP& a, const NodeP& b);
NodeP scale(const NodeP& a, double c);
NodeP add_scalar(const NodeP& a, double c);
NodeP silu(const NodeP& a);
NodeP reshape(const NodeP& a, std::vector<int> shape);
NodeP transpose2d(const NodeP& a);
NodeP concat_ch(const NodeP& a, const NodeP& b);   // rank-3, along channels
NodeP upsample2x(const NodeP& a);                  // rank-3 nearest
NodeP avgpool2(const NodeP& a);                    // rank-3, 2x2 mean
NodeP add_channel(const NodeP& x, const NodeP& v); // x[C,H,W] + v[C] broadcast
NodeP add_rows(const NodeP& x, const NodeP& v);    // x[n,d] + v[d] broadcast per row

// -- contractions --
NodeP matmul(const NodeP& a, const NodeP& b);
/// x[cin,h,w] (*) k[cout,cin,3,3] + b[cout]; pad 1, stride 1|2. bias may be null.
NodeP conv2d(const NodeP& x, const NodeP& k, const NodeP& bias, int stride);

// -- normalization / attention pieces --
NodeP group_norm(const NodeP& x, const NodeP& gain, const NodeP& bias, int groups);
NodeP softmax(const NodeP& x, int axis);

// -- reductions / losses --
NodeP mean_all(const NodeP& a);
NodeP sum_all(const NodeP& a);
NodeP mse(const NodeP& a, const NodeP& b);
/// logits rank-1 [K]; returns scalar -log softmax(logits)[target].
NodeP cross_entropy_logits(const NodeP& logits, int target);
/// table[V,d] -> row [1,d]
NodeP embed_row(const NodeP& table, int row);

/// Max relative error between reverse-mode and central-difference
/// gradients of a scalar-valued function of the given inputs.
/// rel = |a-b| / max(1e-3, |a|+|b|).
double grad_check(const std::function<NodeP(const std::vector<NodeP>&)>& fn,
                  const std::vector<Tensor>& inputs, double eps = 1e-5);

/// Interleaved sin/cos positional features of a timestep; divisors run
/// geometrically over [1, 1e4]. Not differentiable (constant per t).
Tensor sinusoidal_time_embed(int t, int dim);

}  // namespace clusdiff::ad
