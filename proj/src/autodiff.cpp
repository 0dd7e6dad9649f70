#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "kernels.hpp"

namespace clusdiff::ad {

namespace {

NodeP make_node(Tensor val, std::vector<NodeP> parents, std::function<void(Node&)> backfn) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  for (auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backfn = std::move(backfn);
  return n;
}

void check_same_shape(const NodeP& a, const NodeP& b, const char* op) {
  if (!a->val.same_shape(b->val))
    fail(ErrorKind::Shape, std::string(op) + ": shapes " + a->val.shape_str() + " vs " + b->val.shape_str());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor& Node::grad_buf() {
  if (!has_grad()) grad = Tensor::zeros(val.shape());
  return grad;
}

NodeP constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->needs_grad = false;
  return n;
}

NodeP leaf(Tensor v, int param_id) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->needs_grad = true;
  n->param_id = param_id;
  return n;
}

void backward(const NodeP& root) {
  if (root->val.numel() != 1) fail(ErrorKind::Shape, "backward root must be scalar");
  // Iterative DFS topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buf().fill(1.0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backfn && n->has_grad()) n->backfn(*n);
  }
}

NodeP add(const NodeP& a, const NodeP& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int w = 0; w < 2; ++w) {
      auto& p = n.parents[size_t(w)];
      if (!p->needs_grad) continue;
      Tensor& g = p->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
  });
}

NodeP sub(const NodeP& a, const NodeP& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->needs_grad) {
      Tensor& g = n.parents[0]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->needs_grad) {
      Tensor& g = n.parents[1]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
    }
  });
}

NodeP mul(const NodeP& a, const NodeP& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->val;
    const Tensor& bv = n.parents[1]->val;
    if (n.parents[0]->needs_grad) {
      Tensor& g = n.parents[0]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->needs_grad) {
      Tensor& g = n.parents[1]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

NodeP scale(const NodeP& a, double c) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return make_node(std::move(out), {a}, [c](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += c * n.grad[i];
  });
}

NodeP add_scalar(const NodeP& a, double c) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

NodeP silu(const NodeP& a) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] * sigmoid(out[i]);
  return make_node(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->val;
    Tensor& g = n.parents[0]->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) {
      double s = sigmoid(x[i]);
      g[i] += n.grad[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

NodeP reshape(const NodeP& a, std::vector<int> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

NodeP transpose2d(const NodeP& a) {
  if (a->val.rank() != 2) fail(ErrorKind::Shape, "transpose2d wants rank 2, got " + a->val.shape_str());
  int m = a->val.extent(0), k = a->val.extent(1);
  Tensor out({k, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out.at(j, i) = a->val.at(i, j);
  return make_node(std::move(out), {a}, [m, k](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < m; ++i) g.at(i, j) += n.grad.at(j, i);
  });
}

NodeP concat_ch(const NodeP& a, const NodeP& b) {
  if (a->val.rank() != 3 || b->val.rank() != 3)
    fail(ErrorKind::Shape, "concat_ch wants rank-3 inputs");
  if (a->val.extent(1) != b->val.extent(1) || a->val.extent(2) != b->val.extent(2))
    fail(ErrorKind::Shape, "concat_ch: spatial extents differ: " + a->val.shape_str() + " vs " + b->val.shape_str());
  int ca = a->val.extent(0), cb = b->val.extent(0);
  int h = a->val.extent(1), w = a->val.extent(2);
  Tensor out({ca + cb, h, w});
  std::memcpy(out.data(), a->val.data(), sizeof(double) * size_t(ca) * h * w);
  std::memcpy(out.data() + size_t(ca) * h * w, b->val.data(), sizeof(double) * size_t(cb) * h * w);
  return make_node(std::move(out), {a, b}, [ca, cb, h, w](Node& n) {
    size_t na = size_t(ca) * h * w, nb = size_t(cb) * h * w;
    if (n.parents[0]->needs_grad) {
      Tensor& g = n.parents[0]->grad_buf();
      for (size_t i = 0; i < na; ++i) g[int64_t(i)] += n.grad[int64_t(i)];
    }
    if (n.parents[1]->needs_grad) {
      Tensor& g = n.parents[1]->grad_buf();
      for (size_t i = 0; i < nb; ++i) g[int64_t(i)] += n.grad[int64_t(na + i)];
    }
  });
}

NodeP upsample2x(const NodeP& a) {
  if (a->val.rank() != 3) fail(ErrorKind::Shape, "upsample2x wants rank 3");
  int c = a->val.extent(0), h = a->val.extent(1), w = a->val.extent(2);
  Tensor out({c, h * 2, w * 2});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double v = a->val.at(ch, i, j);
        out.at(ch, 2 * i, 2 * j) = v;
        out.at(ch, 2 * i, 2 * j + 1) = v;
        out.at(ch, 2 * i + 1, 2 * j) = v;
        out.at(ch, 2 * i + 1, 2 * j + 1) = v;
      }
  return make_node(std::move(out), {a}, [c, h, w](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          g.at(ch, i, j) += n.grad.at(ch, 2 * i, 2 * j) + n.grad.at(ch, 2 * i, 2 * j + 1) +
                            n.grad.at(ch, 2 * i + 1, 2 * j) + n.grad.at(ch, 2 * i + 1, 2 * j + 1);
  });
}

NodeP avgpool2(const NodeP& a) {
  if (a->val.rank() != 3) fail(ErrorKind::Shape, "avgpool2 wants rank 3");
  int c = a->val.extent(0), h = a->val.extent(1), w = a->val.extent(2);
  if (h % 2 || w % 2) fail(ErrorKind::Shape, "avgpool2 wants even extents, got " + a->val.shape_str());
  Tensor out({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j)
        out.at(ch, i, j) = 0.25 * (a->val.at(ch, 2 * i, 2 * j) + a->val.at(ch, 2 * i, 2 * j + 1) +
                                   a->val.at(ch, 2 * i + 1, 2 * j) + a->val.at(ch, 2 * i + 1, 2 * j + 1));
  return make_node(std::move(out), {a}, [c, h, w](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h / 2; ++i)
        for (int j = 0; j < w / 2; ++j) {
          double d = 0.25 * n.grad.at(ch, i, j);
          g.at(ch, 2 * i, 2 * j) += d;
          g.at(ch, 2 * i, 2 * j + 1) += d;
          g.at(ch, 2 * i + 1, 2 * j) += d;
          g.at(ch, 2 * i + 1, 2 * j + 1) += d;
        }
  });
}

NodeP add_channel(const NodeP& x, const NodeP& v) {
  if (x->val.rank() != 3 || v->val.rank() != 1 || v->val.extent(0) != x->val.extent(0))
    fail(ErrorKind::Shape, "add_channel: " + x->val.shape_str() + " + " + v->val.shape_str());
  int c = x->val.extent(0), hw = x->val.extent(1) * x->val.extent(2);
  Tensor out = x->val;
  for (int ch = 0; ch < c; ++ch) {
    double b = v->val[ch];
    double* row = out.data() + size_t(ch) * hw;
    for (int i = 0; i < hw; ++i) row[i] += b;
  }
  return make_node(std::move(out), {x, v}, [c, hw](Node& n) {
    if (n.parents[0]->needs_grad) {
      Tensor& g = n.parents[0]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->needs_grad) {
      Tensor& g = n.parents[1]->grad_buf();
      for (int ch = 0; ch < c; ++ch) {
        const double* row = n.grad.data() + size_t(ch) * hw;
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += row[i];
        g[ch] += s;
      }
    }
  });
}

NodeP add_rows(const NodeP& x, const NodeP& v) {
  if (x->val.rank() != 2 || v->val.rank() != 1 || v->val.extent(0) != x->val.extent(1))
    fail(ErrorKind::Shape, "add_rows: " + x->val.shape_str() + " + " + v->val.shape_str());
  int n = x->val.extent(0), d = x->val.extent(1);
  Tensor out = x->val;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) += v->val[j];
  return make_node(std::move(out), {x, v}, [n, d](Node& nn) {
    if (nn.parents[0]->needs_grad) {
      Tensor& g = nn.parents[0]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nn.grad[i];
    }
    if (nn.parents[1]->needs_grad) {
      Tensor& g = nn.parents[1]->grad_buf();
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += nn.grad.at(i, j);
        g[j] += s;
      }
    }
  });
}

NodeP matmul(const NodeP& a, const NodeP& b) {
  if (a->val.rank() != 2 || b->val.rank() != 2)
    fail(ErrorKind::Shape, "matmul wants rank-2 inputs, got " + a->val.shape_str() + " and " + b->val.shape_str());
  int m = a->val.extent(0), k = a->val.extent(1);
  int k2 = b->val.extent(0), n2 = b->val.extent(1);
  if (k != k2)
    fail(ErrorKind::Shape, "matmul inner dims disagree: " + a->val.shape_str() + " * " + b->val.shape_str());
  Tensor out({m, n2});
  mm(a->val.data(), b->val.data(), out.data(), m, k, n2);
  return make_node(std::move(out), {a, b}, [m, k, n2](Node& n) {
    const Tensor& av = n.parents[0]->val;
    const Tensor& bv = n.parents[1]->val;
    if (n.parents[0]->needs_grad)
      mm_abT(n.grad.data(), bv.data(), n.parents[0]->grad_buf().data(), m, n2, k, true);
    if (n.parents[1]->needs_grad)
      mm_aTb(av.data(), n.grad.data(), n.parents[1]->grad_buf().data(), k, m, n2, true);
  });
}

NodeP conv2d(const NodeP& x, const NodeP& k, const NodeP& bias, int stride) {
  if (stride != 1 && stride != 2) fail(ErrorKind::Config, "conv2d stride must be 1 or 2");
  if (x->val.rank() != 3) fail(ErrorKind::Shape, "conv2d input wants rank 3, got " + x->val.shape_str());
  if (k->val.rank() != 4 || k->val.extent(2) != 3 || k->val.extent(3) != 3)
    fail(ErrorKind::Shape, "conv2d kernel wants [cout,cin,3,3], got " + k->val.shape_str());
  int cin = x->val.extent(0), h = x->val.extent(1), w = x->val.extent(2);
  int cout = k->val.extent(0);
  if (k->val.extent(1) != cin)
    fail(ErrorKind::Shape, "conv2d channel mismatch: input " + x->val.shape_str() + " kernel " + k->val.shape_str());
  if (bias && bias->val.numel() != cout)
    fail(ErrorKind::Shape, "conv2d bias length != cout");
  int oh = conv_out_extent(h, stride), ow = conv_out_extent(w, stride);
  int ohw = oh * ow;

  auto cols = std::make_shared<std::vector<double>>(size_t(cin) * 9 * ohw);
  im2col3x3(x->val.data(), cin, h, w, stride, cols->data());
  Tensor out({cout, oh, ow});
  mm(k->val.data(), cols->data(), out.data(), cout, cin * 9, ohw);
  if (bias) {
    for (int c = 0; c < cout; ++c) {
      double b = bias->val[c];
      double* row = out.data() + size_t(c) * ohw;
      for (int i = 0; i < ohw; ++i) row[i] += b;
    }
  }
  std::vector<NodeP> parents = bias ? std::vector<NodeP>{x, k, bias} : std::vector<NodeP>{x, k};
  return make_node(std::move(out), std::move(parents),
                   [cols, cin, cout, h, w, stride, ohw](Node& n) {
    const NodeP& xp = n.parents[0];
    const NodeP& kp = n.parents[1];
    if (kp->needs_grad)
      mm_abT(n.grad.data(), cols->data(), kp->grad_buf().data(), cout, ohw, cin * 9, true);
    if (xp->needs_grad) {
      std::vector<double> dcols(size_t(cin) * 9 * ohw);
      mm_aTb(kp->val.data(), n.grad.data(), dcols.data(), cin * 9, cout, ohw);
      col2im3x3(dcols.data(), cin, h, w, stride, xp->grad_buf().data());
    }
    if (n.parents.size() == 3 && n.parents[2]->needs_grad) {
      Tensor& gb = n.parents[2]->grad_buf();
      for (int c = 0; c < cout; ++c) {
        const double* row = n.grad.data() + size_t(c) * ohw;
        double s = 0.0;
        for (int i = 0; i < ohw; ++i) s += row[i];
        gb[c] += s;
      }
    }
  });
}

// Per-group standardization with a variance floor: xhat = (x - mu) / sqrt(max(var, 1e-5)).
// A constant group has var 0, hits the floor, and normalizes to exactly zero.
NodeP group_norm(const NodeP& x, const NodeP& gain, const NodeP& bias, int groups) {
  if (x->val.rank() != 3) fail(ErrorKind::Shape, "group_norm wants rank 3, got " + x->val.shape_str());
  int c = x->val.extent(0), h = x->val.extent(1), w = x->val.extent(2);
  if (groups < 1 || c % groups != 0)
    fail(ErrorKind::Config, "group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(c) + " channels");
  if (gain->val.numel() != c || bias->val.numel() != c)
    fail(ErrorKind::Shape, "group_norm affine params want length " + std::to_string(c));
  constexpr double kVarFloor = 1e-5;
  int cg = c / groups;
  int64_t gn = int64_t(cg) * h * w;
  int hw = h * w;

  auto stats = std::make_shared<std::vector<double>>(size_t(groups) * 3);  // mu, denom, floored
  Tensor xhat({c, h, w});
  for (int g = 0; g < groups; ++g) {
    const double* base = x->val.data() + size_t(g) * gn;
    double mu = 0.0;
    for (int64_t i = 0; i < gn; ++i) mu += base[i];
    mu /= double(gn);
    double var = 0.0;
    for (int64_t i = 0; i < gn; ++i) {
      double d = base[i] - mu;
      var += d * d;
    }
    var /= double(gn);
    bool floored = var < kVarFloor;
    double denom = std::sqrt(floored ? kVarFloor : var);
    (*stats)[size_t(g) * 3] = mu;
    (*stats)[size_t(g) * 3 + 1] = denom;
    (*stats)[size_t(g) * 3 + 2] = floored ? 1.0 : 0.0;
    double* out = xhat.data() + size_t(g) * gn;
    for (int64_t i = 0; i < gn; ++i) out[i] = (base[i] - mu) / denom;
  }
  auto xhat_keep = std::make_shared<Tensor>(xhat);
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double gv = gain->val[ch], bv = bias->val[ch];
    const double* in = xhat.data() + size_t(ch) * hw;
    double* o = out.data() + size_t(ch) * hw;
    for (int i = 0; i < hw; ++i) o[i] = gv * in[i] + bv;
  }
  return make_node(std::move(out), {x, gain, bias},
                   [stats, xhat_keep, groups, c, hw, cg, gn](Node& n) {
    const NodeP& xp = n.parents[0];
    const NodeP& gp = n.parents[1];
    const NodeP& bp = n.parents[2];
    const Tensor& xh = *xhat_keep;
    if (gp->needs_grad) {
      Tensor& gg = gp->grad_buf();
      for (int ch = 0; ch < c; ++ch) {
        const double* dy = n.grad.data() + size_t(ch) * hw;
        const double* xr = xh.data() + size_t(ch) * hw;
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += dy[i] * xr[i];
        gg[ch] += s;
      }
    }
    if (bp->needs_grad) {
      Tensor& gb = bp->grad_buf();
      for (int ch = 0; ch < c; ++ch) {
        const double* dy = n.grad.data() + size_t(ch) * hw;
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += dy[i];
        gb[ch] += s;
      }
    }
    if (!xp->needs_grad) return;
    Tensor& gx = xp->grad_buf();
    for (int g = 0; g < groups; ++g) {
      double denom = (*stats)[size_t(g) * 3 + 1];
      bool floored = (*stats)[size_t(g) * 3 + 2] > 0.5;
      // dxhat = dy * gain (per channel)
      std::vector<double> dxhat(static_cast<size_t>(gn));
      const double* xr = xh.data() + size_t(g) * gn;
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < cg; ++j) {
        int ch = g * cg + j;
        double gv = gp->val[ch];
        const double* dy = n.grad.data() + size_t(ch) * hw;
        double* dst = dxhat.data() + size_t(j) * hw;
        for (int i = 0; i < hw; ++i) {
          double d = dy[i] * gv;
          dst[i] = d;
          sum_dxhat += d;
          sum_dxhat_xhat += d * xr[size_t(j) * hw + i];
        }
      }
      double inv_n = 1.0 / double(gn);
      double* dst = gx.data() + size_t(g) * gn;
      if (floored) {
        // denominator constant; only the mean couples elements
        for (int64_t i = 0; i < gn; ++i)
          dst[i] += (dxhat[size_t(i)] - sum_dxhat * inv_n) / denom;
      } else {
        for (int64_t i = 0; i < gn; ++i)
          dst[i] += (dxhat[size_t(i)] - inv_n * (sum_dxhat + xr[i] * sum_dxhat_xhat)) / denom;
      }
    }
  });
}

NodeP softmax(const NodeP& x, int axis) {
  int r = x->val.rank();
  if (axis < 0 || axis >= r) fail(ErrorKind::Range, "softmax axis " + std::to_string(axis) + " out of range for " + x->val.shape_str());
  const auto& shape = x->val.shape();
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < r; ++i) inner *= shape[size_t(i)];
  for (int i = 0; i < axis; ++i) outer *= shape[size_t(i)];
  int64_t k = shape[size_t(axis)];
  Tensor out = x->val;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double* base = out.data() + o * k * inner + in;
      double mx = base[0];
      for (int64_t j = 1; j < k; ++j) mx = std::max(mx, base[j * inner]);
      double z = 0.0;
      for (int64_t j = 0; j < k; ++j) {
        double e = std::exp(base[j * inner] - mx);
        base[j * inner] = e;
        z += e;
      }
      for (int64_t j = 0; j < k; ++j) base[j * inner] /= z;
    }
  }
  auto y_keep = std::make_shared<Tensor>(out);
  return make_node(std::move(out), {x}, [y_keep, outer, inner, k](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    const Tensor& y = *y_keep;
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = o * k * inner + in;
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += n.grad[base + j * inner] * y[base + j * inner];
        for (int64_t j = 0; j < k; ++j)
          g[base + j * inner] += y[base + j * inner] * (n.grad[base + j * inner] - dot);
      }
    }
  });
}

NodeP mean_all(const NodeP& a) {
  double inv = 1.0 / double(a->val.numel());
  Tensor out({1});
  out[0] = a->val.sum() * inv;
  return make_node(std::move(out), {a}, [inv](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    double d = n.grad[0] * inv;
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += d;
  });
}

NodeP sum_all(const NodeP& a) {
  Tensor out({1});
  out[0] = a->val.sum();
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
  });
}

NodeP mse(const NodeP& a, const NodeP& b) {
  check_same_shape(a, b, "mse");
  int64_t count = a->val.numel();
  double inv = 1.0 / double(count);
  Tensor out({1});
  double s = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    double d = a->val[i] - b->val[i];
    s += d * d;
  }
  out[0] = s * inv;
  return make_node(std::move(out), {a, b}, [inv](Node& n) {
    const Tensor& av = n.parents[0]->val;
    const Tensor& bv = n.parents[1]->val;
    double scale = 2.0 * inv * n.grad[0];
    if (n.parents[0]->needs_grad) {
      Tensor& g = n.parents[0]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += scale * (av[i] - bv[i]);
    }
    if (n.parents[1]->needs_grad) {
      Tensor& g = n.parents[1]->grad_buf();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= scale * (av[i] - bv[i]);
    }
  });
}

NodeP cross_entropy_logits(const NodeP& logits, int target) {
  if (logits->val.rank() != 1) fail(ErrorKind::Shape, "cross_entropy_logits wants rank-1 logits");
  int kk = logits->val.extent(0);
  if (target < 0 || target >= kk) fail(ErrorKind::Range, "cross_entropy target out of range");
  double mx = logits->val[0];
  for (int i = 1; i < kk; ++i) mx = std::max(mx, logits->val[i]);
  double z = 0.0;
  for (int i = 0; i < kk; ++i) z += std::exp(logits->val[i] - mx);
  Tensor out({1});
  out[0] = mx + std::log(z) - logits->val[target];
  return make_node(std::move(out), {logits}, [target, mx, z, kk](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    const Tensor& lv = n.parents[0]->val;
    for (int i = 0; i < kk; ++i) {
      double p = std::exp(lv[i] - mx) / z;
      g[i] += n.grad[0] * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

NodeP embed_row(const NodeP& table, int row) {
  if (table->val.rank() != 2) fail(ErrorKind::Shape, "embed_row wants rank-2 table");
  int v = table->val.extent(0), d = table->val.extent(1);
  if (row < 0 || row >= v) fail(ErrorKind::Range, "embed_row index out of range");
  Tensor out({1, d});
  std::memcpy(out.data(), table->val.data() + size_t(row) * d, sizeof(double) * size_t(d));
  return make_node(std::move(out), {table}, [row, d](Node& n) {
    Tensor& g = n.parents[0]->grad_buf();
    for (int j = 0; j < d; ++j) g[int64_t(row) * d + j] += n.grad[j];
  });
}

double grad_check(const std::function<NodeP(const std::vector<NodeP>&)>& fn,
                  const std::vector<Tensor>& inputs, double eps) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<NodeP> nodes;
    nodes.reserve(xs.size());
    for (const auto& x : xs) nodes.push_back(constant(x));
    NodeP out = fn(nodes);
    if (out->val.numel() != 1) fail(ErrorKind::Shape, "grad_check function must be scalar-valued");
    return out->val[0];
  };

  // Reverse-mode gradients.
  std::vector<NodeP> nodes;
  nodes.reserve(inputs.size());
  for (const auto& x : inputs) nodes.push_back(leaf(x));
  NodeP loss = fn(nodes);
  if (loss->val.numel() != 1) fail(ErrorKind::Shape, "grad_check function must be scalar-valued");
  if (!loss->val.all_finite()) fail(ErrorKind::Numeric, "grad_check: non-finite loss");
  backward(loss);

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const Tensor& g = nodes[t]->has_grad() ? nodes[t]->grad : Tensor::zeros(inputs[t].shape());
    for (int64_t i = 0; i < inputs[t].numel(); ++i) {
      double keep = work[t][i];
      work[t][i] = keep + eps;
      double fp = eval(work);
      work[t][i] = keep - eps;
      double fm = eval(work);
      work[t][i] = keep;
      double fd = (fp - fm) / (2.0 * eps);
      if (!std::isfinite(fd)) fail(ErrorKind::Numeric, "grad_check: non-finite finite-difference value");
      double a = g[i];
      double rel = std::fabs(a - fd) / std::max(1e-3, std::fabs(a) + std::fabs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Tensor sinusoidal_time_embed(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) fail(ErrorKind::Config, "time embedding dim must be positive and even");
  int half = dim / 2;
  Tensor out({dim});
  for (int i = 0; i < half; ++i) {
    double expo = half > 1 ? double(i) / double(half - 1) : 0.0;
    double divisor = std::pow(10000.0, expo);
    double angle = double(t) / divisor;
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

}  // namespace clusdiff::ad
