#include "gaclab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "gaclab/kernels.hpp"

namespace gaclab::autodiff {

namespace {

constexpr double kNormEps = 1e-12;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>(std::move(value));
  n->needs_grad = false;
  for (const auto& p : parents) n->needs_grad = n->needs_grad || p->needs_grad;
  if (n->needs_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                                b->value.shape_str());
  }
}

}  // namespace

Var leaf(Param& p) {
  auto n = std::make_shared<Node>(p.value);
  n->param = &p;
  return n;
}

Var constant(Tensor v) {
  auto n = std::make_shared<Node>(std::move(v));
  n->needs_grad = false;
  return n;
}

Var input(Tensor v) { return std::make_shared<Node>(std::move(v)); }

Var conv2d(const Var& in, const Var& kern, int stride, int pad) {
  if (in->value.rank() != 3) throw std::invalid_argument("conv2d: input must be ic x ih x iw");
  if (kern->value.rank() != 4) throw std::invalid_argument("conv2d: kernel must be kc x ic x kh x kw");
  const auto& is = in->value.shape();
  const auto& ks = kern->value.shape();
  const kernels::Conv2dDims d = kernels::conv2d_dims(is[0], is[1], is[2], ks[0], ks[1], ks[2], ks[3], stride, pad);

  Tensor out({d.kc, d.oh, d.ow});
  kernels::conv2d_forward(in->value.data(), kern->value.data(), out.data(), d);
  return make_node(std::move(out), {in, kern}, [d](Node& n) {
    Node& pin = *n.parents[0];
    Node& pk = *n.parents[1];
    if (pin.needs_grad) kernels::conv2d_backward_input(n.grad.data(), pk.value.data(), pin.grad.data(), d);
    if (pk.needs_grad) kernels::conv2d_backward_kernel(n.grad.data(), pin.value.data(), pk.grad.data(), d);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w->value.rank() != 2) throw std::invalid_argument("linear: weight must be m x n");
  const int m = w->value.dim(0);
  const int n = w->value.dim(1);
  if (static_cast<int>(x->value.size()) != n) {
    throw std::invalid_argument("linear: input length " + std::to_string(x->value.size()) +
                                " does not match weight columns " + std::to_string(n));
  }
  if (b && static_cast<int>(b->value.size()) != m) {
    throw std::invalid_argument("linear: bias length " + std::to_string(b->value.size()) +
                                " does not match weight rows " + std::to_string(m));
  }

  Tensor out({m});
  kernels::affine_forward(x->value.data(), w->value.data(), b ? b->value.data() : nullptr, out.data(), m, n);
  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents), [m, n](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pw = *nd.parents[1];
    if (px.needs_grad) kernels::affine_backward_input(nd.grad.data(), pw.value.data(), px.grad.data(), m, n);
    if (pw.needs_grad) kernels::affine_backward_weight(nd.grad.data(), px.value.data(), pw.grad.data(), m, n);
    if (nd.parents.size() == 3 && nd.parents[2]->needs_grad) {
      Node& pb = *nd.parents[2];
      for (int i = 0; i < m; ++i) pb.grad[i] += nd.grad[i];
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (p.value[i] > 0.0) p.grad[i] += n.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.value[i];
      p.grad[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var l2_normalize(const Var& x) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) sq += x->value[i] * x->value[i];
  const double norm = std::sqrt(sq);
  if (norm <= kNormEps) throw std::invalid_argument("l2_normalize: degenerate vector with near-zero norm");

  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= norm;
  return make_node(std::move(out), {x}, [norm](Node& n) {
    Node& p = *n.parents[0];
    double gy_dot_y = 0.0;
    for (std::size_t i = 0; i < n.grad.size(); ++i) gy_dot_y += n.grad[i] * n.value[i];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      p.grad[i] += (n.grad[i] - gy_dot_y * n.value[i]) / norm;
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *n.parents[k];
      if (!p.needs_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.needs_grad) pa.grad[i] += n.grad[i];
      if (pb.needs_grad) pb.grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.needs_grad) pa.grad[i] += n.grad[i] * pb.value[i];
      if (pb.needs_grad) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make_node(std::move(out), {a}, [s](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return make_node(std::move(out), {a}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

Var mask_kernel(const Var& base, const Var& mask) {
  if (base->value.rank() != 4) throw std::invalid_argument("mask_kernel: base must be kc x ic x kh x kw");
  const std::size_t per_channel = mask->value.size();
  const int kc = base->value.dim(0);
  if (per_channel * kc != base->value.size()) {
    throw std::invalid_argument("mask_kernel: mask shape " + mask->value.shape_str() +
                                " does not match base channel slice of " + base->value.shape_str());
  }

  Tensor out = base->value;
  for (int c = 0; c < kc; ++c) {
    double* o = out.data() + std::size_t(c) * per_channel;
    for (std::size_t i = 0; i < per_channel; ++i) o[i] *= mask->value[i];
  }
  return make_node(std::move(out), {base, mask}, [kc, per_channel](Node& n) {
    Node& pb = *n.parents[0];
    Node& pm = *n.parents[1];
    for (int c = 0; c < kc; ++c) {
      const double* g = n.grad.data() + std::size_t(c) * per_channel;
      const double* bv = pb.value.data() + std::size_t(c) * per_channel;
      double* gb = pb.grad.data() + std::size_t(c) * per_channel;
      for (std::size_t i = 0; i < per_channel; ++i) {
        if (pb.needs_grad) gb[i] += g[i] * pm.value[i];
        if (pm.needs_grad) pm.grad[i] += g[i] * bv[i];
      }
    }
  });
}

Var channel_scale(const Var& feat, const Var& gains) {
  if (feat->value.rank() != 3) throw std::invalid_argument("channel_scale: feature must be kc x oh x ow");
  const int kc = feat->value.dim(0);
  if (static_cast<int>(gains->value.size()) != kc) {
    throw std::invalid_argument("channel_scale: " + std::to_string(gains->value.size()) + " gains for " +
                                std::to_string(kc) + " channels");
  }
  const std::size_t hw = feat->value.size() / kc;

  Tensor out = feat->value;
  for (int c = 0; c < kc; ++c) {
    double* o = out.data() + std::size_t(c) * hw;
    for (std::size_t i = 0; i < hw; ++i) o[i] *= gains->value[c];
  }
  return make_node(std::move(out), {feat, gains}, [kc, hw](Node& n) {
    Node& pf = *n.parents[0];
    Node& pg = *n.parents[1];
    for (int c = 0; c < kc; ++c) {
      const double* g = n.grad.data() + std::size_t(c) * hw;
      const double* fv = pf.value.data() + std::size_t(c) * hw;
      double* gf = pf.grad.data() + std::size_t(c) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        if (pf.needs_grad) gf[i] += g[i] * pg.value[c];
        acc += g[i] * fv[i];
      }
      if (pg.needs_grad) pg.grad[c] += acc;
    }
  });
}

Var spatial_scale(const Var& feat, const Var& gate) {
  if (feat->value.rank() != 3) throw std::invalid_argument("spatial_scale: feature must be kc x oh x ow");
  const int kc = feat->value.dim(0);
  const std::size_t hw = feat->value.size() / kc;
  if (gate->value.size() != hw) {
    throw std::invalid_argument("spatial_scale: gate size " + std::to_string(gate->value.size()) +
                                " does not match feature plane " + std::to_string(hw));
  }

  Tensor out = feat->value;
  for (int c = 0; c < kc; ++c) {
    double* o = out.data() + std::size_t(c) * hw;
    for (std::size_t i = 0; i < hw; ++i) o[i] *= gate->value[i];
  }
  return make_node(std::move(out), {feat, gate}, [kc, hw](Node& n) {
    Node& pf = *n.parents[0];
    Node& pg = *n.parents[1];
    for (int c = 0; c < kc; ++c) {
      const double* g = n.grad.data() + std::size_t(c) * hw;
      const double* fv = pf.value.data() + std::size_t(c) * hw;
      double* gf = pf.grad.data() + std::size_t(c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (pf.needs_grad) gf[i] += g[i] * pg.value[i];
        if (pg.needs_grad) pg.grad[i] += g[i] * fv[i];
      }
    }
  });
}

Var row(const Var& m, int r) {
  if (m->value.rank() < 2) throw std::invalid_argument("row: tensor must have rank >= 2");
  const int rows = m->value.dim(0);
  if (r < 0 || r >= rows) {
    throw std::invalid_argument("row: index " + std::to_string(r) + " out of range [0," + std::to_string(rows) + ")");
  }
  const std::size_t stride = m->value.size() / rows;
  std::vector<int> shape(m->value.shape().begin() + 1, m->value.shape().end());

  Tensor out(shape);
  const double* src = m->value.data() + std::size_t(r) * stride;
  for (std::size_t i = 0; i < stride; ++i) out[i] = src[i];
  return make_node(std::move(out), {m}, [r, stride](Node& n) {
    Node& p = *n.parents[0];
    double* dst = p.grad.data() + std::size_t(r) * stride;
    for (std::size_t i = 0; i < stride; ++i) dst[i] += n.grad[i];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  if (Tensor::numel(shape) != x->value.size()) {
    throw std::invalid_argument("reshape: cannot view " + x->value.shape_str() + " as " + Tensor::shape_str(shape));
  }
  Tensor out(std::move(shape), x->value.raw());
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

Var flatten(const Var& x) { return reshape(x, {static_cast<int>(x->value.size())}); }

Var sum(const Var& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return make_node(Tensor::scalar(acc), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x->value.size())); }

Var abs(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (p.value[i] > 0.0) {
        p.grad[i] += n.grad[i];
      } else if (p.value[i] < 0.0) {
        p.grad[i] -= n.grad[i];
      }
    }
  });
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i] * b->value[i];
  return make_node(Tensor::scalar(acc), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    for (std::size_t i = 0; i < pa.grad.size(); ++i) {
      if (pa.needs_grad) pa.grad[i] += n.grad[0] * pb.value[i];
      if (pb.needs_grad) pb.grad[i] += n.grad[0] * pa.value[i];
    }
  });
}

Var square_norm(const Var& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i] * x->value[i];
  return make_node(Tensor::scalar(acc), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += 2.0 * n.grad[0] * p.value[i];
  });
}

Var concat_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_scalars: empty list");
  Tensor out({static_cast<int>(xs.size())});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i]->value.size() != 1) throw std::invalid_argument("concat_scalars: all entries must be scalars");
    out[i] = xs[i]->value[0];
  }
  return make_node(std::move(out), xs, [](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Node& p = *n.parents[i];
      if (p.needs_grad) p.grad[0] += n.grad[i];
    }
  });
}

Var cross_entropy(const Var& logits, int label) {
  const int c = static_cast<int>(logits->value.size());
  if (label < 0 || label >= c) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(c) + " classes");
  }
  double mx = logits->value[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, logits->value[i]);
  double lse = 0.0;
  for (int i = 0; i < c; ++i) lse += std::exp(logits->value[i] - mx);
  lse = std::log(lse) + mx;
  const double loss = lse - logits->value[label];
  return make_node(Tensor::scalar(loss), {logits}, [label, lse](Node& n) {
    Node& p = *n.parents[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const double soft = std::exp(p.value[i] - lse);
      const double delta = static_cast<int>(i) == label ? 1.0 : 0.0;
      p.grad[i] += n.grad[0] * (soft - delta);
    }
  });
}

void backward(const Var& out) {
  if (out->value.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got shape " + out->value.shape_str());
  }

  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(out.get(), 0);
  seen.insert(out.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  out->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
  for (Node* n : order) {
    if (n->param) {
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->param->grad[i] += n->grad[i];
    }
  }
  // Release the recorded graph.
  for (Node* n : order) {
    n->backprop = nullptr;
    n->parents.clear();
  }
}

double grad_check(const std::function<Var()>& build, const std::vector<Param*>& params, double eps) {
  if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");

  for (Param* p : params) p->zero_grad();
  Var out = build();
  if (out->value.size() != 1) throw std::invalid_argument("grad_check: graph output must be scalar");
  backward(out);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double fp = build()->value[0];
      p->value[i] = saved - eps;
      const double fm = build()->value[0];
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = std::fabs(analytic[pi][i] - numeric) / std::max(1.0, std::fabs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  for (Param* p : params) p->zero_grad();
  return max_err;
}

}  // namespace gaclab::autodiff
