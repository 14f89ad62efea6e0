#include "bispik/autograd.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace bispik::ag {

Tensor& Node::grad_buf() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1) throw DimensionError("backward: root must be a scalar");
  backward(root, Tensor(root->value.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  if (seed.shape() != root->value.shape()) {
    throw DimensionError("backward: seed " + shape_str(seed.shape()) + " for output " +
                         shape_str(root->value.shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS; reverse of it is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& g0 = root->grad_buf();
  for (std::size_t i = 0; i < g0.size(); ++i) g0[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {

void accumulate(const Var& p, const Tensor& g) {
  if (!p->requires_grad) return;
  auto& buf = p->grad_buf();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void need_same(const Var& a, const Var& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) +
                         " vs " + shape_str(b->value.shape()));
  }
}

void need_rank2(const Var& a, const char* op) {
  if (a->value.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a->value.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  need_rank2(a, "matmul");
  need_rank2(b, "matmul");
  return make_node(bispik::matmul(a->value, b->value), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) accumulate(a, bispik::matmul_nt(n.grad, b->value));
    if (b->requires_grad) accumulate(b, bispik::matmul_tn(a->value, n.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make_node(bispik::matmul_nt(a->value, b->value), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) accumulate(a, bispik::matmul(n.grad, b->value));
    if (b->requires_grad) accumulate(b, bispik::matmul_tn(n.grad, a->value));
  });
}

Var add(const Var& a, const Var& b) {
  need_same(a, b, "add");
  return make_node(bispik::add(a->value, b->value), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  need_same(a, b, "sub");
  return make_node(bispik::sub(a->value, b->value), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], bispik::scale(n.grad, -1.0));
  });
}

Var mul(const Var& a, const Var& b) {
  need_same(a, b, "mul");
  return make_node(hadamard(a->value, b->value), {a, b}, [](Node& n) {
    accumulate(n.parents[0], hadamard(n.grad, n.parents[1]->value));
    accumulate(n.parents[1], hadamard(n.grad, n.parents[0]->value));
  });
}

Var scale(const Var& a, double c) {
  return make_node(bispik::scale(a->value, c), {a},
                   [c](Node& n) { accumulate(n.parents[0], bispik::scale(n.grad, c)); });
}

Var add_row(const Var& a, const Var& bias) {
  need_rank2(a, "add_row");
  const std::size_t m = a->value.dim(0), k = a->value.dim(1);
  if (bias->value.size() != k) {
    throw DimensionError("add_row: bias " + shape_str(bias->value.shape()) + " for " +
                         shape_str(a->value.shape()));
  }
  Tensor out = a->value;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) out(r, c) += bias->value[c];
  return make_node(std::move(out), {a, bias}, [m, k](Node& n) {
    accumulate(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->grad_buf();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c) g[c] += n.grad(r, c);
    }
  });
}

Var mask(const Var& a, const Tensor& m) {
  if (a->value.shape() != m.shape()) {
    throw DimensionError("mask: " + shape_str(m.shape()) + " vs " + shape_str(a->value.shape()));
  }
  return make_node(hadamard(a->value, m), {a},
                   [m](Node& n) { accumulate(n.parents[0], hadamard(n.grad, m)); });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor g = n.grad;
    const auto& x = n.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(x[i] > 0.0)) g[i] = 0.0;
    accumulate(n.parents[0], g);
  });
}

Var layer_norm(const Var& a, double eps) {
  need_rank2(a, "layer_norm");
  const std::size_t m = a->value.dim(0), k = a->value.dim(1);
  Tensor out({m, k});
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean += a->value(r, c);
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = a->value(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(k);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < k; ++c) out(r, c) = (a->value(r, c) - mean) * inv_std[r];
  }
  return make_node(out, {a}, [m, k, inv_std, y = out](Node& n) {
    // dx = inv_std * (g - mean(g) - y * mean(g * y))
    Tensor gx({m, k});
    for (std::size_t r = 0; r < m; ++r) {
      double gm = 0.0, gy = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        gm += n.grad(r, c);
        gy += n.grad(r, c) * y(r, c);
      }
      gm /= static_cast<double>(k);
      gy /= static_cast<double>(k);
      for (std::size_t c = 0; c < k; ++c) gx(r, c) = inv_std[r] * (n.grad(r, c) - gm - y(r, c) * gy);
    }
    accumulate(n.parents[0], gx);
  });
}

Var affine_rows(const Var& a, const Var& g, const Var& b) {
  need_rank2(a, "affine_rows");
  const std::size_t m = a->value.dim(0), k = a->value.dim(1);
  if (g->value.size() != k || b->value.size() != k) throw DimensionError("affine_rows: gain/shift width");
  Tensor out({m, k});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) out(r, c) = a->value(r, c) * g->value[c] + b->value[c];
  return make_node(std::move(out), {a, g, b}, [m, k](Node& n) {
    const auto& x = n.parents[0];
    const auto& gain = n.parents[1];
    const auto& shift = n.parents[2];
    if (x->requires_grad) {
      auto& gx = x->grad_buf();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c) gx[r * k + c] += n.grad(r, c) * gain->value[c];
    }
    if (gain->requires_grad) {
      auto& gg = gain->grad_buf();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c) gg[c] += n.grad(r, c) * x->value(r, c);
    }
    if (shift->requires_grad) {
      auto& gb = shift->grad_buf();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c) gb[c] += n.grad(r, c);
    }
  });
}

Var masked_softmax(const Var& scores, const Tensor& allowed) {
  need_rank2(scores, "masked_softmax");
  if (allowed.shape() != scores->value.shape()) {
    throw DimensionError("masked_softmax: mask " + shape_str(allowed.shape()) + " vs scores " +
                         shape_str(scores->value.shape()));
  }
  const std::size_t m = scores->value.dim(0), k = scores->value.dim(1);
  Tensor p({m, k});
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (allowed(r, c) != 0.0) mx = std::max(mx, scores->value(r, c));
    if (!std::isfinite(mx)) throw ValidationError("masked_softmax: row " + std::to_string(r) + " fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p(r, c) = allowed(r, c) != 0.0 ? std::exp(scores->value(r, c) - mx) : 0.0;
      z += p(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) p(r, c) /= z;
  }
  return make_node(p, {scores}, [m, k, p](Node& n) {
    Tensor gx({m, k});
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += n.grad(r, c) * p(r, c);
      for (std::size_t c = 0; c < k; ++c) gx(r, c) = p(r, c) * (n.grad(r, c) - dot);
    }
    accumulate(n.parents[0], gx);
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
  need_rank2(a, "slice_cols");
  const std::size_t m = a->value.dim(0), k = a->value.dim(1);
  if (start + len > k) throw DimensionError("slice_cols: range exceeds " + shape_str(a->value.shape()));
  Tensor out({m, len});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < len; ++c) out(r, c) = a->value(r, start + c);
  return make_node(std::move(out), {a}, [m, k, start, len](Node& n) {
    auto& g = n.parents[0]->grad_buf();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < len; ++c) g[r * k + start + c] += n.grad(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0]->value.dim(0);
  std::size_t k = 0;
  for (const auto& p : parts) {
    need_rank2(p, "concat_cols");
    if (p->value.dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    k += p->value.dim(1);
  }
  Tensor out({m, k});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p->value.dim(1);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) out(r, off + c) = p->value(r, c);
    off += w;
  }
  return make_node(std::move(out), parts, [m, k](Node& n) {
    std::size_t off = 0;
    for (const auto& p : n.parents) {
      const std::size_t w = p->value.dim(1);
      if (p->requires_grad) {
        auto& g = p->grad_buf();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += n.grad[r * k + off + c];
      }
      off += w;
    }
  });
}

Var gather_rows(const Var& table, const std::vector<std::size_t>& rows) {
  need_rank2(table, "gather_rows");
  const std::size_t k = table->value.dim(1);
  Tensor out({rows.size(), k});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= table->value.dim(0)) {
      throw ValidationError("gather_rows: index " + std::to_string(rows[r]) + " out of range " +
                            std::to_string(table->value.dim(0)));
    }
    for (std::size_t c = 0; c < k; ++c) out(r, c) = table->value(rows[r], c);
  }
  return make_node(std::move(out), {table}, [rows, k](Node& n) {
    auto& g = n.parents[0]->grad_buf();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < k; ++c) g[rows[r] * k + c] += n.grad(r, c);
  });
}

Var mean_of(const std::vector<Var>& xs) {
  if (xs.empty()) throw ValidationError("mean_of: empty sequence");
  Tensor out(xs[0]->value.shape());
  for (const auto& x : xs) {
    need_same(xs[0], x, "mean_of");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x->value[i];
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (auto& v : out.vec()) v *= inv;
  return make_node(std::move(out), xs, [inv](Node& n) {
    const Tensor g = bispik::scale(n.grad, inv);
    for (const auto& p : n.parents) accumulate(p, g);
  });
}

Var spike_or(const Var& a, const Var& b) {
  need_same(a, b, "spike_or");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i] - a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const auto& x = n.parents[0]->value;
    const auto& y = n.parents[1]->value;
    Tensor gx = n.grad, gy = n.grad;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] *= 1.0 - y[i];
      gy[i] *= 1.0 - x[i];
    }
    accumulate(n.parents[0], gx);
    accumulate(n.parents[1], gy);
  });
}

Var sum_all(const Var& a) {
  return make_node(Tensor::scalar(a->value.sum()), {a}, [](Node& n) {
    Tensor g(n.parents[0]->value.shape(), n.grad[0]);
    accumulate(n.parents[0], g);
  });
}

Var mse(const Var& a, const Var& b) {
  need_same(a, b, "mse");
  const double inv = 1.0 / static_cast<double>(a->value.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    const double d = a->value[i] - b->value[i];
    s += d * d;
  }
  return make_node(Tensor::scalar(s * inv), {a, b}, [inv](Node& n) {
    const auto& x = n.parents[0]->value;
    const auto& y = n.parents[1]->value;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * inv * (x[i] - y[i]) * n.grad[0];
    accumulate(n.parents[0], g);
    accumulate(n.parents[1], bispik::scale(g, -1.0));
  });
}

Var mse_to(const Var& a, const Tensor& target) { return mse(a, constant(target)); }

Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets) {
  need_rank2(logits, "cross_entropy");
  const std::size_t m = logits->value.dim(0), k = logits->value.dim(1);
  if (targets.size() != m) throw DimensionError("cross_entropy: target count differs from rows");
  Tensor p({m, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] >= k) {
      throw ValidationError("cross_entropy: target id " + std::to_string(targets[r]) +
                            " out of range " + std::to_string(k));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, logits->value(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits->value(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) p(r, c) = std::exp(logits->value(r, c) - lse);
    loss += lse - logits->value(r, targets[r]);
  }
  const double inv = 1.0 / static_cast<double>(m);
  return make_node(Tensor::scalar(loss * inv), {logits}, [p, targets, inv, k](Node& n) {
    Tensor g = p;
    for (std::size_t r = 0; r < targets.size(); ++r) g(r, targets[r]) -= 1.0;
    for (auto& v : g.vec()) v *= inv * n.grad[0];
    accumulate(n.parents[0], g);
    (void)k;
  });
}

namespace {

Tensor row_softmax(const Tensor& z, double tau) {
  const std::size_t m = z.dim(0), k = z.dim(1);
  Tensor p({m, k});
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, z(r, c) / tau);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (p(r, c) = std::exp(z(r, c) / tau - mx));
    for (std::size_t c = 0; c < k; ++c) p(r, c) /= s;
  }
  return p;
}

}  // namespace

Var soft_kl(const Tensor& teacher_logits, const Var& student_logits, double tau) {
  need_rank2(student_logits, "soft_kl");
  if (teacher_logits.shape() != student_logits->value.shape()) {
    throw AlignmentError("soft_kl: teacher " + shape_str(teacher_logits.shape()) + " vs student " +
                         shape_str(student_logits->value.shape()));
  }
  if (!(tau > 0.0)) throw ConfigError("soft_kl: tau must be > 0");
  const std::size_t m = teacher_logits.dim(0), k = teacher_logits.dim(1);
  const Tensor pt = row_softmax(teacher_logits, tau);
  const Tensor ps = row_softmax(student_logits->value, tau);
  double kl = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c)
      if (pt(r, c) > 0.0) kl += pt(r, c) * (std::log(pt(r, c)) - std::log(ps(r, c)));
  const double inv = 1.0 / static_cast<double>(m);
  // Guard tiny negative round-off so the loss stays >= 0.
  const double value = std::max(0.0, tau * tau * kl * inv);
  return make_node(Tensor::scalar(value), {student_logits}, [pt, ps, tau, inv](Node& n) {
    // d/dz_s of tau^2 KL = tau * (ps - pt)
    Tensor g = bispik::sub(ps, pt);
    for (auto& v : g.vec()) v *= tau * inv * n.grad[0];
    accumulate(n.parents[0], g);
  });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) throw DimensionError("weighted_sum: count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i]->value.size() != 1) throw DimensionError("weighted_sum: non-scalar term");
    s += weights[i] * scalars[i]->value[0];
  }
  return make_node(Tensor::scalar(s), scalars, [weights](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      if (n.parents[i]->requires_grad) n.parents[i]->grad_buf()[0] += weights[i] * n.grad[0];
    }
  });
}

}  // namespace bispik::ag
