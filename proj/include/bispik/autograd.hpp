#pragma once

// Tensor-level reverse-mode differentiation. A forward pass builds a DAG of
// Nodes; backward() walks it once in reverse topological order. Unrolling a
// spiking network over T time steps produces a graph whose reverse sweep is
// exactly backpropagation through time.

#include <functional>
#include <memory>
#include <vector>

#include "bispik/numerics.hpp"

namespace bispik::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;

  // Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buf();
};

Var constant(Tensor value);
Var leaf(Tensor value);  // differentiable input

// Seeds d(root)/d(root) = 1 and propagates to every node that requires grad.
// root must hold exactly one element.
void backward(const Var& root);
// Same sweep with an arbitrary upstream gradient d(loss)/d(root).
void backward(const Var& root, const Tensor& seed);

// Build a node from a forward value and a backward closure. The closure is
// dropped when no parent requires grad.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_row(const Var& a, const Var& bias);  // [m,n] + [n]
Var mask(const Var& a, const Tensor& m);     // Hadamard with a constant
Var relu(const Var& a);
// Per-row normalisation to zero mean, unit variance (no affine part).
Var layer_norm(const Var& a, double eps = 1e-5);
// Per-row gain/shift: a * g + b with g, b of shape [n].
Var affine_rows(const Var& a, const Var& g, const Var& b);
// Row softmax over entries where allowed(i,j) == 1; other entries get 0.
// Rows with no allowed entry are rejected.
Var masked_softmax(const Var& scores, const Tensor& allowed);
Var slice_cols(const Var& a, std::size_t start, std::size_t len);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& table, const std::vector<std::size_t>& rows);
// Elementwise mean of equally shaped tensors.
Var mean_of(const std::vector<Var>& xs);
// Logical OR for {0,1} inputs, smooth in between: a + b - a*b.
Var spike_or(const Var& a, const Var& b);

Var sum_all(const Var& a);
Var mse(const Var& a, const Var& b);  // mean squared difference, scalar
Var mse_to(const Var& a, const Tensor& target);
// Mean token cross-entropy of row logits against integer targets.
Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets);
// tau^2 * KL(softmax(teacher/tau) || softmax(student/tau)), averaged over rows.
Var soft_kl(const Tensor& teacher_logits, const Var& student_logits, double tau);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

}  // namespace bispik::ag
