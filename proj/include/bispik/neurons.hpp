#pragma once

// Binary LIF and ternary spiking neurons, the arctangent surrogate gradient,
// constant-drive firing rates and the eligibility-trace recursion.
//
// Binary LIF (soft reset):
//   U_t = I_t + beta * U_{t-1} - S_{t-1} * U_thr,   S_t = 1[U_t >= U_thr]
// Ternary neuron, charge H_t = I_t + beta * U_{t-1}, then
//   S_t = +a if H_t > a, -a if H_t < -a, 0 otherwise
//   U_t = H_t * (a - S_t) + U_reset * S_t
// Surrogate (derivative of the threshold only; forward stays hard):
//   S(u) ~ atan(pi/2 * alpha * u) / pi + 1/2
//   dS/du = (alpha/2) / (1 + (pi/2 * alpha * u)^2)      in (0, alpha/2]
// with u measured relative to the threshold.

#include <vector>

#include "bispik/autograd.hpp"
#include "bispik/numerics.hpp"

namespace bispik {

enum class NeuronMode { binary, ternary };

struct LifParams {
  double beta = 0.5;
  double u_thr = 1.0;
  double surrogate_alpha = 2.0;

  void validate() const;
};

struct TernaryParams {
  double alpha = 1.0;
  double u_reset = 0.0;

  void validate() const;
};

struct NeuronState {
  Tensor u;       // U_{t-1}
  Tensor s_prev;  // S_{t-1}

  static NeuronState zeros(const Shape& shape) { return {Tensor(shape), Tensor(shape)}; }
};

struct StepResult {
  Tensor spike;
  NeuronState state;
};

StepResult lif_step(const NeuronState& state, const Tensor& input_current, const LifParams& p);
// Leak comes from `leak.beta`; the threshold of `leak` is unused.
StepResult ternary_step(const NeuronState& state, const Tensor& input_current, const TernaryParams& p,
                        const LifParams& leak = {});

double surrogate_forward(double u, double alpha);
double surrogate_grad(double u, double alpha);
Tensor surrogate_forward(const Tensor& u, double alpha);
Tensor surrogate_grad(const Tensor& u, double alpha);

// Mean spike count of a LIF neuron driven by the constant current `a` for
// t_steps steps from U_0 = 0.
double empirical_rate(double a, int t_steps, const LifParams& p);

// e_t = X_t + beta * e_{t-1}, e_0 = 0. Returns e_1..e_T.
std::vector<Tensor> eligibility_trace(const std::vector<Tensor>& inputs, double beta);

// Trace of dU_t/dW when the soft-reset path is differentiated as well:
// e_t = X_t + (beta - U_thr * sg(U_{t-1} - U_thr)) * e_{t-1}.
// `membrane` holds U_1..U_T from the forward pass.
std::vector<Tensor> eligibility_trace_with_reset(const std::vector<Tensor>& inputs,
                                                 const std::vector<Tensor>& membrane,
                                                 const LifParams& p);

// --- differentiable neurons used inside the unrolled networks ---

struct NeuronSpec {
  NeuronMode mode = NeuronMode::binary;
  LifParams lif;
  TernaryParams ternary;
  double threshold = 1.0;  // firing threshold of this population (binary mode)
  bool relaxed = false;    // smooth surrogate in the forward pass as well

  static NeuronSpec binary(const LifParams& p, bool relaxed = false) {
    NeuronSpec s;
    s.lif = p;
    s.threshold = p.u_thr;
    s.relaxed = relaxed;
    return s;
  }
};

// Membrane and last spike of one neuron population; empty before step 1.
struct NeuronTrack {
  ag::Var u;
  ag::Var s;
};

// One time step: integrates `current` into `track` and returns the spikes.
ag::Var fire(NeuronTrack& track, const ag::Var& current, const NeuronSpec& spec);

}  // namespace bispik
