#pragma once

// Softmax-free spiking attention (SFSA), the binary causal mask, and the
// softmax causal self-attention (CSA) used by the dense teacher.
//
// One SFSA time step on binary input X [L, d]:
//   1. q, k, v   = X Wq + bq, X Wk + bk, X Wv + bv            (real)
//   2. Sq, Sk, Sv = SN_Q(q), SN_K(k), SN_V(v)                  (spikes)
//   3. per head:  attn_int = Sq_h Sk_h^T                        (integers in [0, d_head])
//   4.            Sa_h = SN_Attn(mask .* attn_int)              (spikes)
//   5.            attn_out_h = Sa_h Sv_h                        (integers); Sao = SN_AttnOut(concat)
//   6. fp_out = Sao Wo + bo
//   7. out = SN_Out(fp_out)
// No scaling, no softmax; the attention neuron's threshold normalises scores.

#include <optional>
#include <vector>

#include "bispik/autograd.hpp"
#include "bispik/neurons.hpp"

namespace bispik {

struct AttnWeights {
  Tensor w_q, w_k, w_v, w_out;  // [d, d], applied as X W
  Tensor b_q, b_k, b_v, b_out;  // [d]

  static AttnWeights zeros(std::size_t d);
  std::size_t d_model() const { return w_q.rank() == 2 ? w_q.dim(0) : 0; }
  void validate() const;
};

struct CausalMask {
  Tensor m;  // [L, L], m(i,j) = 1 iff j <= i and key j is not padding
  std::size_t size() const { return m.rank() == 2 ? m.dim(0) : 0; }
};

// pad_mask, if given, is a {0,1} vector of length seq_len (1 = real token).
CausalMask causal_mask(std::size_t seq_len, const std::optional<Tensor>& pad_mask = std::nullopt);

struct SfsaOptions {
  std::size_t n_heads = 1;
  NeuronSpec neuron;       // used for SN_Q/K/V, SN_AttnOut and SN_Out
  double attn_thr = 1.0;   // threshold of SN_Attn
  bool check_spikes = true;
};

// ---- differentiable form, used when unrolling whole networks ----

struct AttnVars {
  ag::Var w_q, b_q, w_k, b_k, w_v, b_v, w_out, b_out;
};

struct SfsaTracks {
  NeuronTrack q, k, v, attn_out, out;
  std::vector<NeuronTrack> attn;  // one per head
};

struct SfsaStep {
  ag::Var out;                         // [L, d] spikes
  std::vector<ag::Var> attn_spikes;    // per head [L, L], post-neuron (step 4)
  std::vector<ag::Var> attn_int;       // per head [L, L], masked integer scores
  ag::Var attn_out;                    // [L, d] step-5 integers before SN_AttnOut
};

SfsaStep sfsa_step(const ag::Var& x, const AttnVars& w, const CausalMask& mask, SfsaTracks& tracks,
                   const SfsaOptions& opt);

struct CsaStep {
  ag::Var out;                    // [L, d]
  std::vector<ag::Var> attn_map;  // per head [L, L]
};

CsaStep csa_step(const ag::Var& x, const AttnVars& w, const CausalMask& mask, std::size_t n_heads);

// ---- value-level API ----

struct SfsaState {
  NeuronState q, k, v, attn_out, out;
  std::vector<NeuronState> attn;

  // Fresh (all-zero) state for a sequence of length L and width d.
  static SfsaState fresh(std::size_t seq_len, std::size_t d_model, std::size_t n_heads);
};

struct SfsaResult {
  Tensor out_spikes;   // [L, d]
  Tensor attn_spikes;  // [h, L, L]
  Tensor attn_int;     // [h, L, L]
  Tensor attn_out;     // [L, d]
  SfsaState state;
};

SfsaResult sfsa_forward(const Tensor& x_spikes, const AttnWeights& w, const CausalMask& mask,
                        const SfsaState& state, const SfsaOptions& opt);
SfsaResult sfsa_forward(const Tensor& x_spikes, const AttnWeights& w, const CausalMask& mask,
                        const SfsaState& state, const LifParams& p, std::size_t n_heads = 1);

struct CsaResult {
  Tensor out;       // [L, d]
  Tensor attn_map;  // [h, L, L]
};

CsaResult csa_forward(const Tensor& x, const AttnWeights& w, const CausalMask& mask,
                      std::size_t n_heads = 1);

// Stacks per-head [L, L] values into [h, L, L].
Tensor stack_heads(const std::vector<ag::Var>& heads);

}  // namespace bispik
