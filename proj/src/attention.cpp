#include "bispik/attention.hpp"

#include <cmath>

namespace bispik {

namespace {

ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b) {
  return ag::add_row(ag::matmul(x, w), b);
}

bool is_spike_value(double v, const NeuronSpec& spec) {
  if (spec.mode == NeuronMode::binary) return v == 0.0 || v == 1.0;
  return v == 0.0 || v == spec.ternary.alpha || v == -spec.ternary.alpha;
}

NeuronTrack to_track(const NeuronState& s) {
  return {ag::constant(s.u), ag::constant(s.s_prev)};
}

NeuronState to_state(const NeuronTrack& t, const Shape& shape) {
  if (!t.u) return NeuronState::zeros(shape);
  return {t.u->value, t.s->value};
}

AttnVars constants(const AttnWeights& w) {
  return {ag::constant(w.w_q), ag::constant(w.b_q),   ag::constant(w.w_k), ag::constant(w.b_k),
          ag::constant(w.w_v), ag::constant(w.b_v),   ag::constant(w.w_out),
          ag::constant(w.b_out)};
}

}  // namespace

AttnWeights AttnWeights::zeros(std::size_t d) {
  return {Tensor({d, d}), Tensor({d, d}), Tensor({d, d}), Tensor({d, d}),
          Tensor({d}),    Tensor({d}),    Tensor({d}),    Tensor({d})};
}

void AttnWeights::validate() const {
  const std::size_t d = d_model();
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_out}) {
    if (w->shape() != Shape{d, d}) throw DimensionError("attention weights must be square [d,d]");
    require_finite(*w, "attention weights");
  }
  for (const Tensor* b : {&b_q, &b_k, &b_v, &b_out}) {
    if (b->shape() != Shape{d}) throw DimensionError("attention biases must be [d]");
  }
}

CausalMask causal_mask(std::size_t seq_len, const std::optional<Tensor>& pad_mask) {
  if (seq_len < 1) throw ValidationError("causal_mask: seq_len must be >= 1");
  if (pad_mask) {
    if (pad_mask->size() != seq_len) {
      throw DimensionError("causal_mask: pad_mask length " + std::to_string(pad_mask->size()) +
                           " != seq_len " + std::to_string(seq_len));
    }
    for (double v : pad_mask->vec()) {
      if (v != 0.0 && v != 1.0) throw ValidationError("causal_mask: pad_mask must be binary");
    }
  }
  CausalMask cm{Tensor({seq_len, seq_len})};
  for (std::size_t i = 0; i < seq_len; ++i)
    for (std::size_t j = 0; j <= i; ++j) cm.m(i, j) = pad_mask ? (*pad_mask)[j] : 1.0;
  return cm;
}

SfsaStep sfsa_step(const ag::Var& x, const AttnVars& w, const CausalMask& mask, SfsaTracks& tracks,
                   const SfsaOptions& opt) {
  const auto& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("sfsa: input must be [L, d], got " + shape_str(xv.shape()));
  const std::size_t seq = xv.dim(0), d = xv.dim(1);
  if (mask.size() != seq) {
    throw DimensionError("sfsa: mask " + shape_str(mask.m.shape()) + " for sequence length " +
                         std::to_string(seq));
  }
  if (opt.n_heads == 0 || d % opt.n_heads != 0) {
    throw DimensionError("sfsa: d_model " + std::to_string(d) + " not divisible by heads " +
                         std::to_string(opt.n_heads));
  }
  if (opt.check_spikes && !opt.neuron.relaxed) {
    for (double v : xv.vec()) {
      if (!is_spike_value(v, opt.neuron)) throw ValidationError("sfsa: input is not a spike tensor");
    }
  }
  const std::size_t heads = opt.n_heads, dh = d / heads;
  if (tracks.attn.size() != heads) tracks.attn.assign(heads, {});

  // steps 1-2
  ag::Var sq = fire(tracks.q, linear(x, w.w_q, w.b_q), opt.neuron);
  ag::Var sk = fire(tracks.k, linear(x, w.w_k, w.b_k), opt.neuron);
  ag::Var sv = fire(tracks.v, linear(x, w.w_v, w.b_v), opt.neuron);

  NeuronSpec attn_neuron = opt.neuron;
  attn_neuron.threshold = opt.attn_thr;

  SfsaStep step;
  std::vector<ag::Var> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ag::Var qh = ag::slice_cols(sq, h * dh, dh);
    ag::Var kh = ag::slice_cols(sk, h * dh, dh);
    ag::Var vh = ag::slice_cols(sv, h * dh, dh);
    // steps 3-4
    ag::Var scores = ag::mask(ag::matmul_nt(qh, kh), mask.m);
    ag::Var sa = fire(tracks.attn[h], scores, attn_neuron);
    // step 5 (spike_attn [L,L] x spike_v [L,d_head])
    head_out.push_back(ag::matmul(sa, vh));
    step.attn_int.push_back(scores);
    step.attn_spikes.push_back(sa);
  }
  step.attn_out = heads == 1 ? head_out[0] : ag::concat_cols(head_out);
  ag::Var sao = fire(tracks.attn_out, step.attn_out, opt.neuron);
  // steps 6-7
  step.out = fire(tracks.out, linear(sao, w.w_out, w.b_out), opt.neuron);
  return step;
}

CsaStep csa_step(const ag::Var& x, const AttnVars& w, const CausalMask& mask, std::size_t n_heads) {
  const auto& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("csa: input must be [L, d], got " + shape_str(xv.shape()));
  const std::size_t seq = xv.dim(0), d = xv.dim(1);
  if (mask.size() != seq) throw DimensionError("csa: mask/sequence length mismatch");
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("csa: d_model not divisible by heads");
  const std::size_t dh = d / n_heads;

  Tensor allowed = mask.m;
  for (std::size_t i = 0; i < seq; ++i) allowed(i, i) = 1.0;  // a position always sees itself

  ag::Var q = linear(x, w.w_q, w.b_q);
  ag::Var k = linear(x, w.w_k, w.b_k);
  ag::Var v = linear(x, w.w_v, w.b_v);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  CsaStep step;
  std::vector<ag::Var> head_out;
  for (std::size_t h = 0; h < n_heads; ++h) {
    ag::Var qh = ag::slice_cols(q, h * dh, dh);
    ag::Var kh = ag::slice_cols(k, h * dh, dh);
    ag::Var vh = ag::slice_cols(v, h * dh, dh);
    ag::Var p = ag::masked_softmax(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), allowed);
    head_out.push_back(ag::matmul(p, vh));
    step.attn_map.push_back(p);
  }
  ag::Var merged = n_heads == 1 ? head_out[0] : ag::concat_cols(head_out);
  step.out = linear(merged, w.w_out, w.b_out);
  return step;
}

SfsaState SfsaState::fresh(std::size_t seq_len, std::size_t d_model, std::size_t n_heads) {
  SfsaState s;
  const Shape wide{seq_len, d_model};
  s.q = s.k = s.v = s.attn_out = s.out = NeuronState::zeros(wide);
  s.attn.assign(n_heads, NeuronState::zeros({seq_len, seq_len}));
  return s;
}

Tensor stack_heads(const std::vector<ag::Var>& heads) {
  if (heads.empty()) return {};
  const std::size_t seq = heads[0]->value.dim(0);
  Tensor out({heads.size(), seq, heads[0]->value.dim(1)});
  for (std::size_t h = 0; h < heads.size(); ++h) out.set_slice0(h, heads[h]->value);
  return out;
}

SfsaResult sfsa_forward(const Tensor& x_spikes, const AttnWeights& w, const CausalMask& mask,
                        const SfsaState& state, const SfsaOptions& opt) {
  w.validate();
  if (x_spikes.rank() != 2 || x_spikes.dim(1) != w.d_model()) {
    throw DimensionError("sfsa_forward: input " + shape_str(x_spikes.shape()) + " for d_model " +
                         std::to_string(w.d_model()));
  }
  const std::size_t seq = x_spikes.dim(0), d = x_spikes.dim(1);
  SfsaState init = state;
  if (init.q.u.empty()) init = SfsaState::fresh(seq, d, opt.n_heads);
  if (init.attn.size() != opt.n_heads) throw DimensionError("sfsa_forward: state head count mismatch");

  SfsaTracks tracks{to_track(init.q), to_track(init.k), to_track(init.v), to_track(init.attn_out),
                    to_track(init.out), {}};
  for (const auto& a : init.attn) tracks.attn.push_back(to_track(a));

  SfsaStep step = sfsa_step(ag::constant(x_spikes), constants(w), mask, tracks, opt);

  SfsaResult r;
  r.out_spikes = step.out->value;
  r.attn_spikes = stack_heads(step.attn_spikes);
  r.attn_int = stack_heads(step.attn_int);
  r.attn_out = step.attn_out->value;
  const Shape wide{seq, d};
  r.state.q = to_state(tracks.q, wide);
  r.state.k = to_state(tracks.k, wide);
  r.state.v = to_state(tracks.v, wide);
  r.state.attn_out = to_state(tracks.attn_out, wide);
  r.state.out = to_state(tracks.out, wide);
  for (const auto& a : tracks.attn) r.state.attn.push_back(to_state(a, {seq, seq}));
  return r;
}

SfsaResult sfsa_forward(const Tensor& x_spikes, const AttnWeights& w, const CausalMask& mask,
                        const SfsaState& state, const LifParams& p, std::size_t n_heads) {
  SfsaOptions opt;
  opt.n_heads = n_heads;
  opt.neuron = NeuronSpec::binary(p);
  opt.attn_thr = p.u_thr;
  return sfsa_forward(x_spikes, w, mask, state, opt);
}

CsaResult csa_forward(const Tensor& x, const AttnWeights& w, const CausalMask& mask,
                      std::size_t n_heads) {
  w.validate();
  CsaStep step = csa_step(ag::constant(x), constants(w), mask, n_heads);
  return {step.out->value, stack_heads(step.attn_map)};
}

}  // namespace bispik
