#pragma once

// The spiking student (embedding -> LIF encoder -> blocks of SFSA + SFFN ->
// temporal readout -> LM head) and the dense pre-LN teacher.
//
// Student block at time step t, all streams binary:
//   a   = SFSA(x)
//   r   = x OR a
//   f   = SFFN(r) = SN(SN(r W1 + b1) W2 + b2)
//   out = r OR f
// The OR merge is the residual path: with all block weights and biases at 0
// every neuron stays silent and out == x.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bispik/attention.hpp"
#include "bispik/autograd.hpp"
#include "bispik/kv.hpp"
#include "bispik/neurons.hpp"

namespace bispik {

using Parameters = std::map<std::string, Tensor>;

struct ModelConfig {
  std::size_t vocab_size = 257;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 64;
  std::size_t t_steps = 2;
  NeuronMode neuron_mode = NeuronMode::binary;
  LifParams lif;
  TernaryParams ternary;
  double attn_thr = 1.0;
  double init_std = 0.02;   // dense projections, heads, positional table
  double embed_std = 1.0;   // token table
  double spike_init_gain = 2.0;  // spiking projections ~ N(0, gain^2 / fan_in)
  bool relaxed = false;     // smooth surrogate forward (gradient checking only)

  void validate() const;
  std::size_t d_head() const { return d_model / n_heads; }
  NeuronSpec neuron_spec() const;
};

KeyValues to_kv(const ModelConfig& cfg);
// Reads "model.*" keys over the defaults; unknown model.* keys are rejected.
ModelConfig model_config_from_kv(const KeyValues& kv);

Parameters init_snn_params(const ModelConfig& cfg, std::uint64_t seed);
Parameters init_ann_params(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form parameter counts; must equal count_params of the initialised sets.
std::size_t snn_param_count(const ModelConfig& cfg);
std::size_t ann_param_count(const ModelConfig& cfg);
std::size_t count_params(const Parameters& params, const std::string& skip_prefix = "spad.");

// Hands out one graph leaf (or constant) per named parameter and collects
// the gradients after backward().
class ParamBinder {
 public:
  ParamBinder(const Parameters& params, bool trainable) : params_(params), trainable_(trainable) {}
  ag::Var operator()(const std::string& name);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  // Gradients of every parameter touched so far (zeros where nothing flowed).
  Parameters grads() const;

 private:
  const Parameters& params_;
  bool trainable_;
  std::map<std::string, ag::Var> bound_;
};

// ---- student ----

struct LayerGraph {
  std::vector<std::vector<ag::Var>> attn;  // [t][head] spike attention [L, L]
  std::vector<ag::Var> attn_int;           // [t] concatenated over heads, for checks
  std::vector<ag::Var> hidden;             // [t] block output spikes [L, d]
  double sfsa_in_spikes = 0.0, sffn_in_spikes = 0.0;
  double sfsa_in_elements = 0.0, sffn_in_elements = 0.0;
  std::uint64_t sfsa_macs = 0, sffn_macs = 0;  // one time step, counted by MacCounter
};

struct SnnGraph {
  ag::Var logits;                 // [L, V]
  ag::Var embedding;              // [L, d], identical drive at every step
  std::vector<ag::Var> encoded;   // [t] encoder spikes
  std::vector<ag::Var> readout;   // [t] final-layer spikes fed to the head
  std::vector<LayerGraph> layers;
};

SnnGraph snn_graph(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, ParamBinder& bind);

struct SpikeCounter {
  double spikes = 0.0;    // sum of |spike| (nonzero count for hard spikes)
  double elements = 0.0;  // neurons x time steps
  double rate() const { return elements > 0.0 ? spikes / elements : 0.0; }
};

struct LayerTrace {
  Tensor attn_spikes;  // [T, h, L, L]
  Tensor hidden;       // [T, L, d]
  SpikeCounter sfsa_in, sffn_in;
  std::uint64_t sfsa_macs = 0, sffn_macs = 0;
};

struct TraceBundle {
  std::size_t t_steps = 0;
  std::size_t seq_len = 0;
  std::vector<Tensor> embedding_out;  // [t] -> [L, d]
  std::vector<LayerTrace> layers;
};

struct SnnOutput {
  Tensor logits;
  TraceBundle traces;
};

SnnOutput snn_forward(const std::vector<std::size_t>& tokens, const ModelConfig& cfg,
                      const Parameters& params);
TraceBundle collect_traces(const SnnGraph& g, const ModelConfig& cfg);

struct FfnWeights {
  Tensor w1, b1, w2, b2;  // [d, d_ff], [d_ff], [d_ff, d], [d]
};

struct SffnState {
  NeuronState fc1, fc2;
};

struct SffnResult {
  Tensor out;
  SffnState state;
};

// One SFFN time step on binary input.
SffnResult sffn_forward(const Tensor& x_spikes, const FfnWeights& w, const SffnState& state,
                        const LifParams& p);

// Temporal readout: mean of per-step [L, d] features, then x W + b.
Tensor decode_logits(const std::vector<Tensor>& per_step, const Tensor& head_w, const Tensor& head_b);
ag::Var decode_logits(const std::vector<ag::Var>& per_step, const ag::Var& head_w, const ag::Var& head_b);

// ---- teacher ----

struct AnnGraph {
  ag::Var logits;
  ag::Var embedding;                           // [L, d]
  std::vector<std::vector<ag::Var>> attn;      // [layer][head] [L, L]
  std::vector<ag::Var> hidden;                 // [layer] residual stream after the block
};

AnnGraph ann_graph(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, ParamBinder& bind);

struct AnnOutput {
  Tensor logits;
  Tensor embedding;
  std::vector<Tensor> attn_maps;  // [layer] -> [h, L, L]
  std::vector<Tensor> hidden;     // [layer] -> [L, d]
};

AnnOutput ann_forward(const std::vector<std::size_t>& tokens, const ModelConfig& cfg,
                      const Parameters& params);

// ---- generation ----

enum class ModelKind { snn, ann };

struct GenerateResult {
  std::vector<std::size_t> tokens;  // prompt followed by the new tokens
  std::size_t truncated_steps = 0;  // steps whose context was cut from the left
};

// Greedy (temperature 0, ties to the lowest id) or temperature sampling.
// The whole context is re-run from fresh neuron state for every new token.
GenerateResult generate(const std::vector<std::size_t>& prompt, std::size_t n_new, double temperature,
                        Rng& rng, const ModelConfig& cfg, const Parameters& params,
                        ModelKind kind = ModelKind::snn);

// Row-wise argmax with ties to the lowest index.
std::size_t argmax_row(const Tensor& logits, std::size_t row);

}  // namespace bispik
