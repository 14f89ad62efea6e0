#include "bispik/model.hpp"

#include <cmath>
#include <cstdio>

#include "bispik/kv.hpp"

namespace bispik {

namespace {

std::string blk(std::size_t l, const char* name) { return "blk" + std::to_string(l) + "." + name; }

ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b) {
  return ag::add_row(ag::matmul(x, w), b);
}

AttnVars bind_attn(ParamBinder& bind, std::size_t l) {
  return {bind(blk(l, "attn.wq")), bind(blk(l, "attn.bq")), bind(blk(l, "attn.wk")),
          bind(blk(l, "attn.bk")), bind(blk(l, "attn.wv")), bind(blk(l, "attn.bv")),
          bind(blk(l, "attn.wo")), bind(blk(l, "attn.bo"))};
}

void check_tokens(const std::vector<std::size_t>& tokens, const ModelConfig& cfg) {
  if (tokens.empty()) throw ValidationError("forward: empty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw ValidationError("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (auto t : tokens) {
    if (t >= cfg.vocab_size) {
      throw ValidationError("forward: token id " + std::to_string(t) + " out of range for vocab " +
                            std::to_string(cfg.vocab_size));
    }
  }
}

ag::Var embed(const std::vector<std::size_t>& tokens, ParamBinder& bind) {
  std::vector<std::size_t> pos(tokens.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  return ag::add(ag::gather_rows(bind("tok_emb"), tokens), ag::gather_rows(bind("pos_emb"), pos));
}

// Spike count in units of the spike amplitude.
double spike_mass(const Tensor& t, double amp) {
  double s = 0.0;
  for (double v : t.vec()) s += std::abs(v);
  return s / amp;
}

void put_projection(Parameters& p, const std::string& name, std::size_t in, std::size_t out,
                    double std, Rng& rng) {
  p[name] = seeded_normal(rng, {in, out}, std);
}

// Spiking blocks scale by fan-in so that membranes reach threshold at init.
void add_block_params(Parameters& p, const ModelConfig& cfg, std::size_t l, Rng& rng, bool spiking) {
  const std::size_t d = cfg.d_model;
  auto sd = [&](std::size_t fan_in) {
    return spiking ? cfg.spike_init_gain / std::sqrt(static_cast<double>(fan_in)) : cfg.init_std;
  };
  for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) put_projection(p, blk(l, w), d, d, sd(d), rng);
  for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) p[blk(l, b)] = Tensor({d});
  put_projection(p, blk(l, "ffn.w1"), d, cfg.d_ff, sd(d), rng);
  p[blk(l, "ffn.b1")] = Tensor({cfg.d_ff});
  put_projection(p, blk(l, "ffn.w2"), cfg.d_ff, d, sd(cfg.d_ff), rng);
  p[blk(l, "ffn.b2")] = Tensor({d});
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("model.vocab_size must be >= 2");
  if (d_model == 0) throw ConfigError("model.d_model must be >= 1");
  if (n_heads == 0 || d_model % n_heads != 0) throw ConfigError("model.n_heads must divide model.d_model");
  if (d_ff == 0) throw ConfigError("model.d_ff must be >= 1");
  if (max_seq_len == 0) throw ConfigError("model.max_seq_len must be >= 1");
  if (t_steps == 0) throw ConfigError("model.t_steps must be >= 1");
  if (!(attn_thr > 0.0)) throw ConfigError("model.attn_thr must be > 0");
  if (!(init_std >= 0.0)) throw ConfigError("model.init_std must be >= 0");
  if (!(embed_std >= 0.0)) throw ConfigError("model.embed_std must be >= 0");
  if (!(spike_init_gain >= 0.0)) throw ConfigError("model.spike_init_gain must be >= 0");
  lif.validate();
  ternary.validate();
}

NeuronSpec ModelConfig::neuron_spec() const {
  NeuronSpec s = NeuronSpec::binary(lif, relaxed);
  s.mode = neuron_mode;
  s.ternary = ternary;
  return s;
}

KeyValues to_kv(const ModelConfig& c) {
  return {
      {"model.vocab_size", std::to_string(c.vocab_size)},
      {"model.d_model", std::to_string(c.d_model)},
      {"model.n_layers", std::to_string(c.n_layers)},
      {"model.n_heads", std::to_string(c.n_heads)},
      {"model.d_ff", std::to_string(c.d_ff)},
      {"model.max_seq_len", std::to_string(c.max_seq_len)},
      {"model.t_steps", std::to_string(c.t_steps)},
      {"model.neuron_mode", c.neuron_mode == NeuronMode::binary ? "binary" : "ternary"},
      {"model.beta", fmt_double(c.lif.beta)},
      {"model.u_thr", fmt_double(c.lif.u_thr)},
      {"model.surrogate_alpha", fmt_double(c.lif.surrogate_alpha)},
      {"model.ternary_alpha", fmt_double(c.ternary.alpha)},
      {"model.u_reset", fmt_double(c.ternary.u_reset)},
      {"model.attn_thr", fmt_double(c.attn_thr)},
      {"model.init_std", fmt_double(c.init_std)},
      {"model.embed_std", fmt_double(c.embed_std)},
      {"model.spike_init_gain", fmt_double(c.spike_init_gain)},
      {"model.relaxed", c.relaxed ? "true" : "false"},
  };
}

ModelConfig model_config_from_kv(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [key, v] : kv) {
    if (key.rfind("model.", 0) != 0) continue;
    const std::string k = key.substr(6);
    if (k == "vocab_size") c.vocab_size = parse_size(key, v);
    else if (k == "d_model") c.d_model = parse_size(key, v);
    else if (k == "n_layers") c.n_layers = parse_size(key, v);
    else if (k == "n_heads") c.n_heads = parse_size(key, v);
    else if (k == "d_ff") c.d_ff = parse_size(key, v);
    else if (k == "max_seq_len") c.max_seq_len = parse_size(key, v);
    else if (k == "t_steps") c.t_steps = parse_size(key, v);
    else if (k == "neuron_mode") {
      if (v == "binary") c.neuron_mode = NeuronMode::binary;
      else if (v == "ternary") c.neuron_mode = NeuronMode::ternary;
      else throw ConfigError(key + ": expected binary or ternary, got '" + v + "'");
    } else if (k == "beta") c.lif.beta = parse_double(key, v);
    else if (k == "u_thr") c.lif.u_thr = parse_double(key, v);
    else if (k == "surrogate_alpha") c.lif.surrogate_alpha = parse_double(key, v);
    else if (k == "ternary_alpha") c.ternary.alpha = parse_double(key, v);
    else if (k == "u_reset") c.ternary.u_reset = parse_double(key, v);
    else if (k == "attn_thr") c.attn_thr = parse_double(key, v);
    else if (k == "init_std") c.init_std = parse_double(key, v);
    else if (k == "embed_std") c.embed_std = parse_double(key, v);
    else if (k == "spike_init_gain") c.spike_init_gain = parse_double(key, v);
    else if (k == "relaxed") c.relaxed = parse_bool(key, v);
    else throw ConfigError(key + ": unknown model key");
  }
  return c;
}

Parameters init_snn_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Parameters p;
  p["tok_emb"] = seeded_normal(rng, {cfg.vocab_size, cfg.d_model}, cfg.embed_std);
  p["pos_emb"] = seeded_normal(rng, {cfg.max_seq_len, cfg.d_model}, cfg.init_std);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) add_block_params(p, cfg, l, rng, true);
  put_projection(p, "head.w", cfg.d_model, cfg.vocab_size, cfg.init_std, rng);
  p["head.b"] = Tensor({cfg.vocab_size});
  return p;
}

Parameters init_ann_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Parameters p;
  const std::size_t d = cfg.d_model;
  p["tok_emb"] = seeded_normal(rng, {cfg.vocab_size, d}, cfg.embed_std);
  p["pos_emb"] = seeded_normal(rng, {cfg.max_seq_len, d}, cfg.init_std);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    add_block_params(p, cfg, l, rng, false);
    p[blk(l, "ln1.g")] = Tensor::ones({d});
    p[blk(l, "ln1.b")] = Tensor({d});
    p[blk(l, "ln2.g")] = Tensor::ones({d});
    p[blk(l, "ln2.b")] = Tensor({d});
  }
  p["lnf.g"] = Tensor::ones({d});
  p["lnf.b"] = Tensor({d});
  put_projection(p, "head.w", d, cfg.vocab_size, cfg.init_std, rng);
  p["head.b"] = Tensor({cfg.vocab_size});
  return p;
}

std::size_t snn_param_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t embed = c.vocab_size * d + c.max_seq_len * d;
  const std::size_t block = 4 * d * d + 2 * d * c.d_ff + 4 * d + c.d_ff + d;
  const std::size_t head = d * c.vocab_size + c.vocab_size;
  return embed + c.n_layers * block + head;
}

std::size_t ann_param_count(const ModelConfig& c) {
  const std::size_t norms = 4 * c.d_model;
  return snn_param_count(c) + c.n_layers * norms + 2 * c.d_model;
}

std::size_t count_params(const Parameters& params, const std::string& skip_prefix) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) {
    if (!skip_prefix.empty() && name.rfind(skip_prefix, 0) == 0) continue;
    n += t.size();
  }
  return n;
}

ag::Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto p = params_.find(name);
  if (p == params_.end()) throw ValidationError("missing parameter '" + name + "'");
  ag::Var v = trainable_ ? ag::leaf(p->second) : ag::constant(p->second);
  bound_.emplace(name, v);
  return v;
}

Parameters ParamBinder::grads() const {
  Parameters g;
  for (const auto& [name, v] : bound_) g[name] = v->grad.empty() ? Tensor(v->value.shape()) : v->grad;
  return g;
}

SnnGraph snn_graph(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, ParamBinder& bind) {
  cfg.validate();
  check_tokens(tokens, cfg);
  const std::size_t seq = tokens.size(), d = cfg.d_model, steps = cfg.t_steps;
  const NeuronSpec spec = cfg.neuron_spec();
  const double amp = cfg.neuron_mode == NeuronMode::ternary ? cfg.ternary.alpha : 1.0;
  const CausalMask mask = causal_mask(seq);

  SfsaOptions sfsa_opt;
  sfsa_opt.n_heads = cfg.n_heads;
  sfsa_opt.neuron = spec;
  sfsa_opt.attn_thr = cfg.attn_thr;

  SnnGraph g;
  g.embedding = embed(tokens, bind);

  struct LayerState {
    AttnVars attn;
    ag::Var w1, b1, w2, b2;
    SfsaTracks sfsa;
    NeuronTrack fc1, fc2;
  };
  std::vector<LayerState> layers(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    layers[l].attn = bind_attn(bind, l);
    layers[l].w1 = bind(blk(l, "ffn.w1"));
    layers[l].b1 = bind(blk(l, "ffn.b1"));
    layers[l].w2 = bind(blk(l, "ffn.w2"));
    layers[l].b2 = bind(blk(l, "ffn.b2"));
  }
  g.layers.resize(cfg.n_layers);

  NeuronTrack encoder;
  for (std::size_t t = 0; t < steps; ++t) {
    ag::Var x = fire(encoder, g.embedding, spec);
    g.encoded.push_back(x);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      auto& st = layers[l];
      auto& lg = g.layers[l];
      lg.sfsa_in_spikes += spike_mass(x->value, amp);
      lg.sfsa_in_elements += static_cast<double>(seq * d);

      MacCounter sfsa_macs;
      SfsaStep a = sfsa_step(x, st.attn, mask, st.sfsa, sfsa_opt);
      if (t == 0) lg.sfsa_macs = sfsa_macs.count();
      ag::Var r = ag::spike_or(x, a.out);

      lg.sffn_in_spikes += spike_mass(r->value, amp);
      lg.sffn_in_elements += static_cast<double>(seq * d);
      MacCounter sffn_macs;
      ag::Var h = fire(st.fc1, linear(r, st.w1, st.b1), spec);
      ag::Var f = fire(st.fc2, linear(h, st.w2, st.b2), spec);
      if (t == 0) lg.sffn_macs = sffn_macs.count();
      x = ag::spike_or(r, f);

      lg.attn.push_back(a.attn_spikes);
      lg.attn_int.push_back(cfg.n_heads == 1 ? a.attn_int[0] : ag::concat_cols(a.attn_int));
      lg.hidden.push_back(x);
    }
    g.readout.push_back(x);
  }
  g.logits = decode_logits(g.readout, bind("head.w"), bind("head.b"));
  return g;
}

TraceBundle collect_traces(const SnnGraph& g, const ModelConfig& cfg) {
  TraceBundle tb;
  tb.t_steps = g.encoded.size();
  tb.seq_len = g.embedding->value.dim(0);
  const std::size_t seq = tb.seq_len, d = cfg.d_model, h = cfg.n_heads, steps = tb.t_steps;
  for (std::size_t t = 0; t < steps; ++t) tb.embedding_out.push_back(g.embedding->value);
  for (const auto& lg : g.layers) {
    LayerTrace lt;
    lt.attn_spikes = Tensor({steps, h, seq, seq});
    lt.hidden = Tensor({steps, seq, d});
    for (std::size_t t = 0; t < steps; ++t) {
      lt.attn_spikes.set_slice0(t, stack_heads(lg.attn[t]));
      lt.hidden.set_slice0(t, lg.hidden[t]->value);
    }
    lt.sfsa_in = {lg.sfsa_in_spikes, lg.sfsa_in_elements};
    lt.sffn_in = {lg.sffn_in_spikes, lg.sffn_in_elements};
    lt.sfsa_macs = lg.sfsa_macs;
    lt.sffn_macs = lg.sffn_macs;
    tb.layers.push_back(std::move(lt));
  }
  return tb;
}

SnnOutput snn_forward(const std::vector<std::size_t>& tokens, const ModelConfig& cfg,
                      const Parameters& params) {
  ParamBinder bind(params, false);
  SnnGraph g = snn_graph(tokens, cfg, bind);
  require_finite(g.logits->value, "snn_forward logits");
  return {g.logits->value, collect_traces(g, cfg)};
}

SffnResult sffn_forward(const Tensor& x_spikes, const FfnWeights& w, const SffnState& state,
                        const LifParams& p) {
  for (double v : x_spikes.vec()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("sffn_forward: input is not binary");
  }
  if (x_spikes.rank() != 2 || w.w1.rank() != 2 || x_spikes.dim(1) != w.w1.dim(0) ||
      w.w2.rank() != 2 || w.w2.dim(0) != w.w1.dim(1)) {
    throw DimensionError("sffn_forward: input " + shape_str(x_spikes.shape()) + " with W1 " +
                         shape_str(w.w1.shape()) + ", W2 " + shape_str(w.w2.shape()));
  }
  const NeuronSpec spec = NeuronSpec::binary(p);
  const std::size_t seq = x_spikes.dim(0);
  NeuronTrack fc1, fc2;
  if (!state.fc1.u.empty()) fc1 = {ag::constant(state.fc1.u), ag::constant(state.fc1.s_prev)};
  if (!state.fc2.u.empty()) fc2 = {ag::constant(state.fc2.u), ag::constant(state.fc2.s_prev)};
  ag::Var x = ag::constant(x_spikes);
  ag::Var h = fire(fc1, linear(x, ag::constant(w.w1), ag::constant(w.b1)), spec);
  ag::Var out = fire(fc2, linear(h, ag::constant(w.w2), ag::constant(w.b2)), spec);
  (void)seq;
  return {out->value, {{fc1.u->value, fc1.s->value}, {fc2.u->value, fc2.s->value}}};
}

Tensor decode_logits(const std::vector<Tensor>& per_step, const Tensor& head_w, const Tensor& head_b) {
  std::vector<ag::Var> steps;
  for (const auto& t : per_step) steps.push_back(ag::constant(t));
  return decode_logits(steps, ag::constant(head_w), ag::constant(head_b))->value;
}

ag::Var decode_logits(const std::vector<ag::Var>& per_step, const ag::Var& head_w, const ag::Var& head_b) {
  if (per_step.empty()) throw ValidationError("decode_logits: empty time sequence");
  return linear(ag::mean_of(per_step), head_w, head_b);
}

AnnGraph ann_graph(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, ParamBinder& bind) {
  cfg.validate();
  check_tokens(tokens, cfg);
  const CausalMask mask = causal_mask(tokens.size());
  AnnGraph g;
  g.embedding = embed(tokens, bind);
  ag::Var x = g.embedding;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    ag::Var n1 = ag::affine_rows(ag::layer_norm(x), bind(blk(l, "ln1.g")), bind(blk(l, "ln1.b")));
    CsaStep a = csa_step(n1, bind_attn(bind, l), mask, cfg.n_heads);
    x = ag::add(x, a.out);
    ag::Var n2 = ag::affine_rows(ag::layer_norm(x), bind(blk(l, "ln2.g")), bind(blk(l, "ln2.b")));
    ag::Var hid = ag::relu(linear(n2, bind(blk(l, "ffn.w1")), bind(blk(l, "ffn.b1"))));
    x = ag::add(x, linear(hid, bind(blk(l, "ffn.w2")), bind(blk(l, "ffn.b2"))));
    g.attn.push_back(a.attn_map);
    g.hidden.push_back(x);
  }
  ag::Var nf = ag::affine_rows(ag::layer_norm(x), bind("lnf.g"), bind("lnf.b"));
  g.logits = linear(nf, bind("head.w"), bind("head.b"));
  return g;
}

AnnOutput ann_forward(const std::vector<std::size_t>& tokens, const ModelConfig& cfg,
                      const Parameters& params) {
  ParamBinder bind(params, false);
  AnnGraph g = ann_graph(tokens, cfg, bind);
  require_finite(g.logits->value, "ann_forward logits");
  AnnOutput out;
  out.logits = g.logits->value;
  out.embedding = g.embedding->value;
  for (const auto& heads : g.attn) out.attn_maps.push_back(stack_heads(heads));
  for (const auto& h : g.hidden) out.hidden.push_back(h->value);
  return out;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.dim(1); ++c) {
    if (logits(row, c) > logits(row, best)) best = c;
  }
  return best;
}

GenerateResult generate(const std::vector<std::size_t>& prompt, std::size_t n_new, double temperature,
                        Rng& rng, const ModelConfig& cfg, const Parameters& params, ModelKind kind) {
  if (prompt.empty()) throw ValidationError("generate: prompt must be non-empty");
  if (!(temperature >= 0.0)) throw ValidationError("generate: temperature must be >= 0");
  GenerateResult r{prompt, 0};
  for (std::size_t step = 0; step < n_new; ++step) {
    std::vector<std::size_t> ctx = r.tokens;
    if (ctx.size() > cfg.max_seq_len) {
      ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(cfg.max_seq_len));
      ++r.truncated_steps;
    }
    const Tensor logits =
        kind == ModelKind::snn ? snn_forward(ctx, cfg, params).logits : ann_forward(ctx, cfg, params).logits;
    const std::size_t last = ctx.size() - 1;
    std::size_t next;
    if (temperature == 0.0) {
      next = argmax_row(logits, last);
    } else {
      const std::size_t v = logits.dim(1);
      double mx = logits(last, 0);
      for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, logits(last, c));
      std::vector<double> w(v);
      double z = 0.0;
      for (std::size_t c = 0; c < v; ++c) z += (w[c] = std::exp((logits(last, c) - mx) / temperature));
      double u = rng.uniform() * z;
      next = v - 1;
      for (std::size_t c = 0; c < v; ++c) {
        u -= w[c];
        if (u < 0.0) {
          next = c;
          break;
        }
      }
    }
    r.tokens.push_back(next);
  }
  return r;
}

}  // namespace bispik
