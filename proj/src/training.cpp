#include "bispik/training.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "bispik/errors.hpp"

namespace bispik {

namespace {

constexpr const char* kAdamM = "adam.m.";
constexpr const char* kAdamV = "adam.v.";

double snn_rate(const SnnGraph& g) {
  double spikes = 0.0, elements = 0.0;
  for (const auto& l : g.layers) {
    spikes += l.sfsa_in_spikes + l.sffn_in_spikes;
    elements += l.sfsa_in_elements + l.sffn_in_elements;
  }
  return elements > 0.0 ? spikes / elements : 0.0;
}

void add_into(Parameters& acc, const Parameters& g) {
  for (const auto& [name, t] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      acc.emplace(name, t);
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) it->second[i] += t[i];
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_peak > 0.0)) throw ConfigError("train.lr_peak must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("train.warmup_ratio must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (grad_accum < 1) throw ConfigError("train.grad_accum must be >= 1");
  if (seq_len < 1) throw ConfigError("train.seq_len must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in [0, 1)");
}

KeyValues to_kv(const TrainConfig& c) {
  return {{"train.lr_peak", fmt_double(c.lr_peak)},
          {"train.warmup_ratio", fmt_double(c.warmup_ratio)},
          {"train.total_steps", std::to_string(c.total_steps)},
          {"train.batch_size", std::to_string(c.batch_size)},
          {"train.grad_accum", std::to_string(c.grad_accum)},
          {"train.seq_len", std::to_string(c.seq_len)},
          {"train.grad_clip", fmt_double(c.grad_clip)},
          {"train.adam_beta1", fmt_double(c.adam_beta1)},
          {"train.adam_beta2", fmt_double(c.adam_beta2)},
          {"train.adam_eps", fmt_double(c.adam_eps)},
          {"train.seed", std::to_string(c.seed)},
          {"train.val_fraction", fmt_double(c.val_fraction)},
          {"train.eval_windows", std::to_string(c.eval_windows)}};
}

TrainConfig train_config_from_kv(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    if (key.rfind("train.", 0) != 0) continue;
    const std::string k = key.substr(6);
    if (k == "lr_peak") c.lr_peak = parse_double(key, v);
    else if (k == "warmup_ratio") c.warmup_ratio = parse_double(key, v);
    else if (k == "total_steps") c.total_steps = parse_size(key, v);
    else if (k == "batch_size") c.batch_size = parse_size(key, v);
    else if (k == "grad_accum") c.grad_accum = parse_size(key, v);
    else if (k == "seq_len") c.seq_len = parse_size(key, v);
    else if (k == "grad_clip") c.grad_clip = parse_double(key, v);
    else if (k == "adam_beta1") c.adam_beta1 = parse_double(key, v);
    else if (k == "adam_beta2") c.adam_beta2 = parse_double(key, v);
    else if (k == "adam_eps") c.adam_eps = parse_double(key, v);
    else if (k == "seed") c.seed = parse_u64(key, v);
    else if (k == "val_fraction") c.val_fraction = parse_double(key, v);
    else if (k == "eval_windows") c.eval_windows = parse_size(key, v);
    else throw ConfigError(key + ": unknown key");
  }
  c.validate();
  return c;
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (cfg.total_steps == 0) return 0.0;
  if (step > cfg.total_steps) throw ValidationError("lr_schedule: step beyond total_steps");
  const auto warm = static_cast<std::size_t>(std::floor(cfg.warmup_ratio * static_cast<double>(cfg.total_steps)));
  if (step < warm) return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warm);
  if (cfg.total_steps == warm) return cfg.lr_peak;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_norm(const Parameters& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.vec()) s += v * v;
  return std::sqrt(s);
}

double clip_gradients(Parameters& grads, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("clip threshold must be > 0");
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw EvaluationError("clip_gradients: non-finite gradient norm");
  if (norm > threshold) {
    const double c = threshold / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.vec()) v *= c;
  }
  return norm;
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& st, double lr, const TrainConfig& cfg) {
  ++st.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ValidationError("adam_step: gradient for unknown parameter '" + name + "'");
    Tensor& p = pit->second;
    if (g.shape() != p.shape()) throw DimensionError("adam_step: gradient shape mismatch for '" + name + "'");
    auto [mit, _m] = st.m.try_emplace(name, Tensor(p.shape()));
    auto [vit, _v] = st.v.try_emplace(name, Tensor(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
}

Parameters bptt_backward(const ag::Var& output, const Tensor& upstream, const ParamBinder& bind) {
  if (!output) throw ValidationError("bptt_backward: no graph");
  ag::backward(output, upstream);
  return bind.grads();
}

std::vector<std::size_t> encode_bytes(std::string_view text) {
  std::vector<std::size_t> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(static_cast<unsigned char>(c));
  return out;
}

std::string decode_bytes(const std::vector<std::size_t>& tokens) {
  std::string s;
  for (std::size_t t : tokens) {
    if (t < 256) s.push_back(static_cast<char>(t));
    else if (t != kBos) throw ValidationError("decode_bytes: token " + std::to_string(t) + " out of range");
  }
  return s;
}

CorpusSplit split_corpus(const std::vector<std::size_t>& tokens, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(tokens.size())));
  const auto cut = static_cast<std::ptrdiff_t>(tokens.size() - n_val);
  return {{tokens.begin(), tokens.begin() + cut}, {tokens.begin() + cut, tokens.end()}};
}

std::vector<Window> make_windows(const std::vector<std::size_t>& tokens, std::size_t seq_len) {
  if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
  if (tokens.size() < 2) throw ValidationError("corpus needs at least 2 tokens, got " + std::to_string(tokens.size()));
  std::vector<Window> out;
  if (tokens.size() < seq_len + 1) {
    Window w;
    w.inputs.assign(tokens.begin(), tokens.end() - 1);
    w.targets.assign(tokens.begin() + 1, tokens.end());
    out.push_back(std::move(w));
    return out;
  }
  for (std::size_t start = 0; start + seq_len + 1 <= tokens.size(); start += seq_len) {
    const auto b = tokens.begin() + static_cast<std::ptrdiff_t>(start);
    const auto l = static_cast<std::ptrdiff_t>(seq_len);
    out.push_back({{b, b + l}, {b + 1, b + l + 1}});
  }
  return out;
}

void write_metrics_header(std::ostream& os) {
  os << "# bispik-metrics v1\n";
  os << "step\tlr\ttotal\temb\tattn\tfeat\tsoft\thard\tfiring_rate\tgrad_norm\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.step << '\t' << fmt_double(r.lr) << '\t' << fmt_double(r.total);
  for (double w : r.weighted) os << '\t' << fmt_double(w);
  os << '\t' << fmt_double(r.firing_rate) << '\t' << fmt_double(r.grad_norm) << '\n';
}

TrainResult train_loop(const TrainSetup& setup, const std::vector<std::size_t>& train_tokens,
                       const Parameters& init, std::ostream* metrics) {
  const TrainConfig& tc = setup.train;
  tc.validate();
  setup.model.validate();
  if (setup.mode == TrainMode::spad) {
    if (!setup.teacher) throw ConfigError("distillation requires a teacher checkpoint");
    setup.spad.validate();
    check_compatible(setup.model, setup.teacher->cfg);
  }
  if (tc.seq_len > setup.model.max_seq_len) {
    throw ConfigError("train.seq_len " + std::to_string(tc.seq_len) + " exceeds model.max_seq_len " +
                      std::to_string(setup.model.max_seq_len));
  }

  TrainResult res;
  res.params = init;
  if (metrics) write_metrics_header(*metrics);
  if (tc.total_steps == 0) return res;

  const std::vector<Window> windows = make_windows(train_tokens, tc.seq_len);
  std::vector<std::size_t> order(windows.size());
  std::size_t cursor = order.size();
  Rng rng(tc.seed);
  auto next_window = [&]() -> const Window& {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    return windows[order[cursor++]];
  };

  const std::size_t per_step = tc.batch_size * tc.grad_accum;
  const double inv = 1.0 / static_cast<double>(per_step);
  for (std::size_t s = 0; s < tc.total_steps; ++s) {
    MetricsRow row;
    row.step = s + 1;
    row.lr = lr_schedule(s + 1, tc);
    Parameters grads;
    for (std::size_t k = 0; k < per_step; ++k) {
      const Window& w = next_window();
      ParamBinder bind(res.params, true);
      ag::Var loss;
      std::array<double, 5> weighted{};
      if (setup.mode == TrainMode::teacher) {
        AnnGraph g = ann_graph(w.inputs, setup.model, bind);
        loss = ag::cross_entropy(g.logits, w.targets);
        weighted[kHard] = loss->value[0];
      } else {
        SnnGraph g = snn_graph(w.inputs, setup.model, bind);
        row.firing_rate += snn_rate(g) * inv;
        if (setup.mode == TrainMode::hard) {
          loss = ag::cross_entropy(g.logits, w.targets);
          weighted[kHard] = loss->value[0];
        } else {
          const AnnOutput t = ann_forward(w.inputs, setup.teacher->cfg, setup.teacher->params);
          SpadTerms terms = spad_objective(g, t, w.targets, setup.model, setup.teacher->cfg, setup.spad, bind);
          loss = terms.total;
          for (std::size_t i = 0; i < 5; ++i) weighted[i] = setup.spad.lambda[i] * terms.parts[i]->value[0];
        }
      }
      if (!std::isfinite(loss->value[0])) throw EvaluationError("training loss is not finite at step " + std::to_string(s + 1));
      row.total += loss->value[0] * inv;
      for (std::size_t i = 0; i < 5; ++i) row.weighted[i] += weighted[i] * inv;
      add_into(grads, bptt_backward(ag::scale(loss, inv), Tensor::scalar(1.0), bind));
    }
    row.grad_norm = clip_gradients(grads, tc.grad_clip);
    adam_step(res.params, grads, res.adam, row.lr, tc);
    if (metrics) write_metrics_row(*metrics, row);
    res.metrics.push_back(row);
  }
  return res;
}

EvalResult evaluate(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, const Parameters& params,
                    ModelKind kind, std::size_t seq_len, std::size_t max_windows) {
  const std::vector<Window> windows = make_windows(tokens, std::min(seq_len, cfg.max_seq_len));
  const std::size_t n = max_windows == 0 ? windows.size() : std::min(max_windows, windows.size());
  EvalResult r;
  double ce = 0.0, rate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Window& w = windows[i];
    Tensor logits;
    if (kind == ModelKind::snn) {
      ParamBinder bind(params, false);
      SnnGraph g = snn_graph(w.inputs, cfg, bind);
      logits = g.logits->value;
      rate += snn_rate(g);
    } else {
      logits = ann_forward(w.inputs, cfg, params).logits;
    }
    ce += loss_hard(logits, w.targets) * static_cast<double>(w.targets.size());
    r.tokens += w.targets.size();
  }
  if (r.tokens == 0) throw ValidationError("evaluate: no evaluation windows");
  r.ce = ce / static_cast<double>(r.tokens);
  r.firing_rate = rate / static_cast<double>(n);
  return r;
}

Checkpoint make_checkpoint(ModelKind kind, const ModelConfig& cfg, const Parameters& params,
                           const AdamState* adam) {
  Checkpoint ck;
  ck.meta = to_kv(cfg);
  ck.meta["kind"] = kind == ModelKind::snn ? "snn" : "ann";
  ck.tensors = params;
  if (adam) {
    ck.meta["adam.step"] = std::to_string(adam->step);
    for (const auto& [n, t] : adam->m) ck.tensors[kAdamM + n] = t;
    for (const auto& [n, t] : adam->v) ck.tensors[kAdamV + n] = t;
  }
  return ck;
}

LoadedModel read_model(const Checkpoint& ck) {
  LoadedModel m;
  KeyValues model_kv;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("model.", 0) == 0) model_kv[k] = v;
  }
  m.cfg = model_config_from_kv(model_kv);
  m.cfg.validate();
  auto kind = ck.meta.find("kind");
  if (kind == ck.meta.end()) throw FormatError("checkpoint: missing 'kind'");
  if (kind->second == "snn") m.kind = ModelKind::snn;
  else if (kind->second == "ann") m.kind = ModelKind::ann;
  else throw FormatError("checkpoint: unknown kind '" + kind->second + "'");
  if (auto st = ck.meta.find("adam.step"); st != ck.meta.end()) m.adam.step = parse_u64("adam.step", st->second);
  const std::string pm = kAdamM, pv = kAdamV;
  for (const auto& [n, t] : ck.tensors) {
    if (n.rfind(pm, 0) == 0) m.adam.m[n.substr(pm.size())] = t;
    else if (n.rfind(pv, 0) == 0) m.adam.v[n.substr(pv.size())] = t;
    else m.params[n] = t;
  }
  const Parameters ref = m.kind == ModelKind::snn ? init_snn_params(m.cfg, 0) : init_ann_params(m.cfg, 0);
  for (const auto& [n, t] : ref) {
    auto it = m.params.find(n);
    if (it == m.params.end()) throw FormatError("checkpoint: missing tensor '" + n + "'");
    if (it->second.shape() != t.shape()) {
      throw FormatError("checkpoint: tensor '" + n + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                        shape_str(t.shape()));
    }
  }
  return m;
}

}  // namespace bispik
