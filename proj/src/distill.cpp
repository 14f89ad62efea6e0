#include "bispik/distill.hpp"

#include <cmath>
#include <sstream>

#include "bispik/errors.hpp"

namespace bispik {

namespace {

double mse_value(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw AlignmentError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

void check_gamma(double g, const char* key) {
  if (!(g >= 0.0 && g <= 1.0)) throw ConfigError(std::string(key) + " must lie in [0, 1]");
}

// Rows of a [L, n] -> zero mean / unit variance; matches ag::layer_norm.
Tensor layer_norm_value(const Tensor& a) { return ag::layer_norm(ag::constant(a))->value; }

Tensor project(const Tensor& m, const std::optional<Tensor>& proj, std::size_t target_cols, const char* what) {
  if (proj) {
    if (proj->rank() != 2 || proj->dim(0) != m.dim(1) || proj->dim(1) != target_cols) {
      throw AlignmentError(std::string(what) + ": projection " + shape_str(proj->shape()) + " cannot map width " +
                           std::to_string(m.dim(1)) + " to " + std::to_string(target_cols));
    }
    return matmul(m, *proj);
  }
  if (m.dim(1) != target_cols) {
    throw ConfigError(std::string(what) + ": projection required for width " + std::to_string(m.dim(1)) +
                      " -> " + std::to_string(target_cols));
  }
  return m;
}

ag::Var project(const ag::Var& m, const ag::Var& proj, std::size_t target_cols, const char* what) {
  if (proj) {
    const Tensor& p = proj->value;
    if (p.rank() != 2 || p.dim(0) != m->value.dim(1) || p.dim(1) != target_cols) {
      throw AlignmentError(std::string(what) + ": projection " + shape_str(p.shape()) + " cannot map width " +
                           std::to_string(m->value.dim(1)) + " to " + std::to_string(target_cols));
    }
    return ag::matmul(m, proj);
  }
  if (m->value.dim(1) != target_cols) {
    throw ConfigError(std::string(what) + ": projection required for width " +
                      std::to_string(m->value.dim(1)) + " -> " + std::to_string(target_cols));
  }
  return m;
}

}  // namespace

void SpadConfig::validate() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] >= 0.0)) throw ConfigError("spad.lambda: weights must be non-negative");
    sum += lambda[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("spad.lambda: weights sum to " + fmt_double(sum) + ", not 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("spad.tau must be > 0");
  check_gamma(gamma_attn, "spad.gamma_attn");
  check_gamma(gamma_feat, "spad.gamma_feat");
}

KeyValues to_kv(const SpadConfig& c) {
  std::string l;
  for (std::size_t i = 0; i < c.lambda.size(); ++i) l += (i ? "," : "") + fmt_double(c.lambda[i]);
  return {{"spad.lambda", l},
          {"spad.tau", fmt_double(c.tau)},
          {"spad.gamma_attn", fmt_double(c.gamma_attn)},
          {"spad.gamma_feat", fmt_double(c.gamma_feat)}};
}

SpadConfig spad_config_from_kv(const KeyValues& kv) {
  SpadConfig c;
  for (const auto& [key, v] : kv) {
    if (key.rfind("spad.", 0) != 0) continue;
    const std::string k = key.substr(5);
    if (k == "lambda") {
      std::stringstream ss(v);
      std::string item;
      std::size_t i = 0;
      while (std::getline(ss, item, ',')) {
        if (i >= 5) throw ConfigError("spad.lambda: expected 5 comma-separated weights");
        c.lambda[i++] = parse_double(key, item);
      }
      if (i != 5) throw ConfigError("spad.lambda: expected 5 comma-separated weights");
    } else if (k == "tau") {
      c.tau = parse_double(key, v);
    } else if (k == "gamma_attn") {
      c.gamma_attn = parse_double(key, v);
    } else if (k == "gamma_feat") {
      c.gamma_feat = parse_double(key, v);
    } else {
      throw ConfigError(key + ": unknown key");
    }
  }
  c.validate();
  return c;
}

std::vector<std::size_t> layer_map(std::size_t n_student, std::size_t n_teacher) {
  if (n_student < 1 || n_teacher < 1) throw ConfigError("layer_map: layer counts must be >= 1");
  if (n_student > n_teacher) {
    throw ConfigError("layer_map: student has " + std::to_string(n_student) + " layers, teacher only " +
                      std::to_string(n_teacher));
  }
  const std::size_t stride = (n_teacher + n_student - 1) / n_student;
  std::vector<std::size_t> m(n_student);
  for (std::size_t i = 1; i <= n_student; ++i) {
    m[i - 1] = std::min(i * stride, n_teacher - n_student + i) - 1;
  }
  return m;
}

Tensor pool_heads(const Tensor& a, std::size_t student_heads) {
  if (a.rank() != 3) throw AlignmentError("pool_heads: expected [h, L, L], got " + shape_str(a.shape()));
  const std::size_t ht = a.dim(0);
  if (student_heads == 0 || ht % student_heads != 0) {
    throw AlignmentError("pool_heads: " + std::to_string(ht) + " teacher heads cannot be pooled into " +
                         std::to_string(student_heads));
  }
  const std::size_t group = ht / student_heads;
  if (group == 1) return a;
  const std::size_t plane = a.dim(1) * a.dim(2);
  Tensor out({student_heads, a.dim(1), a.dim(2)});
  for (std::size_t g = 0; g < student_heads; ++g)
    for (std::size_t k = 0; k < group; ++k)
      for (std::size_t i = 0; i < plane; ++i) out[g * plane + i] += a[(g * group + k) * plane + i];
  return scale(out, 1.0 / static_cast<double>(group));
}

Tensor spike_encode_teacher_attention(const Tensor& a, std::size_t t_steps, const LifParams& p) {
  if (t_steps < 1) throw ValidationError("spike_encode: t_steps must be >= 1");
  require_finite(a, "spike_encode input");
  Shape shape{t_steps};
  shape.insert(shape.end(), a.shape().begin(), a.shape().end());
  Tensor out(shape);
  NeuronState st = NeuronState::zeros(a.shape());
  for (std::size_t t = 0; t < t_steps; ++t) {
    StepResult r = lif_step(st, a, p);
    out.set_slice0(t, r.spike);
    st = std::move(r.state);
  }
  return out;
}

Tensor spike_encode_noisy(const Tensor& a, std::size_t t_steps, const LifParams& p, double noise_std, Rng& rng) {
  if (t_steps < 1) throw ValidationError("spike_encode_noisy: t_steps must be >= 1");
  if (!(noise_std >= 0.0)) throw ValidationError("spike_encode_noisy: noise_std must be >= 0");
  require_finite(a, "spike_encode_noisy input");
  Shape shape{t_steps};
  shape.insert(shape.end(), a.shape().begin(), a.shape().end());
  Tensor out(shape);
  NeuronState st = NeuronState::zeros(a.shape());
  for (std::size_t t = 0; t < t_steps; ++t) {
    StepResult r = lif_step(st, add(a, seeded_normal(rng, a.shape(), noise_std)), p);
    out.set_slice0(t, r.spike);
    st = std::move(r.state);
  }
  return out;
}

Tensor time_mean(const Tensor& stream) {
  if (stream.rank() < 1 || stream.dim(0) == 0) throw ValidationError("time_mean: empty stream");
  const std::size_t steps = stream.dim(0), n = stream.size() / steps;
  Shape shape(stream.shape().begin() + 1, stream.shape().end());
  Tensor out(shape);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i) out[i] += stream[t * n + i];
  return scale(out, 1.0 / static_cast<double>(steps));
}

Tensor spike_rate_map(const Tensor& a, std::size_t t_steps, const LifParams& p) {
  return time_mean(spike_encode_teacher_attention(a, t_steps, p));
}

double loss_attention(const Tensor& a_ann, const Tensor& a_snn_spikes, const SpadConfig& cfg,
                      const LifParams& p) {
  check_gamma(cfg.gamma_attn, "spad.gamma_attn");
  if (a_snn_spikes.rank() != a_ann.rank() + 1) {
    throw AlignmentError("loss_attention: teacher " + shape_str(a_ann.shape()) + " vs student stream " +
                         shape_str(a_snn_spikes.shape()));
  }
  const Tensor student = time_mean(a_snn_spikes);
  const Tensor rate = spike_rate_map(a_ann, a_snn_spikes.dim(0), p);
  return cfg.gamma_attn * mse_value(rate, student, "loss_attention") +
         (1.0 - cfg.gamma_attn) * mse_value(a_ann, student, "loss_attention");
}

double loss_feature(const Tensor& h_ann, const Tensor& h_snn, const SpadConfig& cfg, const LifParams& p,
                    const std::optional<Tensor>& proj) {
  check_gamma(cfg.gamma_feat, "spad.gamma_feat");
  if (h_ann.rank() != 2 || h_snn.rank() != 3 || h_ann.dim(0) != h_snn.dim(1)) {
    throw AlignmentError("loss_feature: teacher " + shape_str(h_ann.shape()) + " vs student stream " +
                         shape_str(h_snn.shape()));
  }
  const Tensor mapped = project(time_mean(h_snn), proj, h_ann.dim(1), "loss_feature");
  const double mse_branch = mse_value(layer_norm_value(mapped), h_ann, "loss_feature");
  const Tensor rate = spike_rate_map(h_ann, h_snn.dim(0), p);
  const double rate_branch = mse_value(rate, mapped, "loss_feature");
  return cfg.gamma_feat * rate_branch + (1.0 - cfg.gamma_feat) * mse_branch;
}

double loss_embedding(const Tensor& e_ann, const std::vector<Tensor>& e_snn_steps,
                      const std::optional<Tensor>& proj) {
  if (e_snn_steps.empty()) throw ValidationError("loss_embedding: no student steps");
  Tensor m(e_snn_steps[0].shape());
  for (const auto& e : e_snn_steps) {
    if (e.shape() != m.shape()) throw AlignmentError("loss_embedding: student steps differ in shape");
    m = add(m, e);
  }
  m = scale(m, 1.0 / static_cast<double>(e_snn_steps.size()));
  if (m.rank() != 2 || e_ann.rank() != 2 || m.dim(0) != e_ann.dim(0)) {
    throw AlignmentError("loss_embedding: teacher " + shape_str(e_ann.shape()) + " vs student " +
                         shape_str(m.shape()));
  }
  return mse_value(e_ann, project(m, proj, e_ann.dim(1), "loss_embedding"), "loss_embedding");
}

double loss_soft(const Tensor& z_ann, const Tensor& z_snn, double tau) {
  return ag::soft_kl(z_ann, ag::constant(z_snn), tau)->value[0];
}

double loss_hard(const Tensor& z_snn, const std::vector<std::size_t>& targets) {
  return ag::cross_entropy(ag::constant(z_snn), targets)->value[0];
}

LossBreakdown loss_total(const std::array<double, 5>& components, const SpadConfig& cfg) {
  cfg.validate();
  LossBreakdown b;
  for (std::size_t i = 0; i < 5; ++i) {
    b.weighted[i] = cfg.lambda[i] * components[i];
    b.total += b.weighted[i];
  }
  return b;
}

ag::Var attention_loss(const std::vector<Tensor>& teacher,
                       const std::vector<std::vector<std::vector<ag::Var>>>& student, const SpadConfig& cfg,
                       const LifParams& p) {
  check_gamma(cfg.gamma_attn, "spad.gamma_attn");
  if (teacher.size() != student.size() || teacher.empty()) {
    throw AlignmentError("attention_loss: " + std::to_string(teacher.size()) + " teacher layers vs " +
                         std::to_string(student.size()) + " student layers");
  }
  std::vector<ag::Var> terms;
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const auto& steps = student[l];
    if (steps.empty()) throw AlignmentError("attention_loss: student layer without time steps");
    const std::size_t heads = steps[0].size();
    if (teacher[l].rank() != 3 || teacher[l].dim(0) != heads) {
      throw AlignmentError("attention_loss: teacher map " + shape_str(teacher[l].shape()) + " for " +
                           std::to_string(heads) + " student heads");
    }
    const Tensor rate = spike_rate_map(teacher[l], steps.size(), p);
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<ag::Var> per_t;
      for (const auto& st : steps) per_t.push_back(st.at(h));
      ag::Var m = ag::mean_of(per_t);
      const Tensor a = teacher[l].slice0(h), r = rate.slice0(h);
      if (a.shape() != m->value.shape()) {
        throw AlignmentError("attention_loss: teacher head " + shape_str(a.shape()) + " vs student " +
                             shape_str(m->value.shape()));
      }
      terms.push_back(ag::weighted_sum({ag::mse_to(m, r), ag::mse_to(m, a)},
                                       {cfg.gamma_attn, 1.0 - cfg.gamma_attn}));
    }
  }
  return ag::scale(ag::weighted_sum(terms, std::vector<double>(terms.size(), 1.0)),
                   1.0 / static_cast<double>(terms.size()));
}

ag::Var feature_loss(const std::vector<Tensor>& teacher, const std::vector<std::vector<ag::Var>>& student,
                     const std::vector<ag::Var>& proj, const SpadConfig& cfg, const LifParams& p) {
  check_gamma(cfg.gamma_feat, "spad.gamma_feat");
  if (teacher.size() != student.size() || teacher.empty()) {
    throw AlignmentError("feature_loss: " + std::to_string(teacher.size()) + " teacher layers vs " +
                         std::to_string(student.size()) + " student layers");
  }
  std::vector<ag::Var> terms;
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    if (student[l].empty()) throw AlignmentError("feature_loss: student layer without time steps");
    const Tensor& h = teacher[l];
    ag::Var m = ag::mean_of(student[l]);
    if (h.rank() != 2 || m->value.dim(0) != h.dim(0)) {
      throw AlignmentError("feature_loss: teacher " + shape_str(h.shape()) + " vs student " +
                           shape_str(m->value.shape()));
    }
    ag::Var mapped = project(m, l < proj.size() ? proj[l] : nullptr, h.dim(1), "feature_loss");
    const Tensor rate = spike_rate_map(h, student[l].size(), p);
    terms.push_back(ag::weighted_sum({ag::mse_to(mapped, rate), ag::mse_to(ag::layer_norm(mapped), h)},
                                     {cfg.gamma_feat, 1.0 - cfg.gamma_feat}));
  }
  return ag::scale(ag::weighted_sum(terms, std::vector<double>(terms.size(), 1.0)),
                   1.0 / static_cast<double>(terms.size()));
}

ag::Var embedding_loss(const Tensor& e_ann, const std::vector<ag::Var>& e_snn_steps, const ag::Var& proj) {
  if (e_snn_steps.empty()) throw ValidationError("embedding_loss: no student steps");
  ag::Var m = ag::mean_of(e_snn_steps);
  if (e_ann.rank() != 2 || m->value.dim(0) != e_ann.dim(0)) {
    throw AlignmentError("embedding_loss: teacher " + shape_str(e_ann.shape()) + " vs student " +
                         shape_str(m->value.shape()));
  }
  return ag::mse_to(project(m, proj, e_ann.dim(1), "embedding_loss"), e_ann);
}

void check_compatible(const ModelConfig& s, const ModelConfig& t) {
  if (s.vocab_size != t.vocab_size) {
    throw ConfigError("teacher.vocab_size " + std::to_string(t.vocab_size) + " != student " +
                      std::to_string(s.vocab_size));
  }
  layer_map(s.n_layers, t.n_layers);
  if (t.n_heads % s.n_heads != 0) {
    throw ConfigError("teacher.n_heads " + std::to_string(t.n_heads) + " not a multiple of student n_heads " +
                      std::to_string(s.n_heads));
  }
}

Parameters init_spad_params(const ModelConfig& s, const ModelConfig& t, std::uint64_t seed) {
  Parameters p;
  if (s.d_model == t.d_model) return p;
  Rng rng(seed ^ 0x5eedULL);
  const double std = 1.0 / std::sqrt(static_cast<double>(s.d_model));
  p["spad.emb_proj"] = seeded_normal(rng, {s.d_model, t.d_model}, std);
  for (std::size_t l = 0; l < s.n_layers; ++l) {
    p["spad.feat_proj." + std::to_string(l)] = seeded_normal(rng, {s.d_model, t.d_model}, std);
  }
  return p;
}

SpadTerms spad_objective(const SnnGraph& student, const AnnOutput& teacher,
                         const std::vector<std::size_t>& targets, const ModelConfig& scfg,
                         const ModelConfig& tcfg, const SpadConfig& cfg, ParamBinder& bind) {
  cfg.validate();
  check_compatible(scfg, tcfg);
  const auto lm = layer_map(scfg.n_layers, tcfg.n_layers);
  const std::size_t steps = student.encoded.size();
  const LifParams& p = scfg.lif;

  std::vector<Tensor> t_attn, t_hidden;
  std::vector<std::vector<std::vector<ag::Var>>> s_attn;
  std::vector<std::vector<ag::Var>> s_hidden;
  std::vector<ag::Var> proj;
  for (std::size_t l = 0; l < scfg.n_layers; ++l) {
    t_attn.push_back(pool_heads(teacher.attn_maps.at(lm[l]), scfg.n_heads));
    t_hidden.push_back(teacher.hidden.at(lm[l]));
    s_attn.push_back(student.layers[l].attn);
    s_hidden.push_back(student.layers[l].hidden);
    const std::string name = "spad.feat_proj." + std::to_string(l);
    proj.push_back(bind.has(name) ? bind(name) : nullptr);
  }

  SpadTerms out;
  const ag::Var emb_proj = bind.has("spad.emb_proj") ? bind("spad.emb_proj") : nullptr;
  out.parts[kEmb] = embedding_loss(teacher.embedding, std::vector<ag::Var>(steps, student.embedding), emb_proj);
  out.parts[kAttn] = attention_loss(t_attn, s_attn, cfg, p);
  out.parts[kFeat] = feature_loss(t_hidden, s_hidden, proj, cfg, p);
  out.parts[kSoft] = ag::soft_kl(teacher.logits, student.logits, cfg.tau);
  out.parts[kHard] = ag::cross_entropy(student.logits, targets);
  out.total = ag::weighted_sum({out.parts.begin(), out.parts.end()}, {cfg.lambda.begin(), cfg.lambda.end()});
  return out;
}

}  // namespace bispik
