#include "bispik/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bispik/config.hpp"
#include "bispik/energy.hpp"
#include "bispik/errors.hpp"

namespace bispik {

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool c, const std::string& what) {
  if (!c) throw Failure(what);
}

void near(double got, double want, double tol, const std::string& what) {
  if (!(std::fabs(got - want) <= tol)) {
    throw Failure(what + ": got " + fmt_double(got) + ", want " + fmt_double(want));
  }
}

template <typename E, typename F>
void throws(F&& f, const std::string& what) {
  try {
    f();
  } catch (const E&) {
    return;
  }
  throw Failure(what + ": expected an error");
}

bool is_binary(const Tensor& t) {
  return std::all_of(t.vec().begin(), t.vec().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

ModelConfig tiny_config(bool relaxed) {
  ModelConfig c;
  c.vocab_size = 7;
  c.d_model = 4;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 6;
  c.max_seq_len = 4;
  c.t_steps = 2;
  c.relaxed = relaxed;
  return c;
}

class Runner {
 public:
  template <typename F>
  void run(const char* module, const char* name, F&& f) {
    CheckResult r{module, name, false, ""};
    try {
      f();
      r.passed = true;
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  }
  std::vector<CheckResult> results;
};

void numerics_checks(Runner& R) {
  R.run("numerics", "matmul_examples", [] {
    const Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    expect(matmul(Tensor::identity(3), m) == m, "identity x M != M");
    expect(matmul(Tensor::identity(2), Tensor::from_rows({{2}, {3}})) == Tensor::from_rows({{2}, {3}}), "I2 x [2,3]");
    expect(matmul(Tensor::ones({1, 4}), Tensor::ones({4, 1})) == Tensor::from_rows({{4}}), "ones row x ones col");
    throws<DimensionError>([] { matmul(Tensor::ones({2, 3}), Tensor::ones({2, 3})); }, "inner mismatch");
  });
  R.run("numerics", "matmul_associative", [] {
    Rng rng(11);
    const Tensor a = seeded_normal(rng, {5, 4}, 1.0), b = seeded_normal(rng, {4, 6}, 1.0),
                 c = seeded_normal(rng, {6, 3}, 1.0);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) near(l[i], r[i], 1e-10 * std::max(1.0, std::fabs(l[i])), "(AB)C vs A(BC)");
  });
  R.run("numerics", "seeded_normal", [] {
    Rng z(3);
    expect(seeded_normal(z, {10}, 0.0) == Tensor({10}), "std 0 must give zeros");
    Rng rng(5);
    const Tensor t = seeded_normal(rng, {100000}, 0.02);
    double m = 0, s = 0;
    for (double v : t.vec()) m += v;
    m /= 1e5;
    for (double v : t.vec()) s += (v - m) * (v - m);
    near(std::sqrt(s / (1e5 - 1)), 0.02, 0.001, "sample std");
    Rng a(9), b(9);
    expect(seeded_normal(a, {64}, 1.0) == seeded_normal(b, {64}, 1.0), "same seed, same stream");
  });
  R.run("numerics", "finite_diff_examples", [] {
    const Tensor g = finite_diff_grad([](const Tensor& x) { return x.sum(); }, Tensor::from_rows({{1, -2, 3}}), 1e-5);
    for (double v : g.vec()) near(v, 1.0, 1e-8, "d sum / dx");
    near(finite_diff_grad([](const Tensor& x) { return x[0] * x[0]; }, Tensor::scalar(3.0), 1e-5)[0], 6.0, 1e-6, "d x^2 at 3");
    near(finite_diff_grad([](const Tensor& x) { return surrogate_forward(x[0], 2.0); }, Tensor::scalar(0.0), 1e-5)[0],
         1.0, 1e-4, "surrogate slope at 0");
  });
}

void neuron_checks(Runner& R) {
  R.run("neurons", "lif_examples", [] {
    LifParams p;
    StepResult r = lif_step(NeuronState::zeros({1}), Tensor({1}, 2.0), p);
    expect(r.state.u[0] == 2.0 && r.spike[0] == 1.0, "beta=.5, I=2 -> U=2, spike");
    LifParams one{1.0, 1.0, 2.0};
    NeuronState st = NeuronState::zeros({1});
    const double want[4] = {0, 1, 0, 1};
    for (int t = 0; t < 4; ++t) {
      r = lif_step(st, Tensor({1}, 0.5), one);
      expect(r.spike[0] == want[t], "beta=1, I=.5 pattern 0,1,0,1");
      st = r.state;
    }
    st = {Tensor({1}, 0.9), Tensor({1})};
    for (int t = 0; t < 200; ++t) {
      r = lif_step(st, Tensor({1}), p);
      expect(r.spike[0] == 0.0, "silent decay must not spike");
      st = r.state;
    }
    expect(std::fabs(st.u[0]) < 1e-12, "membrane decays to 0");
  });
  R.run("neurons", "ternary_table", [] {
    TernaryParams tp;
    for (int k = -10; k <= 10; ++k) {
      const double u = 0.25 * k;
      const StepResult r = ternary_step(NeuronState::zeros({1}), Tensor({1}, u), tp);
      const double s = u > 1.0 ? 1.0 : (u < -1.0 ? -1.0 : 0.0);
      expect(r.spike[0] == s, "ternary spike at U=" + fmt_double(u));
      near(r.state.u[0], u * (1.0 - s), 0.0, "ternary reset at U=" + fmt_double(u));
    }
  });
  R.run("neurons", "surrogate_values", [] {
    near(surrogate_forward(0.0, 2.0), 0.5, 0.0, "S(0)");
    near(surrogate_forward(1.0, 2.0), std::atan(std::numbers::pi) / std::numbers::pi + 0.5, 1e-15, "S(1)");
    near(surrogate_grad(0.0, 2.0), 1.0, 0.0, "S'(0)");
    near(surrogate_grad(1.0, 2.0), 1.0 / (1.0 + std::numbers::pi * std::numbers::pi), 1e-15, "S'(1)");
  });
  R.run("neurons", "surrogate_vs_central_difference", [] {
    for (int i = 0; i < 100; ++i) {
      const double u = -3.0 + 6.0 * i / 99.0, a = 2.0, h = 1e-5;
      const double fd = (surrogate_forward(u + h, a) - surrogate_forward(u - h, a)) / (2 * h);
      const double an = surrogate_grad(u, a);
      expect(std::fabs(fd - an) / an < 1e-6, "relative error at u=" + fmt_double(u));
      expect(an <= a / 2.0, "sup bound");
    }
  });
  R.run("neurons", "empirical_rate", [] {
    LifParams p;
    near(empirical_rate(0.0, 64, p), 0.0, 0.0, "a=0");
    near(empirical_rate(1.0, 4, p), 0.5, 0.0, "a=1, T=4");
    double prev = -1.0;
    for (double a : {-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0}) {
      const double r = empirical_rate(a, 256, p);
      expect(r >= prev && r >= 0.0 && r <= 1.0, "monotone and bounded at a=" + fmt_double(a));
      prev = r;
    }
  });
  R.run("neurons", "eligibility_trace", [] {
    const auto e = eligibility_trace({Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1)}, 0.5);
    near(e[0][0], 1.0, 0, "e1");
    near(e[1][0], 1.5, 0, "e2");
    near(e[2][0], 1.75, 0, "e3");
    Rng rng(2);
    std::vector<Tensor> xs;
    for (int t = 0; t < 200; ++t) xs.push_back(seeded_uniform(rng, {3}, -1.0, 1.0));
    for (const auto& t : eligibility_trace(xs, 0.5)) expect(t.max_abs() <= 2.0 + 1e-12, "|e| <= M/(1-beta)");
  });
  R.run("neurons", "eligibility_matches_bptt", [] {
    LifParams p;
    const NeuronSpec spec = NeuronSpec::binary(p);
    Rng rng(4);
    const std::size_t steps = 6;
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < steps; ++t) xs.push_back(seeded_uniform(rng, {1, 3}, 0.0, 1.5));
    const Tensor w0 = seeded_uniform(rng, {3, 1}, 0.0, 1.0);
    ag::Var w = ag::leaf(w0);
    NeuronTrack tr;
    std::vector<ag::Var> us;
    for (const auto& x : xs) {
      fire(tr, ag::matmul(ag::constant(x), w), spec);
      us.push_back(tr.u);
    }
    ag::backward(ag::sum_all(ag::concat_cols(us)));
    std::vector<Tensor> membrane;
    for (const auto& u : us) membrane.push_back(u->value);
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<Tensor> in;
      for (const auto& x : xs) in.push_back(Tensor::scalar(x[j]));
      double g = 0.0;
      for (const auto& e : eligibility_trace_with_reset(in, membrane, p)) g += e[0];
      near(w->grad[j], g, 1e-10, "trace vs BPTT");
    }
  });
}

void attention_checks(Runner& R) {
  R.run("attention", "causal_mask", [] {
    expect(causal_mask(3).m == Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {1, 1, 1}}), "L=3");
    expect(causal_mask(3, Tensor::from_rows({{1, 1, 0}}).reshaped({3})).m ==
               Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {1, 1, 0}}),
           "padding zeroes column 3");
    expect(causal_mask(1).m == Tensor::from_rows({{1}}), "L=1");
  });
  R.run("attention", "sfsa_structure", [] {
    Rng rng(8);
    const std::size_t d = 8, seq = 6, heads = 2;
    AttnWeights w = AttnWeights::zeros(d);
    for (Tensor* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_out}) *t = seeded_normal(rng, {d, d}, 0.8);
    SfsaOptions opt;
    opt.n_heads = heads;
    opt.neuron = NeuronSpec::binary(LifParams{});
    Tensor x({seq, d});
    for (auto& v : x.vec()) v = rng.below(2) ? 1.0 : 0.0;
    const SfsaResult r = sfsa_forward(x, w, causal_mask(seq), {}, opt);
    for (double v : r.attn_int.vec()) expect(v == std::floor(v) && v >= 0 && v <= double(d / heads), "scores in [0, d_head]");
    expect(is_binary(r.out_spikes) && is_binary(r.attn_spikes), "spike tensors binary");
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < seq; ++i)
        for (std::size_t j = i + 1; j < seq; ++j) expect(r.attn_spikes[(h * seq + i) * seq + j] == 0.0, "above diagonal");
    expect(sfsa_forward(Tensor({seq, d}), AttnWeights::zeros(d), causal_mask(seq), {}, opt).out_spikes == Tensor({seq, d}),
           "zero input, zero output");
  });
  R.run("attention", "csa_rows", [] {
    Rng rng(1);
    AttnWeights w = AttnWeights::zeros(4);
    for (Tensor* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_out}) *t = seeded_normal(rng, {4, 4}, 0.5);
    const CsaResult r = csa_forward(seeded_normal(rng, {5, 4}, 1.0), w, causal_mask(5), 2);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 5; ++j) s += r.attn_map[(h * 5 + i) * 5 + j];
        near(s, 1.0, 1e-12, "row sum");
      }
  });
}

void model_checks(Runner& R) {
  R.run("model", "residual_identity", [] {
    ModelConfig c = tiny_config(false);
    Parameters p = init_snn_params(c, 3);
    for (auto& [n, t] : p)
      if (n.rfind("blk", 0) == 0) t = Tensor(t.shape());
    ParamBinder bind(p, false);
    const SnnGraph g = snn_graph({1, 2, 3}, c, bind);
    for (std::size_t t = 0; t < c.t_steps; ++t) expect(g.layers[0].hidden[t]->value == g.encoded[t]->value, "out == encoded");
  });
  R.run("model", "traces_and_shapes", [] {
    ModelConfig c = tiny_config(false);
    c.n_layers = 2;
    const auto so = snn_forward({1, 2, 3}, c, init_snn_params(c, 1));
    const auto ao = ann_forward({1, 2, 3}, c, init_ann_params(c, 1));
    expect(so.traces.layers.size() == 2 && so.traces.embedding_out.size() == c.t_steps, "trace completeness");
    for (std::size_t l = 0; l < 2; ++l) {
      expect(so.traces.layers[l].attn_spikes.shape() == Shape{c.t_steps, 2, 3, 3}, "attn trace shape");
      expect(so.traces.layers[l].hidden.shape() == Shape{c.t_steps, 3, 4}, "hidden trace shape");
      expect(ao.attn_maps[l].shape() == so.traces.layers[l].attn_spikes.slice0(0).shape(), "teacher/student shapes");
    }
  });
  R.run("model", "param_counts", [] {
    ModelConfig c = tiny_config(false);
    expect(count_params(init_snn_params(c, 1)) == snn_param_count(c), "student count");
    expect(count_params(init_ann_params(c, 1)) == ann_param_count(c), "teacher count");
  });
  R.run("model", "deterministic_and_causal", [] {
    ModelConfig c = tiny_config(false);
    const Parameters p = init_snn_params(c, 5);
    const auto a = snn_forward({1, 2, 3, 4}, c, p), b = snn_forward({1, 2, 3, 4}, c, p);
    expect(a.logits == b.logits, "determinism");
    const auto d = snn_forward({1, 2, 3, 6}, c, p);
    for (std::size_t i = 0; i < 3 * c.vocab_size; ++i) expect(a.logits[i] == d.logits[i], "prefix unchanged");
    for (const auto& l : a.traces.layers) expect(l.sfsa_in.rate() >= 0 && l.sffn_in.rate() <= 1, "rates in [0,1]");
  });
  R.run("model", "decode_and_generate", [] {
    const Tensor v = Tensor::from_rows({{1, -2}}), w = Tensor::identity(2), b({2});
    expect(decode_logits({v}, w, b) == v, "T=1 identity");
    expect(decode_logits({v, scale(v, -1.0)}, w, b) == Tensor({1, 2}), "v and -v cancel");
    ModelConfig c = tiny_config(false);
    const Parameters p = init_snn_params(c, 2);
    Rng r1(0), r2(0);
    expect(generate({1, 2}, 0, 0.0, r1, c, p).tokens == std::vector<std::size_t>{1, 2}, "n_new=0");
    expect(generate({1, 2}, 5, 0.0, r1, c, p).tokens == generate({1, 2}, 5, 0.0, r2, c, p).tokens, "greedy determinism");
  });
  R.run("model", "checkpoint_round_trip", [] {
    ModelConfig c = tiny_config(false);
    const Checkpoint ck = make_checkpoint(ModelKind::snn, c, init_snn_params(c, 9));
    const std::string bytes = serialize_checkpoint(ck);
    expect(parse_checkpoint(bytes) == ck, "parse(serialize(x)) == x");
    expect(serialize_checkpoint(parse_checkpoint(bytes)) == bytes, "bit-exact bytes");
    throws<FormatError>([&] { parse_checkpoint(bytes.substr(0, bytes.size() - 3)); }, "truncated file");
  });
}

void distill_checks(Runner& R) {
  R.run("distill", "loss_examples", [] {
    SpadConfig c;
    c.gamma_attn = 0.0;
    const Tensor a = Tensor::from_rows({{1, 0}, {0.5, 0.5}});
    near(loss_attention(a, Tensor({1, 2, 2}), c, LifParams{}), 0.375, 1e-15, "attention MSE");
    near(loss_soft(Tensor::from_rows({{std::log(3.0), 0}}), Tensor::from_rows({{0, 0}}), 1.0),
         0.75 * std::log(1.5) + 0.25 * std::log(0.5), 1e-12, "soft KL");
    near(loss_hard(Tensor::from_rows({{1, 0}}), {0}), std::log(1 + std::exp(-1.0)), 1e-12, "hard CE");
    near(loss_hard(Tensor({3, 5}), {0, 1, 4}), std::log(5.0), 1e-12, "uniform -> ln V");
    const Tensor v = Tensor::from_rows({{1, 2}});
    near(loss_embedding(scale(v, 2.0), {v, scale(v, 3.0)}), 0.0, 1e-15, "embedding mean");
    near(loss_embedding(Tensor({1, 2}), {Tensor({1, 2}, 0.5)}), 0.25, 1e-15, "c^2");
  });
  R.run("distill", "self_distillation_fixed_points", [] {
    SpadConfig c;
    LifParams p;
    const Tensor amap = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 0, 1}});
    near(loss_attention(amap.reshaped({1, 3, 3}), amap.reshaped({1, 1, 3, 3}), c, p), 0.0, 0.0, "attention");
    const Tensor s = Tensor::from_rows({{1, 0, 0}, {0, 0, 1}});
    const Tensor h = ag::layer_norm(ag::constant(s))->value;
    SpadConfig mse_only = c;
    mse_only.gamma_feat = 0.0;
    near(loss_feature(h, s.reshaped({1, 2, 3}), mse_only, p), 0.0, 1e-24, "feature MSE branch");
    near(loss_embedding(s, {s, s}), 0.0, 0.0, "embedding");
    near(loss_soft(h, h, 2.0), 0.0, 1e-15, "soft");
  });
  R.run("distill", "layer_map", [] {
    expect(layer_map(4, 4) == std::vector<std::size_t>{0, 1, 2, 3}, "4->4");
    expect(layer_map(2, 4) == std::vector<std::size_t>{1, 3}, "2->4");
    expect(layer_map(3, 6) == std::vector<std::size_t>{1, 3, 5}, "3->6");
    throws<ConfigError>([] { layer_map(3, 2); }, "student deeper than teacher");
  });
  R.run("distill", "loss_total", [] {
    SpadConfig c;
    near(loss_total({1, 1, 1, 1, 1}, c).total, 1.0, 1e-15, "all ones");
    near(loss_total({1, 0, 0, 0, 0}, c).total, 0.2, 1e-15, "unit emb");
    near(loss_total({0, 0, 0, 2, 2}, c).total, 1.2, 1e-15, "soft + hard");
    c.lambda[0] = 0.3;
    throws<ConfigError>([&] { loss_total({1, 1, 1, 1, 1}, c); }, "lambda must sum to 1");
  });
}

void training_checks(Runner& R) {
  R.run("training", "clip_gradients", [] {
    Parameters g{{"a", Tensor::from_rows({{0.3, 0.4}})}};
    near(clip_gradients(g, 0.7), 0.5, 1e-15, "norm");
    near(g["a"][1], 0.4, 0.0, "below threshold unchanged");
    g["a"] = Tensor::from_rows({{0.0, 7.0}});
    clip_gradients(g, 0.7);
    near(global_norm(g), 0.7, 1e-12, "clipped norm");
  });
  R.run("training", "lr_schedule", [] {
    TrainConfig t;
    t.total_steps = 100;
    near(lr_schedule(0, t), 0.0, 0.0, "step 0");
    near(lr_schedule(20, t), 5e-4, 1e-18, "end of warmup");
    near(lr_schedule(100, t), 0.0, 1e-12, "end");
  });
  R.run("training", "adam", [] {
    TrainConfig t;
    Parameters p{{"w", Tensor({3}, 1.0)}};
    AdamState st;
    adam_step(p, {{"w", Tensor({3})}}, st, 0.1, t);
    expect(p["w"] == Tensor({3}, 1.0), "zero gradient leaves params");
    Parameters q{{"w", Tensor({1})}};
    AdamState s2;
    for (int i = 0; i < 5; ++i) {
      const double before = q["w"][0];
      adam_step(q, {{"w", Tensor({1}, -3.0)}}, s2, 0.01, t);
      near(q["w"][0] - before, 0.01, 1e-8, "constant gradient step ~ lr * sign");
    }
  });
  R.run("training", "bptt_gradient_check", [] {
    ModelConfig sc = tiny_config(true);
    ModelConfig tc = sc;
    tc.relaxed = false;
    const Parameters teacher = init_ann_params(tc, 4);
    Parameters p = init_snn_params(sc, 6);
    const std::vector<std::size_t> in{1, 2, 3}, tgt{2, 3, 4};
    const AnnOutput t = ann_forward(in, tc, teacher);
    SpadConfig cfg;
    auto loss_of = [&](const Parameters& q, Parameters* grads) {
      ParamBinder bind(q, grads != nullptr);
      const SnnGraph g = snn_graph(in, sc, bind);
      const SpadTerms terms = spad_objective(g, t, tgt, sc, tc, cfg, bind);
      if (grads) *grads = bptt_backward(terms.total, Tensor::scalar(1.0), bind);
      return terms.total->value[0];
    };
    Parameters grads;
    loss_of(p, &grads);
    Rng rng(12);
    for (const char* name : {"tok_emb", "blk0.attn.wq", "blk0.ffn.w1", "head.w"}) {
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = rng.below(p[name].size());
        const double h = 1e-6, x = p[name][i];
        p[name][i] = x + h;
        const double up = loss_of(p, nullptr);
        p[name][i] = x - h;
        const double dn = loss_of(p, nullptr);
        p[name][i] = x;
        const double fd = (up - dn) / (2 * h), an = grads[name][i];
        expect(std::fabs(fd - an) <= 1e-3 * std::max(std::fabs(fd), 1e-4), std::string(name) + ": analytic " +
                                                                                 fmt_double(an) + " vs " + fmt_double(fd));
      }
    }
  });
}

void energy_checks(Runner& R) {
  R.run("energy", "toy_flops", [] {
    ModelConfig c;
    c.d_model = 2;
    c.n_heads = 1;
    c.d_ff = 4;
    c.vocab_size = 4;
    c.n_layers = 1;
    const FlopCounts f = count_flops(c, 1);
    expect(f.projections == 16 && f.scores == 2 && f.values == 2 && f.ffn == 16 && f.head == 8 && f.embed == 0,
           "toy counts");
  });
  R.run("energy", "constants", [] {
    EnergyConstants k;
    near(energy_mj(1e9, k.e_ac), 0.9, 1e-12, "1e9 AC");
    near(energy_mj(1e9, k.e_mac), 4.6, 1e-12, "1e9 MAC");
    expect(sops(0.25, 4, 1000000) == 1000000 && sops(0.5, 2, 3) == 3 && sops(0.0, 9, 9) == 0, "sops");
    throws<ValidationError>([] { sops(1.5, 1, 1); }, "rate out of range");
  });
  R.run("energy", "report_consistency", [] {
    ModelConfig c = tiny_config(false);
    const TraceBundle tr = snn_forward({1, 2, 3}, c, init_snn_params(c, 1)).traces;
    const EnergyReport r = energy_report(c, tr);
    for (const auto& l : r.layers)
      for (const BlockEnergy* b : {&l.sfsa, &l.sffn})
        expect(b->sops == sops(b->firing_rate, r.t_steps, b->flops), "sops field consistent");
    expect(parse_report_kv(format_report_kv(r)) == r, "report round trip");
    expect(tr.layers[0].sfsa_macs == count_flops(c, 3).sfsa() && tr.layers[0].sffn_macs == count_flops(c, 3).ffn,
           "instrumented student MACs");
  });
  R.run("energy", "teacher_mac_crosscheck", [] {
    ModelConfig c = tiny_config(false);
    c.n_layers = 2;
    const Parameters p = init_ann_params(c, 1);
    MacCounter counter;
    ann_forward({1, 2, 3, 4}, c, p);
    expect(counter.count() == count_flops(c, 4).total(), "MAC counter == count_flops");
  });
}

void cli_checks(Runner& R) {
  R.run("cli", "config_round_trip", [] {
    RunConfig rc = resolve_config("train", {{"model.d_model", "8"}, {"generate.prompt", " a\tb\n"}});
    const KeyValues kv = to_kv(rc);
    expect(parse_ini(format_ini(kv)) == kv, "snapshot round trip");
    throws<ConfigError>([] { resolve_config("train", {{"model.bogus", "1"}}); }, "unknown key");
    throws<ConfigError>([] { parse_ini("[model]\nd_model 3\n"); }, "malformed line");
  });
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  Runner R;
  numerics_checks(R);
  neuron_checks(R);
  attention_checks(R);
  model_checks(R);
  distill_checks(R);
  training_checks(R);
  energy_checks(R);
  cli_checks(R);
  return R.results;
}

}  // namespace bispik
