#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bispik/errors.hpp"
#include "bispik/training.hpp"
#include "support/corpus.hpp"

using namespace bispik;

TEST(Clip, Examples) {
  Parameters g{{"a", Tensor::from_rows({{0.3, 0.4}})}};
  const Parameters before = g;
  EXPECT_DOUBLE_EQ(clip_gradients(g, 0.7), 0.5);
  EXPECT_EQ(g, before);

  g["a"] = Tensor::from_rows({{0.0, 7.0}});
  EXPECT_DOUBLE_EQ(clip_gradients(g, 0.7), 7.0);
  EXPECT_NEAR(g["a"][1], 0.7, 1e-15);
  EXPECT_NEAR(global_norm(g), 0.7, 1e-12);

  Parameters z{{"a", Tensor({3})}};
  clip_gradients(z, 0.7);
  EXPECT_EQ(z["a"], Tensor({3}));
}

TEST(Clip, NeverExceedsThreshold) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double thr = 0.01 + rng.uniform() * 2.0;
    Parameters g{{"a", seeded_normal(rng, {5, 3}, 3.0)}, {"b", seeded_normal(rng, {7}, 0.1)}};
    clip_gradients(g, thr);
    ASSERT_LE(global_norm(g), thr + 1e-9);
  }
}

TEST(LrSchedule, Examples) {
  TrainConfig c;
  c.total_steps = 1000;
  EXPECT_EQ(lr_schedule(0, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(200, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(100, c), 2.5e-4);
  EXPECT_NEAR(lr_schedule(1000, c), 0.0, 1e-12);
  EXPECT_NEAR(lr_schedule(600, c), 5e-4 * 0.5 * (1 + std::cos(std::numbers::pi * 0.5)), 1e-15);
}

TEST(LrSchedule, WarmupRisesThenDecays) {
  TrainConfig c;
  c.total_steps = 50;
  for (std::size_t s = 1; s <= 10; ++s) EXPECT_GT(lr_schedule(s, c), lr_schedule(s - 1, c));
  for (std::size_t s = 11; s <= 50; ++s) EXPECT_LT(lr_schedule(s, c), lr_schedule(s - 1, c));
}

TEST(Adam, ZeroGradientDecaysMomentsOnly) {
  TrainConfig c;
  Parameters p{{"w", Tensor({2}, 1.0)}};
  AdamState st;
  adam_step(p, {{"w", Tensor({2}, 1.0)}}, st, 0.1, c);
  const Tensor after_first = p["w"];
  const Tensor m = st.m["w"], v = st.v["w"];
  adam_step(p, {{"w", Tensor({2})}}, st, 0.1, c);
  EXPECT_DOUBLE_EQ(st.m["w"][0], 0.9 * m[0]);
  EXPECT_DOUBLE_EQ(st.v["w"][0], 0.999 * v[0]);
  Parameters q{{"w", Tensor({2}, 1.0)}};
  AdamState fresh;
  adam_step(q, {{"w", Tensor({2})}}, fresh, 0.1, c);
  EXPECT_EQ(q["w"], Tensor({2}, 1.0));
  (void)after_first;
}

TEST(Adam, ConstantGradientStepsAtLr) {
  TrainConfig c;
  Parameters p{{"w", Tensor({2}, std::vector<double>{0, 0})}};
  AdamState st;
  for (int i = 0; i < 200; ++i) {
    const Tensor before = p["w"];
    adam_step(p, {{"w", Tensor({2}, std::vector<double>{2.0, -0.01})}}, st, 1e-3, c);
    EXPECT_NEAR(p["w"][0] - before[0], -1e-3, 1e-8);
    EXPECT_NEAR(p["w"][1] - before[1], 1e-3, 1e-6);
  }
  EXPECT_EQ(st.step, 200u);
}

TEST(Bptt, ZeroUpstreamGivesZeroGradients) {
  ModelConfig c;
  c.vocab_size = 9;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.max_seq_len = 4;
  c.relaxed = true;
  const Parameters p = init_snn_params(c, 1);
  ParamBinder bind(p, true);
  const SnnGraph g = snn_graph({1, 2, 3}, c, bind);
  const Parameters grads = bptt_backward(g.logits, Tensor(g.logits->value.shape()), bind);
  for (const auto& [name, t] : grads) EXPECT_EQ(t.max_abs(), 0.0) << name;
  EXPECT_EQ(grads.size(), p.size());
}

TEST(Bptt, HardModelSurrogateChainIsFinite) {
  ModelConfig c;
  c.vocab_size = 9;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.max_seq_len = 4;
  const Parameters p = init_snn_params(c, 1);
  ParamBinder bind(p, true);
  const SnnGraph g = snn_graph({1, 2, 3, 4}, c, bind);
  const Parameters grads = bptt_backward(ag::cross_entropy(g.logits, {2, 3, 4, 5}), Tensor::scalar(1.0), bind);
  double norm = global_norm(grads);
  EXPECT_TRUE(std::isfinite(norm));
  EXPECT_GT(grads.at("blk0.attn.wq").max_abs() + grads.at("blk1.ffn.w1").max_abs(), 0.0);
}

TEST(Corpus, BytesRoundTrip) {
  const std::string s = "h\xc3\xa9llo\n\t\x01";
  const auto t = encode_bytes(s);
  EXPECT_EQ(t.size(), s.size());
  EXPECT_EQ(decode_bytes(t), s);
  auto with_bos = t;
  with_bos.insert(with_bos.begin(), kBos);
  EXPECT_EQ(decode_bytes(with_bos), s);
  EXPECT_THROW(decode_bytes({300}), ValidationError);
}

TEST(Corpus, SplitAndWindows) {
  std::vector<std::size_t> toks(100);
  for (std::size_t i = 0; i < 100; ++i) toks[i] = i;
  const CorpusSplit sp = split_corpus(toks, 0.1);
  EXPECT_EQ(sp.train.size(), 90u);
  EXPECT_EQ(sp.val.front(), 90u);
  const auto w = make_windows(sp.train, 8);
  EXPECT_EQ(w.size(), 11u);
  EXPECT_EQ(w[1].inputs.front(), 8u);
  EXPECT_EQ(w[1].targets.front(), 9u);
  EXPECT_EQ(w[1].targets.back(), 16u);
  const auto short_w = make_windows({4, 5, 6}, 8);
  ASSERT_EQ(short_w.size(), 1u);
  EXPECT_EQ(short_w[0].inputs, (std::vector<std::size_t>{4, 5}));
  EXPECT_THROW(split_corpus(toks, 1.0), ConfigError);
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
  TrainConfig c;
  c.lr_peak = 3e-3;
  c.seed = 1234567890123ULL;
  EXPECT_EQ(to_kv(train_config_from_kv(to_kv(c))), to_kv(c));
  c.warmup_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.grad_clip = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

namespace {

TrainSetup tiny_setup(TrainMode mode, std::size_t steps) {
  TrainSetup s;
  s.mode = mode;
  s.model.d_model = 16;
  s.model.n_heads = 2;
  s.model.d_ff = 32;
  s.model.max_seq_len = 16;
  s.train.total_steps = steps;
  s.train.seq_len = 16;
  s.train.batch_size = 2;
  return s;
}

}  // namespace

TEST(TrainLoop, ZeroStepsReturnsInit) {
  const TrainSetup s = tiny_setup(TrainMode::hard, 0);
  const Parameters init = init_snn_params(s.model, 1);
  std::ostringstream m;
  const TrainResult r = train_loop(s, encode_bytes(fixtures::word_corpus(2000, 1)), init, &m);
  EXPECT_EQ(r.params, init);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(m.str(), "# bispik-metrics v1\nstep\tlr\ttotal\temb\tattn\tfeat\tsoft\thard\tfiring_rate\tgrad_norm\n");
}

TEST(TrainLoop, BitIdenticalReruns) {
  const auto toks = encode_bytes(fixtures::word_corpus(3000, 2));
  for (TrainMode mode : {TrainMode::hard, TrainMode::teacher}) {
    const TrainSetup s = tiny_setup(mode, 5);
    const Parameters init = mode == TrainMode::teacher ? init_ann_params(s.model, 3) : init_snn_params(s.model, 3);
    std::ostringstream m1, m2;
    const TrainResult a = train_loop(s, toks, init, &m1), b = train_loop(s, toks, init, &m2);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(m1.str(), m2.str());
    const ModelKind kind = mode == TrainMode::teacher ? ModelKind::ann : ModelKind::snn;
    EXPECT_EQ(serialize_checkpoint(make_checkpoint(kind, s.model, a.params, &a.adam)),
              serialize_checkpoint(make_checkpoint(kind, s.model, b.params, &b.adam)));
  }
}

TEST(TrainLoop, SpadRequiresCompatibleTeacher) {
  TrainSetup s = tiny_setup(TrainMode::spad, 1);
  const auto toks = encode_bytes(fixtures::word_corpus(1000, 2));
  EXPECT_THROW(train_loop(s, toks, init_snn_params(s.model, 1)), ConfigError);
  TeacherModel t{s.model, {}};
  t.cfg.n_layers = 1;
  t.params = init_ann_params(t.cfg, 1);
  s.teacher = &t;
  EXPECT_THROW(train_loop(s, toks, init_snn_params(s.model, 1)), ConfigError);
}

TEST(TrainLoop, MetricsRowsCarryComponents) {
  TrainSetup s = tiny_setup(TrainMode::spad, 2);
  TeacherModel t{s.model, init_ann_params(s.model, 4)};
  s.teacher = &t;
  std::ostringstream m;
  const TrainResult r = train_loop(s, encode_bytes(fixtures::word_corpus(2000, 3)), init_snn_params(s.model, 1), &m);
  ASSERT_EQ(r.metrics.size(), 2u);
  for (const auto& row : r.metrics) {
    double sum = 0;
    for (double w : row.weighted) sum += w;
    EXPECT_NEAR(row.total, sum, 1e-12);
    EXPECT_GE(row.firing_rate, 0.0);
    EXPECT_LE(row.firing_rate, 1.0);
  }
  std::istringstream in(m.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    if (lines > 2) EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 9);
  }
  EXPECT_EQ(lines, 4);
}

TEST(TrainLoop, RepeatedPhraseDropsBelowUniform) {
  TrainSetup s;
  s.mode = TrainMode::hard;
  s.model.d_model = 32;
  s.model.n_heads = 2;
  s.model.d_ff = 64;
  s.model.max_seq_len = 32;
  s.train.total_steps = 300;
  s.train.seq_len = 32;
  s.train.lr_peak = 3e-3;
  const auto toks = encode_bytes(fixtures::periodic_corpus("hello world ", 6000));
  const CorpusSplit sp = split_corpus(toks, 0.1);
  const TrainResult r = train_loop(s, sp.train, init_snn_params(s.model, 1));
  EXPECT_LT(r.metrics.back().weighted[kHard], std::log(256.0));
  EXPECT_LT(evaluate(sp.val, s.model, r.params, ModelKind::snn, 32, 0).ce, std::log(256.0));
}
