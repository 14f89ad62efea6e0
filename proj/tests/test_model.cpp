#include <gtest/gtest.h>

#include "bispik/checkpoint.hpp"
#include "bispik/errors.hpp"
#include "bispik/model.hpp"
#include "bispik/training.hpp"

using namespace bispik;

namespace {

ModelConfig small(std::size_t layers = 2) {
  ModelConfig c;
  c.vocab_size = 11;
  c.d_model = 8;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 8;
  c.t_steps = 3;
  return c;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = small();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.t_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, KeyValueRoundTrip) {
  ModelConfig c = small();
  c.lif.beta = 0.25;
  c.attn_thr = 2.5;
  c.neuron_mode = NeuronMode::ternary;
  const ModelConfig d = model_config_from_kv(to_kv(c));
  EXPECT_EQ(to_kv(d), to_kv(c));
}

TEST(Sffn, ZeroInZeroOut) {
  FfnWeights w{Tensor({4, 6}), Tensor({6}), Tensor({6, 4}), Tensor({4})};
  const SffnResult r = sffn_forward(Tensor({3, 4}), w, {NeuronState::zeros({3, 6}), NeuronState::zeros({3, 4})},
                                    LifParams{});
  EXPECT_EQ(r.out, Tensor({3, 4}));
}

TEST(Sffn, SingleNeuronHandStep) {
  FfnWeights w{Tensor({1, 1}, 2.0), Tensor({1}), Tensor({1, 1}, 2.0), Tensor({1})};
  const SffnResult r = sffn_forward(Tensor({1, 1}, 1.0), w, {NeuronState::zeros({1, 1}), NeuronState::zeros({1, 1})},
                                    LifParams{});
  EXPECT_EQ(r.state.fc1.u[0], 2.0);
  EXPECT_EQ(r.out[0], 1.0);
}

TEST(Model, ZeroBlocksGiveIdentityResidual) {
  ModelConfig c = small();
  Parameters p = init_snn_params(c, 4);
  for (auto& [name, t] : p)
    if (name.rfind("blk", 0) == 0) t = Tensor(t.shape());
  ParamBinder bind(p, false);
  const SnnGraph g = snn_graph({1, 2, 3, 4, 5}, c, bind);
  for (const auto& layer : g.layers)
    for (std::size_t t = 0; t < c.t_steps; ++t) EXPECT_EQ(layer.hidden[t]->value, g.encoded[t]->value);
}

TEST(Model, TraceCompletenessAndShapes) {
  ModelConfig c = small(3);
  const std::vector<std::size_t> toks{0, 1, 2, 3, 4, 5};
  const SnnOutput s = snn_forward(toks, c, init_snn_params(c, 1));
  const AnnOutput a = ann_forward(toks, c, init_ann_params(c, 1));
  EXPECT_EQ(s.logits.shape(), (Shape{6, 11}));
  EXPECT_EQ(a.logits.shape(), (Shape{6, 11}));
  ASSERT_EQ(s.traces.layers.size(), 3u);
  ASSERT_EQ(a.attn_maps.size(), 3u);
  EXPECT_EQ(s.traces.embedding_out.size(), c.t_steps);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(s.traces.layers[l].attn_spikes.shape(), (Shape{3, 2, 6, 6}));
    EXPECT_EQ(s.traces.layers[l].hidden.shape(), (Shape{3, 6, 8}));
    EXPECT_EQ(a.attn_maps[l].shape(), (Shape{2, 6, 6}));
    EXPECT_EQ(a.hidden[l].shape(), (Shape{6, 8}));
    for (double v : s.traces.layers[l].hidden.vec()) ASSERT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_GE(s.traces.layers[l].sfsa_in.rate(), 0.0);
    EXPECT_LE(s.traces.layers[l].sffn_in.rate(), 1.0);
  }
}

TEST(Model, ParameterCountsMatchClosedForm) {
  for (std::size_t layers : {1, 2, 4}) {
    ModelConfig c = small(layers);
    EXPECT_EQ(count_params(init_snn_params(c, 1)), snn_param_count(c));
    EXPECT_EQ(count_params(init_ann_params(c, 1)), ann_param_count(c));
  }
  ModelConfig c = small(1);
  const std::size_t d = 8, ff = 16, v = 11, l = 8;
  EXPECT_EQ(snn_param_count(c), v * d + l * d + 4 * d * d + 4 * d + 2 * d * ff + ff + d + d * v + v);
  EXPECT_EQ(ann_param_count(c), snn_param_count(c) + 4 * d + 2 * d);
}

TEST(Model, InitIsSeedDeterministic) {
  ModelConfig c = small();
  EXPECT_EQ(init_snn_params(c, 9), init_snn_params(c, 9));
  EXPECT_NE(init_snn_params(c, 9), init_snn_params(c, 10));
}

TEST(Model, ForwardIsDeterministic) {
  ModelConfig c = small();
  const Parameters p = init_snn_params(c, 2);
  const SnnOutput a = snn_forward({3, 1, 4, 1, 5}, c, p), b = snn_forward({3, 1, 4, 1, 5}, c, p);
  EXPECT_EQ(a.logits, b.logits);
  for (std::size_t l = 0; l < c.n_layers; ++l) EXPECT_EQ(a.traces.layers[l].hidden, b.traces.layers[l].hidden);
}

TEST(Model, StudentAndTeacherAreCausal) {
  ModelConfig c = small();
  const Parameters ps = init_snn_params(c, 3), pa = init_ann_params(c, 3);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> x(7);
    for (auto& t : x) t = rng.below(11);
    std::vector<std::size_t> y = x;
    const std::size_t j = 1 + rng.below(6);
    y[j] = (y[j] + 1 + rng.below(10)) % 11;
    const Tensor sx = snn_forward(x, c, ps).logits, sy = snn_forward(y, c, ps).logits;
    const Tensor ax = ann_forward(x, c, pa).logits, ay = ann_forward(y, c, pa).logits;
    for (std::size_t i = 0; i < j * 11; ++i) {
      ASSERT_EQ(sx[i], sy[i]);
      ASSERT_EQ(ax[i], ay[i]);
    }
  }
}

TEST(Model, OutOfRangeTokenRejected) {
  ModelConfig c = small();
  EXPECT_THROW(snn_forward({1, 11}, c, init_snn_params(c, 1)), ValidationError);
  EXPECT_THROW(ann_forward({12}, c, init_ann_params(c, 1)), ValidationError);
}

TEST(Readout, MeanOverSteps) {
  const Tensor v = Tensor::from_rows({{1, -2, 3}}), w = Tensor::identity(3), b({3});
  EXPECT_EQ(decode_logits({v}, w, b), v);
  EXPECT_EQ(decode_logits({v, v, v}, w, b), v);
  EXPECT_EQ(decode_logits({v, scale(v, -1.0)}, w, b), Tensor({1, 3}));
  EXPECT_THROW(decode_logits(std::vector<Tensor>{}, w, b), ValidationError);
}

TEST(Generate, GreedyDeterministicAndPromptPreserved) {
  ModelConfig c = small();
  const Parameters p = init_snn_params(c, 5);
  Rng r1(3), r2(3), r3(3);
  EXPECT_EQ(generate({1, 2, 3}, 0, 0.0, r1, c, p).tokens, (std::vector<std::size_t>{1, 2, 3}));
  const auto a = generate({1, 2, 3}, 10, 0.0, r2, c, p), b = generate({1, 2, 3}, 10, 0.0, r3, c, p);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.tokens.size(), 13u);
  EXPECT_EQ(a.truncated_steps, 4u);  // contexts of length 9..12
}

TEST(Generate, SamplingIsSeeded) {
  ModelConfig c = small();
  const Parameters p = init_ann_params(c, 5);
  Rng r1(8), r2(8);
  EXPECT_EQ(generate({1}, 6, 1.0, r1, c, p, ModelKind::ann).tokens,
            generate({1}, 6, 1.0, r2, c, p, ModelKind::ann).tokens);
}

TEST(Generate, ArgmaxTiesToLowest) {
  EXPECT_EQ(argmax_row(Tensor::from_rows({{1, 3, 3, 0}}), 0), 1u);
}

TEST(Checkpoint, BitExactRoundTrip) {
  ModelConfig c = small();
  const Checkpoint ck = make_checkpoint(ModelKind::snn, c, init_snn_params(c, 6));
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 8), "BSPKCKPT");
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  const LoadedModel m = read_model(back);
  EXPECT_EQ(m.params, init_snn_params(c, 6));
  EXPECT_EQ(to_kv(m.cfg), to_kv(c));
}

TEST(Checkpoint, CorruptionDetected) {
  ModelConfig c = small(1);
  const std::string bytes = serialize_checkpoint(make_checkpoint(ModelKind::ann, c, init_ann_params(c, 1)));
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
  std::string ver = bytes;
  ver[8] = 9;
  EXPECT_THROW(parse_checkpoint(ver), FormatError);
}
