#include <gtest/gtest.h>

#include <cmath>

#include "bispik/attention.hpp"
#include "bispik/errors.hpp"

using namespace bispik;

namespace {

bool binary(const Tensor& t) {
  for (double v : t.vec())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

AttnWeights random_weights(std::size_t d, Rng& rng, double std) {
  AttnWeights w = AttnWeights::zeros(d);
  for (Tensor* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_out}) *t = seeded_normal(rng, {d, d}, std);
  for (Tensor* t : {&w.b_q, &w.b_k, &w.b_v, &w.b_out}) *t = seeded_normal(rng, {d}, 0.1);
  return w;
}

Tensor random_spikes(Rng& rng, std::size_t l, std::size_t d) {
  Tensor x({l, d});
  for (auto& v : x.vec()) v = rng.below(2) ? 1.0 : 0.0;
  return x;
}

SfsaOptions opts(std::size_t heads) {
  SfsaOptions o;
  o.n_heads = heads;
  o.neuron = NeuronSpec::binary(LifParams{});
  return o;
}

}  // namespace

TEST(CausalMask, LowerTriangle) {
  EXPECT_EQ(causal_mask(3).m, Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {1, 1, 1}}));
  EXPECT_EQ(causal_mask(1).m, Tensor::from_rows({{1}}));
}

TEST(CausalMask, PaddingZeroesKeyColumn) {
  EXPECT_EQ(causal_mask(3, Tensor({3}, std::vector<double>{1, 1, 0})).m,
            Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {1, 1, 0}}));
}

TEST(CausalMask, NonBinaryPaddingRejected) {
  EXPECT_THROW(causal_mask(2, Tensor({2}, std::vector<double>{1, 0.5})), ValidationError);
}

TEST(Sfsa, ZeroInputGivesZeroOutput) {
  const SfsaResult r = sfsa_forward(Tensor({4, 8}), AttnWeights::zeros(8), causal_mask(4),
                                    SfsaState::fresh(4, 8, 2), opts(2));
  EXPECT_EQ(r.out_spikes, Tensor({4, 8}));
  EXPECT_EQ(r.attn_int, Tensor({2, 4, 4}));
}

TEST(Sfsa, AllOnesHeadScoresEqualHeadWidth) {
  // Large positive biases make every Q/K/V neuron fire on the first step.
  AttnWeights w = AttnWeights::zeros(8);
  w.b_q = Tensor({8}, 5.0);
  w.b_k = Tensor({8}, 5.0);
  const SfsaResult r = sfsa_forward(Tensor({3, 8}), w, causal_mask(3), SfsaState::fresh(3, 8, 2), opts(2));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.attn_int[(h * 3 + i) * 3 + j], j <= i ? 4.0 : 0.0);
}

TEST(Sfsa, IntegerScoresBinarySpikesAcrossSteps) {
  Rng rng(21);
  const std::size_t l = 7, d = 8, heads = 2;
  const AttnWeights w = random_weights(d, rng, 0.6);
  SfsaState st = SfsaState::fresh(l, d, heads);
  for (int t = 0; t < 4; ++t) {
    const SfsaResult r = sfsa_forward(random_spikes(rng, l, d), w, causal_mask(l), st, opts(heads));
    for (double v : r.attn_int.vec()) {
      EXPECT_LT(std::fabs(v - std::round(v)), 1e-9);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, double(d / heads));
    }
    for (double v : r.attn_out.vec()) EXPECT_LT(std::fabs(v - std::round(v)), 1e-9);
    EXPECT_TRUE(binary(r.out_spikes));
    EXPECT_TRUE(binary(r.attn_spikes));
    st = r.state;
  }
}

TEST(Sfsa, PrefixUnchangedBySuffixPerturbation) {
  Rng rng(33);
  const std::size_t l = 8, d = 8;
  const AttnWeights w = random_weights(d, rng, 0.7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_spikes(rng, l, d);
    const std::size_t j = 1 + rng.below(l - 1);
    Tensor y = x;
    for (std::size_t k = 0; k < d; ++k) y(j, k) = 1.0 - y(j, k);
    const SfsaResult a = sfsa_forward(x, w, causal_mask(l), SfsaState::fresh(l, d, 2), opts(2));
    const SfsaResult b = sfsa_forward(y, w, causal_mask(l), SfsaState::fresh(l, d, 2), opts(2));
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t k = 0; k < d; ++k) ASSERT_EQ(a.out_spikes(i, k), b.out_spikes(i, k));
  }
}

TEST(Sfsa, NonBinaryInputRejected) {
  Tensor x({2, 4});
  x(0, 0) = 0.5;
  EXPECT_THROW(sfsa_forward(x, AttnWeights::zeros(4), causal_mask(2), SfsaState::fresh(2, 4, 1), opts(1)),
               ValidationError);
}

TEST(Sfsa, MaskLengthMismatchRejected) {
  EXPECT_THROW(sfsa_forward(Tensor({3, 4}), AttnWeights::zeros(4), causal_mask(2), SfsaState::fresh(3, 4, 1), opts(1)),
               DimensionError);
}

TEST(Csa, SinglePositionAttendsToItself) {
  Rng rng(1);
  const CsaResult r = csa_forward(seeded_normal(rng, {1, 4}, 1.0), random_weights(4, rng, 0.5), causal_mask(1));
  EXPECT_EQ(r.attn_map, Tensor({1, 1, 1}, 1.0));
}

TEST(Csa, EqualLogitsSplitEvenly) {
  // Zero Q/K weights give identical queries and keys.
  Rng rng(2);
  AttnWeights w = random_weights(4, rng, 0.5);
  w.w_q = Tensor({4, 4});
  w.w_k = Tensor({4, 4});
  const CsaResult r = csa_forward(seeded_normal(rng, {2, 4}, 1.0), w, causal_mask(2));
  EXPECT_DOUBLE_EQ(r.attn_map[2], 0.5);
  EXPECT_DOUBLE_EQ(r.attn_map[3], 0.5);
}

TEST(Csa, RowsAreCausalDistributions) {
  Rng rng(3);
  const CsaResult r = csa_forward(seeded_normal(rng, {6, 8}, 1.0), random_weights(8, rng, 0.5), causal_mask(6), 2);
  ASSERT_EQ(r.attn_map.shape(), (Shape{2, 6, 6}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        const double v = r.attn_map[(h * 6 + i) * 6 + j];
        if (j > i) EXPECT_EQ(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Csa, SameShapesAsSfsa) {
  Rng rng(4);
  const AttnWeights w = random_weights(8, rng, 0.5);
  const CsaResult c = csa_forward(seeded_normal(rng, {5, 8}, 1.0), w, causal_mask(5), 4);
  const SfsaResult s = sfsa_forward(random_spikes(rng, 5, 8), w, causal_mask(5), SfsaState::fresh(5, 8, 4), opts(4));
  EXPECT_EQ(c.attn_map.shape(), s.attn_spikes.shape());
  EXPECT_EQ(c.out.shape(), s.out_spikes.shape());
}
