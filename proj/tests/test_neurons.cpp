#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "bispik/errors.hpp"
#include "bispik/neurons.hpp"

using namespace bispik;

namespace {

// Independent scalar LIF used as the oracle for lif_step.
struct ScalarLif {
  double beta, thr, u = 0, s = 0;
  double step(double i) {
    u = i + beta * u - s * thr;
    s = u >= thr ? 1.0 : 0.0;
    return s;
  }
};

}  // namespace

TEST(Lif, ZeroInputStaysSilent) {
  LifParams p;
  NeuronState st = NeuronState::zeros({4});
  for (int t = 0; t < 50; ++t) {
    const StepResult r = lif_step(st, Tensor({4}), p);
    EXPECT_EQ(r.spike, Tensor({4}));
    EXPECT_EQ(r.state.u, Tensor({4}));
    st = r.state;
  }
}

TEST(Lif, SingleStepHandCase) {
  const StepResult r = lif_step(NeuronState::zeros({1}), Tensor({1}, 2.0), LifParams{0.5, 1.0, 2.0});
  EXPECT_EQ(r.state.u[0], 2.0);
  EXPECT_EQ(r.spike[0], 1.0);
}

TEST(Lif, UnitLeakAlternates) {
  LifParams p{1.0, 1.0, 2.0};
  NeuronState st = NeuronState::zeros({1});
  const double u_want[] = {0.5, 1.0, 0.5, 1.0}, s_want[] = {0, 1, 0, 1};
  for (int t = 0; t < 4; ++t) {
    const StepResult r = lif_step(st, Tensor({1}, 0.5), p);
    EXPECT_EQ(r.state.u[0], u_want[t]);
    EXPECT_EQ(r.spike[0], s_want[t]);
    st = r.state;
  }
}

TEST(Lif, MatchesScalarOracleOnRandomDrive) {
  Rng rng(17);
  LifParams p{0.7, 0.8, 2.0};
  const std::size_t n = 16;
  std::vector<ScalarLif> ref(n, ScalarLif{p.beta, p.u_thr});
  NeuronState st = NeuronState::zeros({n});
  for (int t = 0; t < 100; ++t) {
    const Tensor i = seeded_uniform(rng, {n}, -1.0, 2.0);
    const StepResult r = lif_step(st, i, p);
    for (std::size_t k = 0; k < n; ++k) {
      ASSERT_EQ(r.spike[k], ref[k].step(i[k]));
      ASSERT_EQ(r.state.u[k], ref[k].u);
      ASSERT_TRUE(r.spike[k] == 0.0 || r.spike[k] == 1.0);
    }
    st = r.state;
  }
}

TEST(Lif, ShapeMismatchIsError) {
  EXPECT_THROW(lif_step(NeuronState::zeros({2}), Tensor({3}), LifParams{}), DimensionError);
}

TEST(Lif, InvalidParamsRejected) {
  EXPECT_THROW((LifParams{1.5, 1.0, 2.0}).validate(), ConfigError);
  EXPECT_THROW((LifParams{0.5, 0.0, 2.0}).validate(), ConfigError);
  EXPECT_THROW((LifParams{0.5, 1.0, 0.0}).validate(), ConfigError);
}

TEST(Lif, SubthresholdDecayIsMonotoneAndSilent) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const double u0 = seeded_uniform(rng, {1}, 0.0, 0.999)[0];
    NeuronState st{Tensor({1}, u0), Tensor({1})};
    double prev = u0;
    for (int t = 0; t < 100; ++t) {
      const StepResult r = lif_step(st, Tensor({1}), LifParams{});
      ASSERT_EQ(r.spike[0], 0.0);
      ASSERT_LE(r.state.u[0], prev);
      prev = r.state.u[0];
      st = r.state;
    }
    EXPECT_LT(prev, 1e-20);
  }
}

TEST(Ternary, BranchTableOnGrid) {
  TernaryParams tp{1.0, 0.0};
  for (int k = 0; k <= 20; ++k) {
    const double u = -2.5 + 0.25 * k;
    const StepResult r = ternary_step(NeuronState::zeros({1}), Tensor({1}, u), tp);
    const double s = u > 1.0 ? 1.0 : (u < -1.0 ? -1.0 : 0.0);
    EXPECT_EQ(r.spike[0], s) << "U=" << u;
    EXPECT_EQ(r.state.u[0], u * (1.0 - s)) << "U=" << u;
  }
}

TEST(Ternary, HandCases) {
  TernaryParams tp{1.0, 0.0};
  EXPECT_EQ(ternary_step(NeuronState::zeros({1}), Tensor({1}, 2.0), tp).spike[0], 1.0);
  EXPECT_EQ(ternary_step(NeuronState::zeros({1}), Tensor({1}, -2.0), tp).spike[0], -1.0);
  EXPECT_EQ(ternary_step(NeuronState::zeros({1}), Tensor({1}, 2.0), tp).state.u[0], 0.0);
  const StepResult r = ternary_step(NeuronState::zeros({3}), Tensor::from_rows({{-1, 0.3, 1}}).reshaped({3}), tp);
  EXPECT_EQ(r.spike, Tensor({3}));
}

TEST(Ternary, AmplitudeScalesSpikes) {
  TernaryParams tp{0.5, 0.1};
  const StepResult r = ternary_step(NeuronState::zeros({2}), Tensor::from_rows({{0.9, -0.9}}).reshaped({2}), tp);
  EXPECT_EQ(r.spike[0], 0.5);
  EXPECT_EQ(r.spike[1], -0.5);
  EXPECT_DOUBLE_EQ(r.state.u[0], 0.9 * (0.5 - 0.5) + 0.1 * 0.5);
}

TEST(Surrogate, ForwardValues) {
  EXPECT_EQ(surrogate_forward(0.0, 2.0), 0.5);
  EXPECT_NEAR(surrogate_forward(1e9, 2.0), 1.0, 1e-9);
  EXPECT_NEAR(surrogate_forward(-1e9, 2.0), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(surrogate_forward(1.0, 2.0), std::atan(std::numbers::pi) / std::numbers::pi + 0.5);
}

TEST(Surrogate, GradValues) {
  EXPECT_EQ(surrogate_grad(0.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(surrogate_grad(1.0, 2.0), 1.0 / (1.0 + std::numbers::pi * std::numbers::pi));
}

TEST(Surrogate, GradMatchesCentralDifferenceAndBound) {
  Rng rng(99);
  for (double alpha : {0.5, 2.0, 4.0}) {
    for (int i = 0; i < 100; ++i) {
      const double u = seeded_uniform(rng, {1}, -4.0, 4.0)[0];
      const double h = 1e-5;
      const double fd = (surrogate_forward(u + h, alpha) - surrogate_forward(u - h, alpha)) / (2 * h);
      const double g = surrogate_grad(u, alpha);
      EXPECT_LT(std::fabs(fd - g) / g, 1e-6) << "u=" << u;
      EXPECT_GT(g, 0.0);
      EXPECT_LE(g, alpha / 2.0);
    }
  }
}

TEST(Surrogate, TensorFormsMatchScalar) {
  const Tensor u = Tensor::from_rows({{-1, 0, 0.3, 2}});
  const Tensor f = surrogate_forward(u, 2.0), g = surrogate_grad(u, 2.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_EQ(f[i], surrogate_forward(u[i], 2.0));
    EXPECT_EQ(g[i], surrogate_grad(u[i], 2.0));
  }
}

TEST(EmpiricalRate, HandCases) {
  EXPECT_EQ(empirical_rate(0.0, 64, LifParams{}), 0.0);
  EXPECT_EQ(empirical_rate(1.0, 4, LifParams{}), 0.5);
}

TEST(EmpiricalRate, MonotoneBoundedAndFast) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> grid{-1.0, -0.5, 0.0};
  for (double a = 0.25; a <= 3.0 + 1e-12; a += 0.25) grid.push_back(a);
  double prev = 0.0;
  for (double a : grid) {
    const double r = empirical_rate(a, 256, LifParams{});
    EXPECT_GE(r, prev) << "a=" << a;
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    prev = r;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(Eligibility, HandRecursion) {
  const auto e = eligibility_trace({Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1)}, 0.5);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0][0], 1.0);
  EXPECT_EQ(e[1][0], 1.5);
  EXPECT_EQ(e[2][0], 1.75);
}

TEST(Eligibility, ZeroInputZeroTrace) {
  for (const auto& e : eligibility_trace(std::vector<Tensor>(5, Tensor({3})), 0.5)) EXPECT_EQ(e, Tensor({3}));
}

TEST(Eligibility, BoundHoldsOnRandomStreams) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double beta = seeded_uniform(rng, {1}, 0.05, 0.95)[0], m = seeded_uniform(rng, {1}, 0.1, 3.0)[0];
    std::vector<Tensor> xs;
    for (int t = 0; t < 64; ++t) xs.push_back(seeded_uniform(rng, {1}, -m, m));
    for (const auto& e : eligibility_trace(xs, beta)) ASSERT_LE(std::fabs(e[0]), m / (1 - beta) + 1e-12);
  }
}

TEST(Eligibility, SingleNeuronTwoStepsByHand) {
  // One input x, weight w, constant drive; loss = S_1 + S_2 through the surrogate.
  LifParams p;
  const double x = 1.0, w = 0.8;
  NeuronTrack tr;
  ag::Var wv = ag::leaf(Tensor::scalar(w));
  ag::Var s1 = fire(tr, ag::scale(wv, x), NeuronSpec::binary(p));
  const double u1 = tr.u->value[0];
  ag::Var s2 = fire(tr, ag::scale(wv, x), NeuronSpec::binary(p));
  const double u2 = tr.u->value[0];
  ag::backward(ag::add(s1, s2));
  const double e1 = x;
  const double e2 = x + (p.beta - p.u_thr * surrogate_grad(u1 - p.u_thr, 2.0)) * e1;
  const double d1 = surrogate_grad(u1 - p.u_thr, 2.0), d2 = surrogate_grad(u2 - p.u_thr, 2.0);
  EXPECT_NEAR(wv->grad[0], d1 * e1 + d2 * e2, 1e-14);
}

TEST(Fire, BinaryModeEmitsBinarySpikes) {
  Rng rng(8);
  NeuronTrack tr;
  for (int t = 0; t < 10; ++t) {
    const ag::Var s = fire(tr, ag::constant(seeded_normal(rng, {4, 4}, 2.0)), NeuronSpec::binary(LifParams{}));
    for (double v : s->value.vec()) ASSERT_TRUE(v == 0.0 || v == 1.0);
  }
}

TEST(Fire, AgreesWithLifStep) {
  Rng rng(9);
  LifParams p;
  NeuronTrack tr;
  NeuronState st = NeuronState::zeros({6});
  for (int t = 0; t < 20; ++t) {
    const Tensor i = seeded_normal(rng, {1, 6}, 1.5);
    const ag::Var s = fire(tr, ag::constant(i), NeuronSpec::binary(p));
    const StepResult r = lif_step(st, i.reshaped({6}), p);
    ASSERT_EQ(s->value.reshaped({6}), r.spike);
    st = r.state;
  }
}
