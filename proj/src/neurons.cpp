#include "bispik/neurons.hpp"

#include <cmath>
#include <numbers>

namespace bispik {

namespace {

constexpr double kPi = std::numbers::pi;

void need_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": state " + shape_str(a.shape()) + " vs input " +
                         shape_str(b.shape()));
  }
}

double ternary_value(double h, double amp) {
  if (h > amp) return amp;
  if (h < -amp) return -amp;
  return 0.0;
}

}  // namespace

void LifParams::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("lif.beta must lie in (0,1)");
  if (!(u_thr > 0.0)) throw ConfigError("lif.u_thr must be > 0");
  if (!(surrogate_alpha > 0.0)) throw ConfigError("lif.surrogate_alpha must be > 0");
}

void TernaryParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("ternary.alpha must be > 0");
}

StepResult lif_step(const NeuronState& state, const Tensor& input, const LifParams& p) {
  need_same(state.u, input, "lif_step");
  need_same(state.s_prev, input, "lif_step");
  StepResult r{Tensor(input.shape()), NeuronState::zeros(input.shape())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double u = input[i] + p.beta * state.u[i] - state.s_prev[i] * p.u_thr;
    const double s = u >= p.u_thr ? 1.0 : 0.0;
    r.spike[i] = s;
    r.state.u[i] = u;
    r.state.s_prev[i] = s;
  }
  return r;
}

StepResult ternary_step(const NeuronState& state, const Tensor& input, const TernaryParams& p,
                        const LifParams& leak) {
  need_same(state.u, input, "ternary_step");
  StepResult r{Tensor(input.shape()), NeuronState::zeros(input.shape())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double h = input[i] + leak.beta * state.u[i];
    const double s = ternary_value(h, p.alpha);
    r.spike[i] = s;
    r.state.u[i] = h * (p.alpha - s) + p.u_reset * s;
    r.state.s_prev[i] = s;
  }
  return r;
}

double surrogate_forward(double u, double alpha) {
  return std::atan(kPi / 2.0 * alpha * u) / kPi + 0.5;
}

double surrogate_grad(double u, double alpha) {
  const double x = kPi / 2.0 * alpha * u;
  return alpha / 2.0 / (1.0 + x * x);
}

Tensor surrogate_forward(const Tensor& u, double alpha) {
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = surrogate_forward(u[i], alpha);
  return out;
}

Tensor surrogate_grad(const Tensor& u, double alpha) {
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = surrogate_grad(u[i], alpha);
  return out;
}

double empirical_rate(double a, int t_steps, const LifParams& p) {
  if (t_steps < 1) throw ValidationError("empirical_rate: t_steps must be >= 1");
  double u = 0.0, s = 0.0, count = 0.0;
  for (int t = 0; t < t_steps; ++t) {
    u = a + p.beta * u - s * p.u_thr;
    s = u >= p.u_thr ? 1.0 : 0.0;
    count += s;
  }
  return count / t_steps;
}

std::vector<Tensor> eligibility_trace(const std::vector<Tensor>& inputs, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("eligibility_trace: beta must lie in (0,1)");
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    if (out.empty()) {
      out.push_back(x);
    } else {
      out.push_back(add(x, scale(out.back(), beta)));
    }
  }
  return out;
}

std::vector<Tensor> eligibility_trace_with_reset(const std::vector<Tensor>& inputs,
                                                 const std::vector<Tensor>& membrane,
                                                 const LifParams& p) {
  if (inputs.size() != membrane.size()) {
    throw DimensionError("eligibility_trace_with_reset: input and membrane histories differ in length");
  }
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (t == 0) {
      out.push_back(inputs[0]);
      continue;
    }
    const Tensor& prev_u = membrane[t - 1];
    Tensor e = inputs[t];
    need_same(e, out.back(), "eligibility_trace_with_reset");
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double kappa = p.beta - p.u_thr * surrogate_grad(prev_u[i] - p.u_thr, p.surrogate_alpha);
      e[i] += kappa * out.back()[i];
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

// I + beta * u_prev - thr * s_prev, with either history term optional.
ag::Var charge(const ag::Var& current, const ag::Var& u_prev, const ag::Var& s_prev, double beta,
               double thr) {
  if (!u_prev) return current;
  Tensor v = current->value;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] += beta * u_prev->value[i];
    if (s_prev) v[i] -= thr * s_prev->value[i];
  }
  std::vector<ag::Var> parents{current, u_prev};
  if (s_prev) parents.push_back(s_prev);
  return ag::make_node(std::move(v), std::move(parents), [beta, thr](ag::Node& n) {
    const auto& g = n.grad;
    if (n.parents[0]->requires_grad) {
      auto& b = n.parents[0]->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) b[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& b = n.parents[1]->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) b[i] += beta * g[i];
    }
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      auto& b = n.parents[2]->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) b[i] -= thr * g[i];
    }
  });
}

ag::Var heaviside(const ag::Var& u, double thr, double alpha, bool relaxed) {
  Tensor s(u->value.shape());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = u->value[i] - thr;
    s[i] = relaxed ? surrogate_forward(x, alpha) : (x >= 0.0 ? 1.0 : 0.0);
  }
  return ag::make_node(std::move(s), {u}, [thr, alpha](ag::Node& n) {
    auto& b = n.parents[0]->grad_buf();
    const auto& uv = n.parents[0]->value;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += n.grad[i] * surrogate_grad(uv[i] - thr, alpha);
  });
}

ag::Var ternary_fire(const ag::Var& h, double amp, double alpha, bool relaxed) {
  Tensor s(h->value.shape());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = h->value[i];
    s[i] = relaxed ? amp * (surrogate_forward(x - amp, alpha) - surrogate_forward(-x - amp, alpha))
                   : ternary_value(x, amp);
  }
  return ag::make_node(std::move(s), {h}, [amp, alpha](ag::Node& n) {
    auto& b = n.parents[0]->grad_buf();
    const auto& hv = n.parents[0]->value;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double x = hv[i];
      b[i] += n.grad[i] * amp * (surrogate_grad(x - amp, alpha) + surrogate_grad(-x - amp, alpha));
    }
  });
}

// H * (a - S) + U_reset * S
ag::Var ternary_reset(const ag::Var& h, const ag::Var& s, double amp, double u_reset) {
  Tensor u(h->value.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = h->value[i] * (amp - s->value[i]) + u_reset * s->value[i];
  }
  return ag::make_node(std::move(u), {h, s}, [amp, u_reset](ag::Node& n) {
    const auto& hv = n.parents[0]->value;
    const auto& sv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      auto& b = n.parents[0]->grad_buf();
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += n.grad[i] * (amp - sv[i]);
    }
    if (n.parents[1]->requires_grad) {
      auto& b = n.parents[1]->grad_buf();
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += n.grad[i] * (u_reset - hv[i]);
    }
  });
}

}  // namespace

ag::Var fire(NeuronTrack& track, const ag::Var& current, const NeuronSpec& spec) {
  if (track.u && track.u->value.shape() != current->value.shape()) {
    throw DimensionError("fire: state " + shape_str(track.u->value.shape()) + " vs input " +
                         shape_str(current->value.shape()));
  }
  const double alpha = spec.lif.surrogate_alpha;
  if (spec.mode == NeuronMode::binary) {
    ag::Var u = charge(current, track.u, track.s, spec.lif.beta, spec.threshold);
    ag::Var s = heaviside(u, spec.threshold, alpha, spec.relaxed);
    track.u = u;
    track.s = s;
    return s;
  }
  ag::Var h = charge(current, track.u, nullptr, spec.lif.beta, 0.0);
  ag::Var s = ternary_fire(h, spec.ternary.alpha, alpha, spec.relaxed);
  track.u = ternary_reset(h, s, spec.ternary.alpha, spec.ternary.u_reset);
  track.s = s;
  return s;
}

}  // namespace bispik
