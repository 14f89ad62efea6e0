#pragma once

// Spike-aware alignment distillation: five losses between a frozen dense
// teacher and the spiking student, plus the structural glue (layer skipping,
// head pooling, width projections) that lets them be compared.
//
//   L_total = l1 L_emb + l2 L_attn + l3 L_feat + l4 L_soft + l5 L_hard
//
// Every MSE below is the mean over elements.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bispik/autograd.hpp"
#include "bispik/model.hpp"
#include "bispik/neurons.hpp"

namespace bispik {

struct SpadConfig {
  std::array<double, 5> lambda{0.2, 0.1, 0.1, 0.3, 0.3};  // emb, attn, feat, soft, hard
  double tau = 2.0;
  double gamma_attn = 0.5;
  double gamma_feat = 0.5;

  void validate() const;
};

KeyValues to_kv(const SpadConfig& cfg);
SpadConfig spad_config_from_kv(const KeyValues& kv);

enum LossIndex : std::size_t { kEmb = 0, kAttn = 1, kFeat = 2, kSoft = 3, kHard = 4 };
inline constexpr std::array<const char*, 5> kLossNames{"emb", "attn", "feat", "soft", "hard"};

// Student layer i (0-based) -> teacher layer, using stride ceil(B/M) and
// clamping so the map stays strictly increasing within [0, B).
std::vector<std::size_t> layer_map(std::size_t n_student, std::size_t n_teacher);

// Mean-pools teacher heads [h_T, L, L] into h_S groups of h_T / h_S heads.
Tensor pool_heads(const Tensor& a, std::size_t student_heads);

// sigma_spike: every entry drives its own LIF neuron (U_0 = 0) with a
// constant current for t_steps steps. Output is [T, ...a.shape].
Tensor spike_encode_teacher_attention(const Tensor& a, std::size_t t_steps, const LifParams& p);
// Time mean of sigma_spike(a), i.e. the empirical rate map g(a).
Tensor spike_rate_map(const Tensor& a, std::size_t t_steps, const LifParams& p);
// One stochastic trial of sigma_spike: the drive at every step is
// a + noise_std * N(0, 1), drawn independently per entry and step.
Tensor spike_encode_noisy(const Tensor& a, std::size_t t_steps, const LifParams& p, double noise_std, Rng& rng);
// Mean over the leading (time) dimension.
Tensor time_mean(const Tensor& stream);

// ---- value-level losses ----

// a_ann [h, L, L] (or [L, L]); a_snn_spikes [T, h, L, L] (or [T, L, L]).
double loss_attention(const Tensor& a_ann, const Tensor& a_snn_spikes, const SpadConfig& cfg,
                      const LifParams& p);
// h_ann [L, d_T]; h_snn [T, L, d_S]; proj [d_S, d_T] required when d_S != d_T.
double loss_feature(const Tensor& h_ann, const Tensor& h_snn, const SpadConfig& cfg, const LifParams& p,
                    const std::optional<Tensor>& proj = std::nullopt);
double loss_embedding(const Tensor& e_ann, const std::vector<Tensor>& e_snn_steps,
                      const std::optional<Tensor>& proj = std::nullopt);
double loss_soft(const Tensor& z_ann, const Tensor& z_snn, double tau);
double loss_hard(const Tensor& z_snn, const std::vector<std::size_t>& targets);

struct LossBreakdown {
  double total = 0.0;
  std::array<double, 5> weighted{};  // lambda_i * L_i
};

LossBreakdown loss_total(const std::array<double, 5>& components, const SpadConfig& cfg);

// ---- differentiable forms ----

// teacher[l] is the (pooled) map for student layer l, [h_S, L, L];
// student[l][t][h] the spike attention [L, L].
ag::Var attention_loss(const std::vector<Tensor>& teacher,
                       const std::vector<std::vector<std::vector<ag::Var>>>& student,
                       const SpadConfig& cfg, const LifParams& p);
// teacher[l] is [L, d_T]; student[l][t] is [L, d_S]; proj[l] may be null
// when widths agree.
ag::Var feature_loss(const std::vector<Tensor>& teacher, const std::vector<std::vector<ag::Var>>& student,
                     const std::vector<ag::Var>& proj, const SpadConfig& cfg, const LifParams& p);
ag::Var embedding_loss(const Tensor& e_ann, const std::vector<ag::Var>& e_snn_steps, const ag::Var& proj);

// Throws ConfigError when the pair cannot be aligned.
void check_compatible(const ModelConfig& student, const ModelConfig& teacher);

// Width projections ("spad.*") needed for this student/teacher pair; empty
// when the widths match.
Parameters init_spad_params(const ModelConfig& student, const ModelConfig& teacher, std::uint64_t seed);

struct SpadTerms {
  ag::Var total;
  std::array<ag::Var, 5> parts;  // unweighted L_emb .. L_hard
};

// Full objective for one window: student graph vs teacher outputs on the
// same tokens. `bind` supplies the spad.* projections if present.
SpadTerms spad_objective(const SnnGraph& student, const AnnOutput& teacher,
                         const std::vector<std::size_t>& targets, const ModelConfig& student_cfg,
                         const ModelConfig& teacher_cfg, const SpadConfig& cfg, ParamBinder& bind);

}  // namespace bispik
