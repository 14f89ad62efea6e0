#pragma once

// Optimisation: gradient clipping, warmup + cosine learning rate, Adam, the
// byte-level corpus pipeline and the training loop shared by the dense
// teacher, hard-label students and distilled students.

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bispik/checkpoint.hpp"
#include "bispik/distill.hpp"
#include "bispik/model.hpp"

namespace bispik {

struct TrainConfig {
  double lr_peak = 5e-4;
  double warmup_ratio = 0.2;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 4;   // windows per micro-batch
  std::size_t grad_accum = 1;   // micro-batches per optimizer step
  std::size_t seq_len = 64;
  double grad_clip = 0.7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  std::size_t eval_windows = 32;

  void validate() const;
};

KeyValues to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(const KeyValues& kv);

// Linear ramp over the first warmup_ratio * total_steps steps, cosine decay
// to 0 at total_steps.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

double global_norm(const Parameters& grads);
// Rescales to norm `threshold` when the global norm exceeds it; returns the
// norm before clipping.
double clip_gradients(Parameters& grads, double threshold);

struct AdamState {
  Parameters m, v;
  std::uint64_t step = 0;
};

void adam_step(Parameters& params, const Parameters& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

// Reverse sweep through the unrolled graph seeded with d(loss)/d(output);
// returns gradients of every parameter bound in `bind`.
Parameters bptt_backward(const ag::Var& output, const Tensor& upstream, const ParamBinder& bind);

// ---- corpus ----

inline constexpr std::size_t kBos = 256;
inline constexpr std::size_t kByteVocab = 257;

std::vector<std::size_t> encode_bytes(std::string_view text);
std::string decode_bytes(const std::vector<std::size_t>& tokens);  // BOS is dropped

struct CorpusSplit {
  std::vector<std::size_t> train, val;
};

// The trailing val_fraction of the token stream is held out.
CorpusSplit split_corpus(const std::vector<std::size_t>& tokens, double val_fraction);

struct Window {
  std::vector<std::size_t> inputs, targets;  // targets[i] = next token after inputs[i]
};

// Contiguous windows with stride seq_len; a stream shorter than seq_len + 1
// yields a single shorter window.
std::vector<Window> make_windows(const std::vector<std::size_t>& tokens, std::size_t seq_len);

// ---- loop ----

enum class TrainMode { teacher, hard, spad };

struct TeacherModel {
  ModelConfig cfg;
  Parameters params;
};

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  std::array<double, 5> weighted{};  // lambda-weighted emb, attn, feat, soft, hard
  double firing_rate = 0.0;
  double grad_norm = 0.0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

struct TrainSetup {
  TrainMode mode = TrainMode::hard;
  ModelConfig model;
  TrainConfig train;
  SpadConfig spad;
  const TeacherModel* teacher = nullptr;  // required for spad
};

struct TrainResult {
  Parameters params;
  AdamState adam;
  std::vector<MetricsRow> metrics;
};

// Runs train.total_steps optimizer steps starting from `init`.
TrainResult train_loop(const TrainSetup& setup, const std::vector<std::size_t>& train_tokens,
                       const Parameters& init, std::ostream* metrics = nullptr);

struct EvalResult {
  double ce = 0.0;           // token-averaged cross-entropy (nats)
  double firing_rate = 0.0;  // SNN only
  std::size_t tokens = 0;
};

EvalResult evaluate(const std::vector<std::size_t>& tokens, const ModelConfig& cfg, const Parameters& params,
                    ModelKind kind, std::size_t seq_len, std::size_t max_windows);

// ---- checkpoints of models and optimizer state ----

Checkpoint make_checkpoint(ModelKind kind, const ModelConfig& cfg, const Parameters& params,
                           const AdamState* adam = nullptr);

struct LoadedModel {
  ModelKind kind = ModelKind::snn;
  ModelConfig cfg;
  Parameters params;
  AdamState adam;
};

LoadedModel read_model(const Checkpoint& ck);

}  // namespace bispik
