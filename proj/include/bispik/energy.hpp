#pragma once

// Analytical energy model. Dense MACs cost E_MAC; spike-driven accumulates
// cost E_AC and are counted as SOPs = f_r * T * FLOPs.
//
// Counting rules (MACs, biases ignored), per layer with sequence length L:
//   Q/K/V/out projections  4 L d^2
//   attention scores       h L^2 d_head
//   attention x values     h L^2 d_head
//   FFN                    2 L d d_ff
// embedding lookup and positional add 0, LM head L d V.

#include <cstdint>
#include <string>
#include <vector>

#include "bispik/model.hpp"

namespace bispik {

struct EnergyConstants {
  double e_mac = 4.6e-12;  // J per multiply-accumulate
  double e_ac = 0.9e-12;   // J per accumulate

  void validate() const;
  bool operator==(const EnergyConstants&) const = default;
};

struct FlopCounts {
  std::size_t n_layers = 0;
  // per layer (identical across layers)
  std::uint64_t projections = 0, scores = 0, values = 0, ffn = 0;
  std::uint64_t embed = 0, head = 0;

  std::uint64_t sfsa() const { return projections + scores + values; }
  std::uint64_t layer() const { return sfsa() + ffn; }
  std::uint64_t total() const { return n_layers * layer() + embed + head; }
};

FlopCounts count_flops(const ModelConfig& cfg, std::size_t seq_len);

struct BlockRates {
  double sfsa = 0.0;  // rate of the spikes entering SFSA (the block input)
  double sffn = 0.0;  // rate of the spikes entering SFFN
};

// Per-layer rate of the block input: spikes / (elements x T).
std::vector<double> measure_firing_rates(const TraceBundle& traces);
std::vector<BlockRates> measure_block_rates(const TraceBundle& traces);

std::uint64_t sops(double f_r, std::size_t t_steps, std::uint64_t flops);

// Joules for n operations at `joules_per_op`, in millijoules.
double energy_mj(double ops, double joules_per_op);

struct BlockEnergy {
  std::uint64_t flops = 0;
  double firing_rate = 0.0;
  std::uint64_t sops = 0;
  bool operator==(const BlockEnergy&) const = default;
};

struct LayerEnergy {
  BlockEnergy sfsa, sffn;
  bool operator==(const LayerEnergy&) const = default;
};

struct EnergyReport {
  std::size_t t_steps = 0;
  std::size_t seq_len = 0;
  EnergyConstants constants;
  std::vector<LayerEnergy> layers;
  std::uint64_t embed_flops = 0, lmhead_flops = 0;
  double ann_energy_mj = 0.0;
  double snn_energy_mj = 0.0;

  // Spike-driven energy of layer l (SFSA + SFFN) and its dense counterpart.
  double snn_layer_mj(std::size_t l) const;
  double ann_layer_mj(std::size_t l) const;
  bool operator==(const EnergyReport&) const = default;
};

EnergyReport energy_report(const ModelConfig& cfg, const TraceBundle& traces, const EnergyConstants& c = {});

// Human-readable table.
std::string format_report_table(const EnergyReport& r);
// `key: value` lines after a versioned magic line; layer keys are
// layer.<i>.<sfsa|sffn>.<flops|firing_rate|sops>.
std::string format_report_kv(const EnergyReport& r);
EnergyReport parse_report_kv(const std::string& text);

}  // namespace bispik
