#pragma once

// Run configuration: `key = value` lines under [section] headers, merged
// over defaults, then overridden by command-line `section.key=value` pairs.

#include <string>
#include <vector>

#include "bispik/distill.hpp"
#include "bispik/energy.hpp"
#include "bispik/kv.hpp"
#include "bispik/model.hpp"
#include "bispik/training.hpp"

namespace bispik {

struct PathConfig {
  std::string corpus;
  std::string teacher;     // frozen teacher checkpoint (distill)
  std::string checkpoint;  // model to load (generate/eval/profile); defaults to <out>/model.ckpt
  std::string out = "run"; // output directory
};

struct GenerateConfig {
  std::string prompt = "\n";
  std::size_t n_new = 64;
  double temperature = 0.0;
  std::uint64_t seed = 1;
};

struct RunConfig {
  std::string command;
  ModelConfig model;
  TrainConfig train;
  SpadConfig spad;
  EnergyConstants energy;
  PathConfig paths;
  GenerateConfig generate;
};

// "section.key" -> value. Rejects malformed lines, unknown sections and
// duplicate keys, naming the line.
KeyValues parse_ini(const std::string& text);
std::string format_ini(const KeyValues& kv);

// Applies `kv` over the defaults; unknown keys are a ConfigError naming them.
RunConfig resolve_config(const std::string& command, const KeyValues& kv);
KeyValues to_kv(const RunConfig& cfg);

// Splits "section.key=value".
std::pair<std::string, std::string> parse_override(const std::string& arg);

}  // namespace bispik
