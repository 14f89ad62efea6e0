#include "bispik/energy.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "bispik/errors.hpp"

namespace bispik {

namespace {

constexpr const char* kMagic = "# bispik-energy-report v1";

double check_rate(const SpikeCounter& c, const char* what, std::size_t l) {
  const double r = c.rate();
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ValidationError(std::string("firing rate of ") + what + " in layer " + std::to_string(l) +
                          " outside [0, 1]");
  }
  return r;
}

BlockEnergy block(std::uint64_t flops, double rate, std::size_t t_steps) {
  return {flops, rate, sops(rate, t_steps, flops)};
}

}  // namespace

void EnergyConstants::validate() const {
  if (!(e_mac > 0.0)) throw ConfigError("energy.e_mac must be > 0");
  if (!(e_ac > 0.0)) throw ConfigError("energy.e_ac must be > 0");
}

FlopCounts count_flops(const ModelConfig& cfg, std::size_t seq_len) {
  if (seq_len > cfg.max_seq_len) {
    throw ValidationError("count_flops: seq_len " + std::to_string(seq_len) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  }
  const std::uint64_t L = seq_len, d = cfg.d_model, h = cfg.n_heads, dh = cfg.d_head();
  FlopCounts f;
  f.n_layers = cfg.n_layers;
  f.projections = 4 * L * d * d;
  f.scores = h * L * L * dh;
  f.values = h * L * L * dh;
  f.ffn = 2 * L * d * cfg.d_ff;
  f.embed = 0;
  f.head = L * d * cfg.vocab_size;
  return f;
}

std::vector<BlockRates> measure_block_rates(const TraceBundle& traces) {
  if (traces.layers.empty() || traces.t_steps == 0) throw ValidationError("measure_firing_rates: empty traces");
  std::vector<BlockRates> out;
  for (std::size_t l = 0; l < traces.layers.size(); ++l) {
    const auto& lt = traces.layers[l];
    if (lt.sfsa_in.elements <= 0.0 || lt.sffn_in.elements <= 0.0) {
      throw ValidationError("measure_firing_rates: layer " + std::to_string(l) + " has no counted elements");
    }
    out.push_back({check_rate(lt.sfsa_in, "SFSA input", l), check_rate(lt.sffn_in, "SFFN input", l)});
  }
  return out;
}

std::vector<double> measure_firing_rates(const TraceBundle& traces) {
  std::vector<double> out;
  for (const auto& b : measure_block_rates(traces)) out.push_back(b.sfsa);
  return out;
}

std::uint64_t sops(double f_r, std::size_t t_steps, std::uint64_t flops) {
  if (!(f_r >= 0.0 && f_r <= 1.0)) throw ValidationError("sops: firing rate " + fmt_double(f_r) + " outside [0, 1]");
  return static_cast<std::uint64_t>(
      std::llround(f_r * static_cast<double>(t_steps) * static_cast<double>(flops)));
}

double energy_mj(double ops, double joules_per_op) { return ops * joules_per_op * 1e3; }

double EnergyReport::snn_layer_mj(std::size_t l) const {
  const auto& le = layers.at(l);
  return energy_mj(static_cast<double>(le.sfsa.sops + le.sffn.sops), constants.e_ac);
}

double EnergyReport::ann_layer_mj(std::size_t l) const {
  const auto& le = layers.at(l);
  return energy_mj(static_cast<double>(le.sfsa.flops + le.sffn.flops), constants.e_mac);
}

EnergyReport energy_report(const ModelConfig& cfg, const TraceBundle& traces, const EnergyConstants& c) {
  c.validate();
  if (traces.layers.size() != cfg.n_layers) {
    throw ValidationError("energy_report: traces have " + std::to_string(traces.layers.size()) +
                          " layers, config " + std::to_string(cfg.n_layers));
  }
  const FlopCounts f = count_flops(cfg, traces.seq_len);
  const auto rates = measure_block_rates(traces);
  EnergyReport r;
  r.t_steps = traces.t_steps;
  r.seq_len = traces.seq_len;
  r.constants = c;
  r.embed_flops = f.embed;
  r.lmhead_flops = f.head;
  std::uint64_t total_sops = 0;
  for (const auto& br : rates) {
    LayerEnergy le{block(f.sfsa(), br.sfsa, r.t_steps), block(f.ffn, br.sffn, r.t_steps)};
    total_sops += le.sfsa.sops + le.sffn.sops;
    r.layers.push_back(le);
  }
  r.snn_energy_mj = energy_mj(static_cast<double>(f.embed + f.head), c.e_mac) +
                    energy_mj(static_cast<double>(total_sops), c.e_ac);
  r.ann_energy_mj = energy_mj(static_cast<double>(f.total()), c.e_mac);
  return r;
}

std::string format_report_table(const EnergyReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "energy report  T=%zu  L=%zu  E_MAC=%.3g J  E_AC=%.3g J\n", r.t_steps, r.seq_len,
                r.constants.e_mac, r.constants.e_ac);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-6s %-6s %14s %10s %14s %12s %12s\n", "layer", "block", "flops", "f_r", "sops",
                "snn_mJ", "ann_mJ");
  os << buf;
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    for (const auto& [name, b] : {std::pair{"sfsa", r.layers[l].sfsa}, std::pair{"sffn", r.layers[l].sffn}}) {
      std::snprintf(buf, sizeof buf, "%-6zu %-6s %14llu %10.4f %14llu %12.6g %12.6g\n", l, name,
                    static_cast<unsigned long long>(b.flops), b.firing_rate, static_cast<unsigned long long>(b.sops),
                    energy_mj(static_cast<double>(b.sops), r.constants.e_ac),
                    energy_mj(static_cast<double>(b.flops), r.constants.e_mac));
      os << buf;
    }
  }
  std::snprintf(buf, sizeof buf, "embed flops %llu  lm-head flops %llu\n",
                static_cast<unsigned long long>(r.embed_flops), static_cast<unsigned long long>(r.lmhead_flops));
  os << buf;
  std::snprintf(buf, sizeof buf, "total  snn %.6g mJ  ann %.6g mJ\n", r.snn_energy_mj, r.ann_energy_mj);
  os << buf;
  return os.str();
}

std::string format_report_kv(const EnergyReport& r) {
  std::ostringstream os;
  os << kMagic << '\n';
  os << "t_steps: " << r.t_steps << '\n';
  os << "seq_len: " << r.seq_len << '\n';
  os << "e_mac_j: " << fmt_double(r.constants.e_mac) << '\n';
  os << "e_ac_j: " << fmt_double(r.constants.e_ac) << '\n';
  os << "n_layers: " << r.layers.size() << '\n';
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    for (const auto& [name, b] : {std::pair{"sfsa", r.layers[l].sfsa}, std::pair{"sffn", r.layers[l].sffn}}) {
      const std::string p = "layer." + std::to_string(l) + "." + name + ".";
      os << p << "flops: " << b.flops << '\n';
      os << p << "firing_rate: " << fmt_double(b.firing_rate) << '\n';
      os << p << "sops: " << b.sops << '\n';
    }
  }
  os << "embed_flops: " << r.embed_flops << '\n';
  os << "lmhead_flops: " << r.lmhead_flops << '\n';
  os << "ann_energy_mj: " << fmt_double(r.ann_energy_mj) << '\n';
  os << "snn_energy_mj: " << fmt_double(r.snn_energy_mj) << '\n';
  return os.str();
}

EnergyReport parse_report_kv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMagic) throw FormatError("energy report: missing magic line");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw FormatError("energy report: malformed line '" + line + "'");
    kv[line.substr(0, colon)] = line.substr(colon + 2);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("energy report: missing key '" + k + "'");
    return it->second;
  };
  EnergyReport r;
  r.t_steps = parse_size("t_steps", get("t_steps"));
  r.seq_len = parse_size("seq_len", get("seq_len"));
  r.constants.e_mac = parse_double("e_mac_j", get("e_mac_j"));
  r.constants.e_ac = parse_double("e_ac_j", get("e_ac_j"));
  const std::size_t n = parse_size("n_layers", get("n_layers"));
  for (std::size_t l = 0; l < n; ++l) {
    LayerEnergy le;
    for (auto [name, b] : {std::pair{"sfsa", &le.sfsa}, std::pair{"sffn", &le.sffn}}) {
      const std::string p = "layer." + std::to_string(l) + "." + name + ".";
      b->flops = parse_u64(p + "flops", get(p + "flops"));
      b->firing_rate = parse_double(p + "firing_rate", get(p + "firing_rate"));
      b->sops = parse_u64(p + "sops", get(p + "sops"));
    }
    r.layers.push_back(le);
  }
  r.embed_flops = parse_u64("embed_flops", get("embed_flops"));
  r.lmhead_flops = parse_u64("lmhead_flops", get("lmhead_flops"));
  r.ann_energy_mj = parse_double("ann_energy_mj", get("ann_energy_mj"));
  r.snn_energy_mj = parse_double("snn_energy_mj", get("snn_energy_mj"));
  return r;
}

}  // namespace bispik
