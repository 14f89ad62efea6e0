#include "bispik/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "bispik/config.hpp"
#include "bispik/errors.hpp"
#include "bispik/selftest.hpp"

namespace bispik {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string corpus, out, checkpoint, teacher, prompt;
  std::optional<std::size_t> steps, n_new;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError(key + ": required");
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": file '" + path + "' not found");
}

fs::path out_dir(const RunConfig& rc) {
  fs::path p(rc.paths.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw ConfigError("paths.out: cannot create directory '" + rc.paths.out + "'");
  return p;
}

void write_snapshot(const RunConfig& rc, const KeyValues& kv) {
  write_file((out_dir(rc) / (rc.command + ".config.ini")).string(), format_ini(kv));
}

std::string checkpoint_in(const RunConfig& rc) {
  return rc.paths.checkpoint.empty() ? (fs::path(rc.paths.out) / "model.ckpt").string() : rc.paths.checkpoint;
}

CorpusSplit load_corpus(const RunConfig& rc) {
  require_file("paths.corpus", rc.paths.corpus);
  const std::vector<std::size_t> tokens = encode_bytes(read_file(rc.paths.corpus));
  if (tokens.size() < 2) throw ValidationError("paths.corpus: corpus '" + rc.paths.corpus + "' is too short");
  return split_corpus(tokens, rc.train.val_fraction);
}

LoadedModel load_model(const std::string& key, const std::string& path) {
  require_file(key, path);
  try {
    return read_model(load_checkpoint(path));
  } catch (const FormatError& e) {
    throw FormatError(key + ": " + e.what());
  }
}

int cmd_train(const RunConfig& rc, const KeyValues& kv, TrainMode mode, std::ostream& out) {
  const CorpusSplit split = load_corpus(rc);
  std::optional<TeacherModel> teacher;
  Parameters init;
  if (mode == TrainMode::spad) {
    LoadedModel t = load_model("paths.teacher", rc.paths.teacher);
    if (t.kind != ModelKind::ann) throw ConfigError("paths.teacher: checkpoint is not a dense teacher");
    check_compatible(rc.model, t.cfg);
    teacher = TeacherModel{t.cfg, std::move(t.params)};
  }
  if (mode == TrainMode::teacher) {
    init = init_ann_params(rc.model, rc.train.seed);
  } else {
    init = init_snn_params(rc.model, rc.train.seed);
    if (teacher) init.merge(init_spad_params(rc.model, teacher->cfg, rc.train.seed));
  }
  const fs::path dir = out_dir(rc);
  write_snapshot(rc, kv);

  TrainSetup setup{mode, rc.model, rc.train, rc.spad, teacher ? &*teacher : nullptr};
  std::ofstream metrics(dir / "metrics.tsv", std::ios::trunc);
  if (!metrics) throw ConfigError("paths.out: cannot write metrics.tsv");
  TrainResult res = train_loop(setup, split.train, init, &metrics);
  const ModelKind kind = mode == TrainMode::teacher ? ModelKind::ann : ModelKind::snn;
  const std::string ckpt = (dir / "model.ckpt").string();
  save_checkpoint(ckpt, make_checkpoint(kind, rc.model, res.params, &res.adam));
  out << "checkpoint: " << ckpt << '\n';
  if (!res.metrics.empty()) out << "final_loss: " << fmt_double(res.metrics.back().total) << '\n';
  if (split.val.size() >= 2) {
    const EvalResult ev = evaluate(split.val, rc.model, res.params, kind, rc.train.seq_len, rc.train.eval_windows);
    out << "val_ce: " << fmt_double(ev.ce) << '\n';
  }
  return 0;
}

int cmd_generate(const RunConfig& rc, const KeyValues& kv, std::ostream& out) {
  const LoadedModel m = load_model("paths.checkpoint", checkpoint_in(rc));
  const std::vector<std::size_t> prompt = encode_bytes(rc.generate.prompt);
  if (prompt.empty()) throw ConfigError("generate.prompt: must be non-empty");
  Rng rng(rc.generate.seed);
  const GenerateResult g = generate(prompt, rc.generate.n_new, rc.generate.temperature, rng, m.cfg, m.params, m.kind);
  const std::string text =
      decode_bytes(std::vector<std::size_t>(g.tokens.begin() + static_cast<std::ptrdiff_t>(prompt.size()), g.tokens.end()));
  write_snapshot(rc, kv);
  write_file((out_dir(rc) / "generation.txt").string(), text);
  out << text << '\n';
  return 0;
}

int cmd_eval(const RunConfig& rc, const KeyValues& kv, std::ostream& out) {
  const LoadedModel m = load_model("paths.checkpoint", checkpoint_in(rc));
  const CorpusSplit split = load_corpus(rc);
  const auto& tokens = split.val.size() >= 2 ? split.val : split.train;
  const EvalResult ev = evaluate(tokens, m.cfg, m.params, m.kind, rc.train.seq_len, rc.train.eval_windows);
  std::ostringstream os;
  os << "val_ce: " << fmt_double(ev.ce) << '\n' << "val_tokens: " << ev.tokens << '\n';
  if (m.kind == ModelKind::snn) {
    const auto windows = make_windows(tokens, std::min(rc.train.seq_len, m.cfg.max_seq_len));
    const TraceBundle tr = snn_forward(windows.front().inputs, m.cfg, m.params).traces;
    const auto rates = measure_block_rates(tr);
    for (std::size_t l = 0; l < rates.size(); ++l) {
      os << "layer." << l << ".sfsa.firing_rate: " << fmt_double(rates[l].sfsa) << '\n';
      os << "layer." << l << ".sffn.firing_rate: " << fmt_double(rates[l].sffn) << '\n';
    }
  }
  write_snapshot(rc, kv);
  write_file((out_dir(rc) / "eval.txt").string(), os.str());
  out << os.str();
  return 0;
}

int cmd_profile(const RunConfig& rc, const KeyValues& kv, std::ostream& out) {
  const LoadedModel m = load_model("paths.checkpoint", checkpoint_in(rc));
  if (m.kind != ModelKind::snn) throw ConfigError("paths.checkpoint: profile needs a spiking model");
  const CorpusSplit split = load_corpus(rc);
  const auto& tokens = split.val.size() >= 2 ? split.val : split.train;
  const auto windows = make_windows(tokens, std::min(rc.train.seq_len, m.cfg.max_seq_len));
  const TraceBundle tr = snn_forward(windows.front().inputs, m.cfg, m.params).traces;
  const EnergyReport r = energy_report(m.cfg, tr, rc.energy);
  write_snapshot(rc, kv);
  write_file((out_dir(rc) / "energy_report.txt").string(), format_report_kv(r));
  out << format_report_table(r);
  return 0;
}

int cmd_selftest(std::ostream& out) {
  std::size_t failed = 0;
  const auto results = run_selftest();
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.module << '/' << r.name;
    if (!r.detail.empty()) out << "  (" << one_line(r.detail) << ')';
    out << '\n';
    failed += r.passed ? 0 : 1;
  }
  out << (results.size() - failed) << '/' << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"bispik: binary spiking causal language model with spike-aware distillation"};
  app.require_subcommand(1);
  Flags f;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-teacher", "train the dense teacher"},
      {"distill", "train a spiking student against a frozen teacher"},
      {"train", "train a spiking student on hard targets only"},
      {"generate", "continue a prompt with a trained model"},
      {"profile", "measure firing rates and write the energy report"},
      {"eval", "validation cross-entropy and firing rates"},
      {"selftest", "run the built-in invariant checks"}};
  for (const auto& [name, desc] : commands) {
    CLI::App* sc = app.add_subcommand(name, desc);
    if (name == "selftest") continue;
    sc->add_option("-c,--config", f.config, "config file (key = value under [section] headers)");
    sc->add_option("--set", f.sets, "override, section.key=value (repeatable)");
    sc->add_option("--out", f.out, "output directory (paths.out)");
    sc->add_option("--corpus", f.corpus, "text corpus (paths.corpus)");
    if (name == "distill") sc->add_option("--teacher", f.teacher, "teacher checkpoint (paths.teacher)");
    if (name == "generate" || name == "profile" || name == "eval") {
      sc->add_option("--checkpoint", f.checkpoint, "model checkpoint (paths.checkpoint)");
    }
    if (name == "train-teacher" || name == "distill" || name == "train") {
      sc->add_option("--steps", f.steps, "optimizer steps (train.total_steps)");
      sc->add_option("--seed", f.seed, "seed (train.seed)");
    }
    if (name == "generate") {
      sc->add_option("--prompt", f.prompt, "prompt text (generate.prompt)");
      sc->add_option("--n-new", f.n_new, "tokens to generate (generate.n_new)");
      sc->add_option("--temperature", f.temperature, "0 = greedy (generate.temperature)");
      sc->add_option("--seed", f.seed, "sampling seed (generate.seed)");
    }
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    if (cmd == "selftest") return cmd_selftest(out);
    KeyValues kv;
    if (!f.config.empty()) {
      require_file("--config", f.config);
      kv = parse_ini(read_file(f.config));
    }
    auto put = [&](const char* key, const std::string& v) { kv[key] = v; };
    if (!f.corpus.empty()) put("paths.corpus", f.corpus);
    if (!f.out.empty()) put("paths.out", f.out);
    if (!f.checkpoint.empty()) put("paths.checkpoint", f.checkpoint);
    if (!f.teacher.empty()) put("paths.teacher", f.teacher);
    if (!f.prompt.empty()) put("generate.prompt", f.prompt);
    if (f.steps) put("train.total_steps", std::to_string(*f.steps));
    if (f.n_new) put("generate.n_new", std::to_string(*f.n_new));
    if (f.temperature) put("generate.temperature", fmt_double(*f.temperature));
    if (f.seed) put(cmd == "generate" ? "generate.seed" : "train.seed", std::to_string(*f.seed));
    for (const auto& s : f.sets) {
      auto [k, v] = parse_override(s);
      kv[k] = v;
    }
    const RunConfig rc = resolve_config(cmd, kv);
    KeyValues resolved = to_kv(rc);
    if (cmd == "generate" || cmd == "eval" || cmd == "profile") {
      // the model comes from the checkpoint
      std::erase_if(resolved, [](const auto& e) { return e.first.rfind("model.", 0) == 0 || e.first.rfind("spad.", 0) == 0; });
    }
    if (cmd == "train-teacher") return cmd_train(rc, resolved, TrainMode::teacher, out);
    if (cmd == "train") return cmd_train(rc, resolved, TrainMode::hard, out);
    if (cmd == "distill") return cmd_train(rc, resolved, TrainMode::spad, out);
    if (cmd == "generate") return cmd_generate(rc, resolved, out);
    if (cmd == "eval") return cmd_eval(rc, resolved, out);
    return cmd_profile(rc, resolved, out);
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
}

}  // namespace bispik
