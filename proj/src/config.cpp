#include "bispik/config.hpp"

#include <set>
#include <sstream>

#include "bispik/errors.hpp"

namespace bispik {

namespace {

const std::set<std::string> kSections{"model", "train", "spad", "energy", "paths", "generate"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Escapes so that values survive a round trip through one line.
std::string escape(const std::string& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const char c = v[i];
    if (c == ' ' && (i == 0 || i + 1 == v.size())) out += "\\s";
    else if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else out += c;
  }
  return out;
}

std::string unescape(const std::string& v, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != '\\') {
      out += v[i];
      continue;
    }
    if (++i == v.size()) throw ConfigError(key + ": dangling escape");
    if (v[i] == 'n') out += '\n';
    else if (v[i] == 't') out += '\t';
    else if (v[i] == 's') out += ' ';
    else if (v[i] == '\\') out += '\\';
    else throw ConfigError(key + ": unknown escape '\\" + std::string(1, v[i]) + "'");
  }
  return out;
}

void check_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
    throw ConfigError("'" + key + "': expected section.key");
  }
  if (!kSections.count(key.substr(0, dot))) throw ConfigError(key + ": unknown section '" + key.substr(0, dot) + "'");
}

}  // namespace

KeyValues parse_ini(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line, section;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "config line " + std::to_string(n);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!kSections.count(section)) throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a [section]");
    const std::string key = section + "." + trim(t.substr(0, eq));
    if (kv.count(key)) throw ConfigError(key + ": duplicate key (" + where + ")");
    kv[key] = unescape(trim(t.substr(eq + 1)), key);
  }
  return kv;
}

std::string format_ini(const KeyValues& kv) {
  std::ostringstream os;
  os << "# bispik-config v1\n";
  std::string section;
  for (const auto& [key, v] : kv) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << key.substr(dot + 1) << " = " << escape(v) << '\n';
  }
  return os.str();
}

std::pair<std::string, std::string> parse_override(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) throw ConfigError("--set '" + arg + "': expected section.key=value");
  std::string key = trim(arg.substr(0, eq));
  check_key(key);
  return {key, arg.substr(eq + 1)};
}

RunConfig resolve_config(const std::string& command, const KeyValues& kv) {
  RunConfig c;
  c.command = command;
  KeyValues model, train, spad;
  for (const auto& [key, v] : kv) {
    check_key(key);
    const std::string s = key.substr(0, key.find('.'));
    const std::string k = key.substr(s.size() + 1);
    if (s == "model") model[key] = v;
    else if (s == "train") train[key] = v;
    else if (s == "spad") spad[key] = v;
    else if (s == "energy") {
      if (k == "e_mac") c.energy.e_mac = parse_double(key, v);
      else if (k == "e_ac") c.energy.e_ac = parse_double(key, v);
      else throw ConfigError(key + ": unknown key");
    } else if (s == "paths") {
      if (k == "corpus") c.paths.corpus = v;
      else if (k == "teacher") c.paths.teacher = v;
      else if (k == "checkpoint") c.paths.checkpoint = v;
      else if (k == "out") c.paths.out = v;
      else throw ConfigError(key + ": unknown key");
    } else {
      if (k == "prompt") c.generate.prompt = v;
      else if (k == "n_new") c.generate.n_new = parse_size(key, v);
      else if (k == "temperature") c.generate.temperature = parse_double(key, v);
      else if (k == "seed") c.generate.seed = parse_u64(key, v);
      else throw ConfigError(key + ": unknown key");
    }
  }
  c.model = model_config_from_kv(model);
  c.model.validate();
  c.train = train_config_from_kv(train);
  c.spad = spad_config_from_kv(spad);
  c.energy.validate();
  if (!(c.generate.temperature >= 0.0)) throw ConfigError("generate.temperature must be >= 0");
  if (c.paths.out.empty()) throw ConfigError("paths.out must not be empty");
  return c;
}

KeyValues to_kv(const RunConfig& c) {
  KeyValues kv = to_kv(c.model);
  kv.merge(to_kv(c.train));
  kv.merge(to_kv(c.spad));
  kv["energy.e_mac"] = fmt_double(c.energy.e_mac);
  kv["energy.e_ac"] = fmt_double(c.energy.e_ac);
  kv["paths.corpus"] = c.paths.corpus;
  kv["paths.teacher"] = c.paths.teacher;
  kv["paths.checkpoint"] = c.paths.checkpoint;
  kv["paths.out"] = c.paths.out;
  kv["generate.prompt"] = c.generate.prompt;
  kv["generate.n_new"] = std::to_string(c.generate.n_new);
  kv["generate.temperature"] = fmt_double(c.generate.temperature);
  kv["generate.seed"] = std::to_string(c.generate.seed);
  return kv;
}

}  // namespace bispik
