#include "bispik/kv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "bispik/errors.hpp"

namespace bispik {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-' || v[0] == '+') throw std::invalid_argument("bad");
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace bispik
