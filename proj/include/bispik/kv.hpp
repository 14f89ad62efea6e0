#pragma once

// Typed parsing of `key = value` strings; failures name the key.

#include <cstdint>
#include <map>
#include <string>

namespace bispik {

using KeyValues = std::map<std::string, std::string>;

std::string fmt_double(double v);  // round-trips exactly (%.17g)
std::size_t parse_size(const std::string& key, const std::string& v);
std::uint64_t parse_u64(const std::string& key, const std::string& v);
double parse_double(const std::string& key, const std::string& v);
bool parse_bool(const std::string& key, const std::string& v);

}  // namespace bispik
