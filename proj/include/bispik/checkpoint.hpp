#pragma once

// Binary checkpoint container, all integers little-endian:
//   "BSPKCKPT" | u32 version
//   u32 n_meta,    then per entry: u32 len, key bytes, u32 len, value bytes
//   u32 n_tensors, then per tensor: u32 len, name bytes, u32 rank,
//                                  rank x u64 dims, numel x f64 (IEEE-754 bits)
// Entries are written in sorted key/name order, so equal contents give equal
// bytes.

#include <string>
#include <string_view>

#include "bispik/kv.hpp"
#include "bispik/model.hpp"

namespace bispik {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  KeyValues meta;
  Parameters tensors;

  bool operator==(const Checkpoint& o) const { return meta == o.meta && tensors == o.tensors; }
};

std::string serialize_checkpoint(const Checkpoint& ck);
// Throws FormatError on bad magic, unsupported version or truncation.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace bispik
