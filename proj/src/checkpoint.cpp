#include "bispik/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bispik/errors.hpp"

namespace bispik {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'P', 'K', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put_str(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double x : t.vec()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic, "magic") != std::string_view(kMagic, sizeof kMagic)) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto n_meta = r.get<std::uint32_t>("meta count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str("meta key");
    ck.meta[k] = r.str("meta value");
  }
  const auto n_t = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < n_t; ++i) {
    std::string name = r.str("tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>("tensor dims"));
      if (d != 0 && n > bytes.size() / d) throw FormatError("checkpoint: tensor '" + name + "' too large");
      n *= d;
    }
    if (n > bytes.size() / 8) throw FormatError("checkpoint truncated while reading tensor data");
    std::vector<double> data(n);
    for (auto& x : data) x = std::bit_cast<double>(r.get<std::uint64_t>("tensor data"));
    ck.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, serialize_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace bispik
