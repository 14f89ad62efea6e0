#include "bispik/numerics.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <sstream>

namespace bispik {

namespace {

thread_local std::uint64_t g_macs = 0;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  ConstMap am(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  ConstMap bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  MutMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  cm.noalias() = am * bm;
  g_macs += static_cast<std::uint64_t>(m) * k * n;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0]) throw DimensionError("slice0: index out of range");
  Shape inner(shape_.begin() + 1, shape_.end());
  if (inner.empty()) inner = {1};
  const std::size_t n = shape_numel(inner);
  return Tensor(inner, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                           data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

void Tensor::set_slice0(std::size_t i, const Tensor& part) {
  const std::size_t n = shape_.empty() ? 0 : data_.size() / shape_[0];
  if (shape_.empty() || i >= shape_[0] || part.size() != n) {
    throw DimensionError("set_slice0: " + shape_str(part.shape()) + " into " + shape_str(shape_));
  }
  std::copy(part.vec().begin(), part.vec().end(), data_.begin() + static_cast<std::ptrdiff_t>(i * n));
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw EvaluationError(std::string(what) + ": non-finite value");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 2) {
    if (a.dim(1) != b.dim(0)) {
      throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
    }
    Tensor c({a.dim(0), b.dim(1)});
    gemm(a.data().data(), b.data().data(), c.data().data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
  }
  if (a.rank() == 3 && (b.rank() == 3 || b.rank() == 2)) {
    const bool shared = b.rank() == 2;
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t kb = shared ? b.dim(0) : b.dim(1);
    const std::size_t n = shared ? b.dim(1) : b.dim(2);
    if (k != kb || (!shared && b.dim(0) != batch)) {
      throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
    }
    Tensor c({batch, m, n});
    for (std::size_t i = 0; i < batch; ++i) {
      const double* bp = shared ? b.data().data() : b.data().data() + i * k * n;
      gemm(a.data().data() + i * m * k, bp, c.data().data() + i * m * n, m, k, n);
    }
    return c;
  }
  throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(0));
  Tensor c({a.dim(0), b.dim(0)});
  MutMap(c.data().data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), n, k).transpose();
  g_macs += static_cast<std::uint64_t>(m * k * n);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
  }
  const auto k = static_cast<Eigen::Index>(a.dim(0));
  const auto m = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor c({a.dim(1), b.dim(1)});
  MutMap(c.data().data(), m, n).noalias() =
      ConstMap(a.data().data(), k, m).transpose() * ConstMap(b.data().data(), k, n);
  g_macs += static_cast<std::uint64_t>(m * k * n);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: rank " + std::to_string(a.rank()));
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t r = 0; r < a.dim(0); ++r)
    for (std::size_t c = 0; c < a.dim(1); ++c) t(c, r) = a(r, c);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (auto& v : c.vec()) v *= s;
  return c;
}

MacCounter::MacCounter() : start_(g_macs) {}
MacCounter::~MacCounter() = default;
std::uint64_t MacCounter::count() const { return g_macs - start_; }

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Tensor seeded_normal(Rng& rng, Shape shape, double std) {
  if (std < 0.0) throw ValidationError("seeded_normal: std must be >= 0");
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = std * rng.normal();
  if (std == 0.0) {
    for (auto& v : t.vec()) v = 0.0;  // avoid -0.0
  }
  return t;
}

Tensor seeded_uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_grad: eps must be > 0");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("finite_diff_grad: non-finite function value at coordinate " +
                            std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace bispik
