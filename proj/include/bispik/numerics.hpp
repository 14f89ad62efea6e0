#pragma once

// Dense row-major tensors of doubles, a platform-independent PRNG and the
// central-difference gradient oracle used by the test suites.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bispik/errors.hpp"

namespace bispik {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor identity(std::size_t n);
  // 2-D tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D element access (row-major).
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  // Same data, new shape. Element count must match.
  Tensor reshaped(Shape shape) const;
  // Slice of the leading dimension: index i of a [n, ...] tensor.
  Tensor slice0(std::size_t i) const;
  // Writes `part` into leading index i.
  void set_slice0(std::size_t i, const Tensor& part);

  double sum() const;
  double max_abs() const;
  bool all_finite() const;

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws EvaluationError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

// Matrix product of [m,k] x [k,n]. Rank-3 inputs are batched over the leading
// dimension ([b,m,k] x [b,k,n], or [b,m,k] x [k,n] with a shared right side).
Tensor matmul(const Tensor& a, const Tensor& b);
// a x b^T for 2-D inputs ([m,k] x [n,k] -> [m,n]).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T x b for 2-D inputs ([k,m] x [k,n] -> [m,n]).
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Multiply-accumulate counter fed by every matmul executed on the current
// thread while at least one MacCounter is alive. Scopes nest; each sees the
// MACs issued during its own lifetime.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const;

 private:
  std::uint64_t start_;
};

// splitmix64: state += 0x9E3779B97F4A7C15; z = state;
// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
// return z ^ (z >> 31). Fully specified, so streams match on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller on two uniforms (no cached spare).
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

Tensor seeded_normal(Rng& rng, Shape shape, double std);
Tensor seeded_uniform(Rng& rng, Shape shape, double lo, double hi);

// Central-difference gradient of a scalar function:
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

}  // namespace bispik
