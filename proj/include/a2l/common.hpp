#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace a2l {

using LabelId = std::uint32_t;
using Vector = std::vector<double>;

enum class ErrorCode {
  MalformedLine,
  EmptyCorpus,
  InvalidConfig,
  KBestTooShort,
  MissingAttention,
  DegenerateRow,
  ZeroVector,
  DegenerateDegree,
  AlreadyLabeled,
  LengthMismatch,
  ParseError,
  ValidationError,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Platform-independent random source. std::mt19937_64 output is fully
// specified by the standard; the std distributions are not, so the helpers
// here turn raw draws into doubles/ints themselves.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::size_t below(std::size_t n);      // [0, n), n > 0
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::uint64_t fnv1a(std::string_view text);

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  static Matrix identity(std::size_t n);
  Matrix transposed() const;
  double frobenius_norm() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double distance2(std::span<const double> a, std::span<const double> b);

// Numerically stable softmax / log-softmax of a logit vector.
Vector softmax(std::span<const double> logits);
Vector log_softmax(std::span<const double> logits);

// Index of the maximum; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Shortest round-trip decimal text for a double.
std::string format_double(double value);
double parse_double(std::string_view text);

// Fixed-precision text for CSV output.
std::string format_fixed(double value, int precision = 6);

}  // namespace a2l
