#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ddetect {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1 and prints what().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or argument violated the operation's contract.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training or solving failed to produce a usable result.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major matrix of doubles. Rows are samples throughout the library.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  /// Appends one row; the first row fixes the column count of an empty matrix.
  void push_row(std::span<const double> values);

  /// New matrix holding the given rows, in the given order.
  Matrix take_rows(std::span<const std::size_t> indices) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// 64-bit FNV-1a, used for data digests and seed derivation.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update(double value);
  void update(std::uint64_t value);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Derives an independent stream seed from a base seed and a stage name.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

double mean(std::span<const double> values);
/// Population (divide-by-n) standard deviation.
double stddev(std::span<const double> values);
double variance(std::span<const double> values);

}  // namespace ddetect
