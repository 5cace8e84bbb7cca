#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mplstm {

/// Raised when operand shapes disagree. The message names both operands.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Dense real vector (float64).
class Vec {
public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(double v);

  friend bool operator==(const Vec&, const Vec&) = default;

private:
  std::vector<double> data_;
};

/// Dense real matrix, row-major (float64).
class Mat {
public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::initializer_list<double> row_major);

  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  void fill(double v);

  friend bool operator==(const Mat&, const Mat&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// xoshiro256** generator seeded through splitmix64.
///
/// The stream is defined by 64-bit integer arithmetic only, so a seed yields
/// the same sequence on every platform. uniform() maps the top 53 bits of one
/// raw draw to [0, 1). normal() uses Box-Muller over two uniform draws and
/// discards the second variate so that every call consumes exactly two draws.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  double normal();
  /// Uniform integer in [0, bound) by rejection; bound must be >= 1.
  std::uint64_t below(std::uint64_t bound);

  friend bool operator==(const Rng&, const Rng&) = default;

private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

// -- linear algebra -------------------------------------------------------

/// W x + b.
Vec affine(const Mat& w, const Vec& x, const Vec& b);

/// out += W x
void matvec_acc(const Mat& w, std::span<const double> x, std::span<double> out);
/// out += W^T y
void matvec_t_acc(const Mat& w, std::span<const double> y, std::span<double> out);
/// W += a b^T
void outer_acc(std::span<const double> a, std::span<const double> b, Mat& w);

double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// -- activations ----------------------------------------------------------

double sigmoid(double x);
Vec sigmoid(const Vec& x);
Vec tanh_act(const Vec& x);
/// Max-subtracted softmax; x must be non-empty.
Vec softmax(const Vec& x);

// -- initialization -------------------------------------------------------

/// Glorot-uniform: entries i.i.d. U[-L, L] with L = sqrt(6 / (rows + cols)).
Mat init_glorot(Rng& rng, std::size_t rows, std::size_t cols);

std::string shape_string(const Mat& m);
std::string shape_string(const Vec& v);

}  // namespace mplstm
