#include "mplstm/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mplstm {

namespace {

// Largest double below 1 and smallest positive normal double. Saturated
// activations are pinned here so the open-interval ranges hold exactly.
constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
constexpr double kAboveZero = std::numeric_limits<double>::min();

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

void Vec::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Mat::Mat(std::size_t rows, std::size_t cols, std::initializer_list<double> row_major)
    : rows_(rows), cols_(cols), data_(row_major) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Mat initializer has " + std::to_string(data_.size()) +
                     " entries, expected " + std::to_string(rows * cols));
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Mat::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be >= 1");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

std::string shape_string(const Mat& m) {
  return "Mat(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

std::string shape_string(const Vec& v) { return "Vec(" + std::to_string(v.size()) + ")"; }

Vec affine(const Mat& w, const Vec& x, const Vec& b) {
  if (w.cols() != x.size()) {
    throw ShapeError("affine: W " + shape_string(w) + " cannot multiply x " + shape_string(x));
  }
  if (b.size() != w.rows()) {
    throw ShapeError("affine: bias b " + shape_string(b) + " does not match W " + shape_string(w));
  }
  Vec out = b;
  matvec_acc(w, x.span(), out.span());
  return out;
}

void matvec_acc(const Mat& w, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = w.cols();
  const double* row = w.data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += cols) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

void matvec_t_acc(const Mat& w, std::span<const double> y, std::span<double> out) {
  const std::size_t cols = w.cols();
  const double* row = w.data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += cols) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * yr;
  }
}

void outer_acc(std::span<const double> a, std::span<const double> b, Mat& w) {
  const std::size_t cols = w.cols();
  double* row = w.data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += cols) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ar * b[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kAboveZero, kBelowOne);
}

Vec sigmoid(const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Vec tanh_act(const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(std::tanh(x[i]), -kBelowOne, kBelowOne);
  }
  return out;
}

Vec softmax(const Vec& x) {
  if (x.empty()) throw ShapeError("softmax: input " + shape_string(x) + " is empty");
  const double mx = *std::max_element(x.begin(), x.end());
  Vec out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

Mat init_glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("init_glorot: shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " has a zero extent");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat w(rows, cols);
  for (auto& v : w.span()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

}  // namespace mplstm
