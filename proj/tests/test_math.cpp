#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "mplstm/math.hpp"

using namespace mplstm;

namespace {

std::uint64_t bits_of(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

TEST_CASE("affine examples") {
  CHECK(affine(Mat::identity(2), Vec{3, -1}, Vec{0, 0}) == Vec{3, -1});
  CHECK(affine(Mat(1, 2, 1.0), Vec{1, 1}, Vec{1}) == Vec{3});
  CHECK(affine(Mat(2, 2, {1, 2, 3, 4}), Vec{1, 1}, Vec{1, 1}) == Vec{4, 8});
}

TEST_CASE("affine rejects mismatched shapes and names both operands") {
  try {
    affine(Mat(2, 3), Vec(2), Vec(2));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("(2)") != std::string::npos);
  }
  CHECK_THROWS_AS(affine(Mat(2, 3), Vec(3), Vec(4)), ShapeError);
}

TEST_CASE("affine is linear in x for fixed W with zero bias") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat w = init_glorot(rng, 4, 3);
    Vec x(3), y(3), sum(3);
    for (std::size_t i = 0; i < 3; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      sum[i] = 2.0 * x[i] + y[i];
    }
    const Vec zero(4);
    const Vec ax = affine(w, x, zero);
    const Vec ay = affine(w, y, zero);
    const Vec as = affine(w, sum, zero);
    for (std::size_t r = 0; r < 4; ++r) CHECK(as[r] == doctest::Approx(2.0 * ax[r] + ay[r]).epsilon(1e-12));
  }
}

TEST_CASE("transposed and outer products") {
  const Mat w(2, 3, {1, 2, 3, 4, 5, 6});
  Vec out(3);
  const Vec y{1, -1};
  matvec_t_acc(w, y.span(), out.span());
  CHECK(out == Vec{-3, -3, -3});
  Mat acc(2, 2);
  const Vec a{1, 2}, b{3, 4};
  outer_acc(a.span(), b.span(), acc);
  CHECK(acc == Mat(2, 2, {3, 4, 6, 8}));
  CHECK(dot(a.span(), b.span()) == 11.0);
}

TEST_CASE("sigmoid examples") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double x = 10.0 * rng.normal();
    CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("tanh examples") {
  CHECK(tanh_act(Vec{0.0}) == Vec{0.0});
  CHECK(tanh_act(Vec{1.0})[0] == doctest::Approx(0.7615941559557649).epsilon(1e-15));
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double x = 5.0 * rng.normal();
    CHECK(tanh_act(Vec{x})[0] == -tanh_act(Vec{-x})[0]);
  }
}

TEST_CASE("activations stay strictly inside their ranges at extreme inputs") {
  const Vec x{-1e6, -800.0, -40.0, -1e-300, 0.0, 1e-300, 40.0, 800.0, 1e6};
  const Vec s = sigmoid(x);
  const Vec t = tanh_act(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
    CHECK(t[i] > -1.0);
    CHECK(t[i] < 1.0);
  }
}

TEST_CASE("softmax examples") {
  CHECK(softmax(Vec{0, 0}) == Vec{0.5, 0.5});
  for (double c : {-1e3, -2.5, 0.0, 7.0, 1e6}) {
    const Vec p = softmax(Vec{c, c, c, c});
    for (double v : p) CHECK(v == 0.25);
  }
  const Vec big = softmax(Vec{1000, 0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(big[1] < 1e-300);
  const Vec p = softmax(Vec{1, -1});
  CHECK(p[0] == doctest::Approx(0.8807970779778824).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.11920292202211756).epsilon(1e-14));
  CHECK_THROWS_AS(softmax(Vec{}), ShapeError);
}

TEST_CASE("softmax is shift invariant and normalized") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(6), shifted(6);
    const double c = 50.0 * rng.normal();
    for (std::size_t i = 0; i < 6; ++i) {
      x[i] = 3.0 * rng.normal();
      shifted[i] = x[i] + c;
    }
    const Vec a = softmax(x);
    const Vec b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
      sum += a[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("glorot init") {
  SUBCASE("bound") {
    Rng rng(1);
    const Mat w = init_glorot(rng, 3, 3);
    for (double v : w.span()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("determinism") {
    Rng a(42), b(42);
    CHECK(init_glorot(a, 2, 2) == init_glorot(b, 2, 2));
  }
  SUBCASE("mean near zero") {
    Rng rng(9);
    const Mat w = init_glorot(rng, 100, 100);
    double sum = 0.0;
    for (double v : w.span()) sum += v;
    CHECK(std::abs(sum / static_cast<double>(w.size())) < 0.01);
  }
  SUBCASE("zero extent") {
    Rng rng(1);
    CHECK_THROWS_AS(init_glorot(rng, 0, 3), ShapeError);
  }
}

TEST_CASE("rng matches the seed-0 golden file") {
  std::ifstream in(std::string(MPLSTM_TEST_DATA) + "/rng_seed0.golden");
  REQUIRE(in.good());
  Rng raw(0), uni(0);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string raw_hex, bits_hex;
    fields >> raw_hex >> bits_hex;
    CHECK(raw.next_u64() == std::stoull(raw_hex, nullptr, 16));
    CHECK(bits_of(uni.uniform()) == std::stoull(bits_hex, nullptr, 16));
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("rng determinism and ranges") {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    differs = differs || u != c.uniform();
  }
  CHECK(differs);
  Rng d(7);
  for (int i = 0; i < 1000; ++i) CHECK(d.below(5) < 5);
  CHECK_THROWS(d.below(0));
}

TEST_CASE("normal draws have unit variance") {
  Rng rng(8);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}
