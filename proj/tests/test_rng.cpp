#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lrcl/rng.hpp"

using lrcl::Rng;

TEST_CASE("same seed and stream reproduce the sequence exactly") {
  Rng a(42, "weights");
  Rng b(42, "weights");
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42, "weights");
  Rng d(42, "weights");
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(c.uniform() == d.uniform());
    REQUIRE(c.normal() == d.normal());
  }
}

TEST_CASE("different seeds or streams decorrelate") {
  Rng a(1, "weights");
  Rng b(2, "weights");
  Rng c(1, "noise");
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next_u64();
    same_ab += (x == b.next_u64());
    same_ac += (x == c.next_u64());
  }
  REQUIRE(same_ab == 0);
  REQUIRE(same_ac == 0);
}

TEST_CASE("uniform draws live in the half-open unit interval") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    REQUIRE(u >= -2.0);
    REQUIRE(u < 3.0);
  }
}

TEST_CASE("uniform_int covers its range and nothing else") {
  Rng rng(9);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const int k = rng.uniform_int(5);
    REQUIRE(k >= 0);
    REQUIRE(k < 5);
    hist[k] += 1;
  }
  // Each bucket should get about 10000 hits; 4 sigma is about 380.
  for (int k = 0; k < 5; ++k) {
    REQUIRE(hist[k] > 9000);
    REQUIRE(hist[k] < 11000);
  }
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.02);
  REQUIRE(std::abs(var - 1.0) < 0.03);

  Rng rng2(123);
  double shifted = 0.0;
  for (int i = 0; i < n; ++i) shifted += rng2.normal(5.0, 0.1);
  REQUIRE(std::abs(shifted / n - 5.0) < 0.01);
}

TEST_CASE("normal_matrix fills in row-major draw order") {
  Rng draws(77, "weights");
  Rng filler(77, "weights");
  const Eigen::MatrixXd m = filler.normal_matrix(3, 4, 2.0);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) REQUIRE(m(r, c) == 2.0 * draws.normal());
}

TEST_CASE("normal_matrix default scale is unit") {
  Rng a(5, "x");
  Rng b(5, "x");
  const Eigen::MatrixXd ma = a.normal_matrix(2, 2);
  const Eigen::MatrixXd mb = b.normal_matrix(2, 2, 1.0);
  REQUIRE((ma - mb).norm() == 0.0);
}
