#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include <srood/rng.hpp>

using srood::Rng;

TEST_CASE("rng repeats exactly for equal seeds") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());
  Rng c(43);
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 16; ++i) any_diff |= a2.next() != c.next();
  CHECK(any_diff);
}

TEST_CASE("rng streams and substreams are distinct") {
  Rng s1 = Rng::stream(7, Rng::kWeightInit);
  Rng s2 = Rng::stream(7, Rng::kBatch);
  CHECK(s1.next() != s2.next());

  Rng t1 = Rng::stream(7, Rng::kBatch, 0);
  Rng t2 = Rng::stream(7, Rng::kBatch, 1);
  CHECK(t1.next() != t2.next());

  Rng u1 = Rng::stream(7, Rng::kBatch, 5);
  Rng u2 = Rng::stream(7, Rng::kBatch, 5);
  for (int i = 0; i < 100; ++i) CHECK(u1.next() == u2.next());
}

TEST_CASE("uniform stays in [0,1) and uniform_pos in (0,1]") {
  Rng rng(1);
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double p = rng.uniform_pos();
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("below covers its range without bias") {
  Rng rng(3);
  CHECK(rng.below(1) == 0);

  const int n = 5;
  const int draws = 100000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = rng.below(n);
    REQUIRE(v < static_cast<std::uint64_t>(n));
    ++counts[v];
  }
  // Expected 20000 per bucket; +-0.01 absolute frequency is ~7 sigma.
  for (int c : counts) {
    CHECK(c > draws / n - draws / 100);
    CHECK(c < draws / n + draws / 100);
  }
}

TEST_CASE("below handles power-of-two and large ranges") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    CHECK(rng.below(8) < 8);
    CHECK(rng.below(1ull << 40) < (1ull << 40));
  }
}

TEST_CASE("normal has standard moments") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("bounded uniform maps into [lo, hi)") {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
}
