#include <catch2/catch_amalgamated.hpp>

#include "dictlab/rng.hpp"

using dictlab::Rng;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("neighboring seeds differ") {
  Rng a(42), b(43);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  REQUIRE(same == 0);
}

TEST_CASE("substreams are independent of draw order") {
  Rng direct = Rng::substream(7, 3);
  Rng other = Rng::substream(7, 2);
  other.next_u64();  // consuming a different substream must not matter
  Rng again = Rng::substream(7, 3);
  for (int i = 0; i < 100; ++i) {
    const auto expected = direct.next_u64();
    REQUIRE(again.next_u64() == expected);
  }
}

TEST_CASE("uniform01 lies in [0,1) and fills the unit interval") {
  Rng rng(1);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 1e-3);
  REQUIRE(hi > 1.0 - 1e-3);
}

TEST_CASE("normal deviates have the right first two moments") {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  // 3 standard errors: se(mean) = 1/sqrt(n), se(var) ~ sqrt(2/n)
  REQUIRE(std::abs(mean) < 3.0 / std::sqrt(double(n)));
  REQUIRE(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_below is unbiased across residue classes") {
  Rng rng(3);
  const std::uint64_t n = 7;
  std::vector<int> counts(n, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[rng.uniform_below(n)];
  for (auto c : counts)
    REQUIRE(std::abs(c - draws / double(n)) < 5.0 * std::sqrt(draws / double(n)));
}
