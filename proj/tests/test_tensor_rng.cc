#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mdvsc/rng.h"
#include "mdvsc/tensor.h"

using namespace mdvsc;

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("substreams depend only on seed and index") {
  Rng parent(1);
  for (int i = 0; i < 10; ++i) parent.next_u64();
  Rng s1 = Rng::substream(1, 5);
  Rng s2 = Rng::substream(1, 5);
  Rng s3 = Rng::substream(1, 6);
  const uint64_t v = s1.next_u64();
  CHECK(v == s2.next_u64());
  CHECK(v != s3.next_u64());
}

TEST_CASE("uniform, below and normal draws have the expected moments") {
  Rng rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  std::vector<int> hist(5, 0);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    ++hist[rng.below(5)];
  }
  CHECK(std::abs(su / n - 0.5) < 3 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 3 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  for (int h : hist) CHECK(std::abs(h - n / 5) < 1000);
}

TEST_CASE("tensor slicing and concatenation") {
  Tensor<float> t(3, 2, 2, 2);
  for (size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(i);
  const Tensor<float> mid = t.slice(1, 1);
  CHECK(mid.n == 1);
  CHECK(mid.data.front() == 8.0f);
  const Tensor<float> joined = concat_images<float>({t.slice(0, 1), t.slice(1, 2)});
  CHECK(joined.data == t.data);
  CHECK_THROWS(concat_images<float>({t, Tensor<float>(1, 1, 2, 2)}));
  CHECK(t.at(2, 1, 1, 0) == 22.0f);
  CHECK(t.cast<double>().data[5] == 5.0);
}
