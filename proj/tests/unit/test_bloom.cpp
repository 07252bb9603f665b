#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "livecast/bloom.hpp"
#include "livecast/rng.hpp"

using namespace livecast;

namespace {

StreamId random_id(Rng& rng) { return StreamId{rng.next()}; }

}  // namespace

TEST_CASE("insert and contains") {
  BloomFilter f;
  CHECK(f.empty());
  CHECK_FALSE(f.contains(StreamId{42}));
  f.insert(StreamId{42});
  CHECK(f.contains(StreamId{42}));
  const BloomFilter once = f;
  f.insert(StreamId{42});
  CHECK(f == once);
}

TEST_CASE("bit positions follow double hashing") {
  const BloomParams p{.m = 1000, .k = 7};
  const StreamId id{123456789};
  const std::uint64_t h1 = mix64(id.value ^ p.seed1);
  const std::uint64_t h2 = mix64(id.value ^ p.seed2) | 1u;
  const auto pos = bloom_positions(p, id);
  REQUIRE(pos.size() == 7);
  for (std::uint32_t i = 0; i < 7; ++i) CHECK(pos[i] == (h1 + i * h2) % 1000);
}

TEST_CASE("popcount bounded by k per insert") {
  Rng rng(1);
  BloomFilter f;
  for (int n = 1; n <= 300; ++n) {
    f.insert(random_id(rng));
    CHECK(f.popcount() <= static_cast<std::uint64_t>(5 * n));
    CHECK(f.popcount() <= 2048);
  }
}

TEST_CASE("no false negatives under random inserts and unions") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    BloomFilter a, b;
    std::vector<StreamId> ins;
    for (int i = 0; i < 60; ++i) {
      const auto id = random_id(rng);
      ins.push_back(id);
      (rng.below(2) ? a : b).insert(id);
    }
    const auto u = bloom_union(a, b);
    for (const auto& id : ins) CHECK(u.contains(id));
  }
}

TEST_CASE("union algebra") {
  Rng rng(3);
  BloomFilter a, b, c, empty;
  for (int i = 0; i < 40; ++i) {
    a.insert(random_id(rng));
    b.insert(random_id(rng));
    c.insert(random_id(rng));
  }
  CHECK(bloom_union(a, empty) == a);
  CHECK(bloom_union(a, a) == a);
  CHECK(bloom_union(a, b) == bloom_union(b, a));
  CHECK(bloom_union(bloom_union(a, b), c) == bloom_union(a, bloom_union(b, c)));
  for (std::size_t w = 0; w < a.words().size(); ++w)
    CHECK(bloom_union(a, b).words()[w] == (a.words()[w] | b.words()[w]));
}

TEST_CASE("union of mismatched filters is an error") {
  BloomFilter a(BloomParams{.m = 1024, .k = 4});
  BloomFilter b(BloomParams{.m = 2048, .k = 4});
  BloomFilter c(BloomParams{.m = 1024, .k = 4, .seed1 = 9});
  CHECK_THROWS_AS(bloom_union(a, b), std::invalid_argument);
  CHECK_THROWS_AS(a.merge(c), std::invalid_argument);
}

TEST_CASE("estimated false-positive rate") {
  CHECK(estimated_fpr(2048, 5, 0) == 0.0);
  const double expected = std::pow(1.0 - std::exp(-5.0 * 200.0 / 2048.0), 5.0);
  CHECK(estimated_fpr(2048, 5, 200) == doctest::Approx(expected));
  CHECK(estimated_fpr(2048, 5, 200) == doctest::Approx(0.0086).epsilon(0.01));
  CHECK(estimated_fpr(2048, 5, 100) <= estimated_fpr(2048, 5, 200));
  CHECK(estimated_fpr(2048, 5, 200) <= estimated_fpr(2048, 5, 400));
}

TEST_CASE("empirical false-positive rate near the formula") {
  Rng rng(4);
  BloomFilter f;
  std::set<std::uint64_t> members;
  while (members.size() < 200) {
    const auto id = random_id(rng);
    if (members.insert(id.value).second) f.insert(id);
  }
  int positives = 0;
  const int probes = 100000;
  for (int i = 0; i < probes;) {
    const auto id = random_id(rng);
    if (members.count(id.value)) continue;
    ++i;
    if (f.contains(id)) ++positives;
  }
  const double rate = static_cast<double>(positives) / probes;
  MESSAGE("fpr " << rate);
  CHECK(rate == doctest::Approx(0.0086).epsilon(0.002 / 0.0086));
}

TEST_CASE("wire form is m, k and MSB-first hex") {
  BloomFilter f(BloomParams{.m = 16, .k = 1});
  // Find ids whose single bit lands on 0 and on 9.
  Rng rng(5);
  bool got0 = false, got9 = false;
  while (!(got0 && got9)) {
    const auto id = random_id(rng);
    const auto pos = bloom_positions(f.params(), id)[0];
    if (pos == 0 && !got0) {
      f.insert(id);
      got0 = true;
    } else if (pos == 9 && !got9) {
      f.insert(id);
      got9 = true;
    }
  }
  CHECK(f.test_bit(0));
  CHECK(f.test_bit(9));
  CHECK(f.to_wire() == "16 1 8040");
  const auto back = BloomFilter::from_wire(f.to_wire(), f.params().seed1, f.params().seed2);
  CHECK(back == f);
}

TEST_CASE("malformed wire text is rejected") {
  CHECK_THROWS(BloomFilter::from_wire("16 1 zz", 1, 2));
  CHECK_THROWS(BloomFilter::from_wire("16", 1, 2));
  CHECK_THROWS(BloomFilter::from_wire("16 1 80", 1, 2));
}

TEST_CASE("parameters are validated") {
  CHECK_THROWS(BloomParams{.m = 0}.validate());
  CHECK_THROWS(BloomParams{.k = 0}.validate());
  CHECK_NOTHROW(BloomParams{}.validate());
}
