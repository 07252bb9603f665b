#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livecast/types.hpp"

namespace livecast {

/// Filter geometry plus the system-wide hash seeds. Filters built with
/// different parameters cannot be combined.
struct BloomParams {
  std::uint32_t m = 2048;
  std::uint32_t k = 5;
  std::uint64_t seed1 = 0x5eed0001ULL;
  std::uint64_t seed2 = 0x5eed0002ULL;

  void validate() const;
  friend bool operator==(const BloomParams&, const BloomParams&) = default;
};

/// The k bit positions of `id`: (h1 + i*h2) mod m for i in [0, k).
std::vector<std::uint32_t> bloom_positions(const BloomParams& params, StreamId id);

class BloomFilter {
 public:
  explicit BloomFilter(BloomParams params = {});

  const BloomParams& params() const { return params_; }
  std::span<const std::uint64_t> words() const { return words_; }

  void insert(StreamId id);
  [[nodiscard]] BloomFilter with(StreamId id) const;
  bool contains(StreamId id) const;
  bool test_bit(std::uint32_t index) const;

  std::uint64_t popcount() const;
  bool empty() const;

  /// In-place OR. Throws std::invalid_argument on parameter mismatch.
  void merge(const BloomFilter& other);

  /// "<m> <k> <hex>": bit i lives in byte i/8, most significant bit first.
  std::string to_wire() const;
  /// Seeds are not on the wire; they come from system configuration.
  static BloomFilter from_wire(std::string_view text, std::uint64_t seed1, std::uint64_t seed2);

  friend bool operator==(const BloomFilter&, const BloomFilter&) = default;

 private:
  BloomParams params_;
  std::vector<std::uint64_t> words_;
};

/// Bitwise OR of two filters with identical parameters.
BloomFilter bloom_union(const BloomFilter& a, const BloomFilter& b);

/// (1 - e^(-k n / m))^k
double estimated_fpr(std::uint64_t m, std::uint64_t k, std::uint64_t n);

}  // namespace livecast
