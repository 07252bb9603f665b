#include "livecast/bloom.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "livecast/kernels.hpp"
#include "livecast/rng.hpp"

namespace livecast {

void BloomParams::validate() const {
  if (m == 0) throw std::invalid_argument("bloom m must be positive");
  if (k == 0) throw std::invalid_argument("bloom k must be positive");
}

std::vector<std::uint32_t> bloom_positions(const BloomParams& params, StreamId id) {
  const std::uint64_t h1 = mix64(id.value ^ params.seed1);
  // Odd step: with power-of-two m the k probes never collapse onto one bit.
  const std::uint64_t h2 = mix64(id.value ^ params.seed2) | 1u;
  std::vector<std::uint32_t> out(params.k);
  for (std::uint32_t i = 0; i < params.k; ++i) {
    out[i] = static_cast<std::uint32_t>((h1 + static_cast<std::uint64_t>(i) * h2) % params.m);
  }
  return out;
}

BloomFilter::BloomFilter(BloomParams params) : params_(params) {
  params_.validate();
  words_.assign((params_.m + 63) / 64, 0);
}

void BloomFilter::insert(StreamId id) {
  for (const std::uint32_t bit : bloom_positions(params_, id)) words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
}

BloomFilter BloomFilter::with(StreamId id) const {
  BloomFilter copy = *this;
  copy.insert(id);
  return copy;
}

bool BloomFilter::contains(StreamId id) const {
  for (const std::uint32_t bit : bloom_positions(params_, id)) {
    if (!test_bit(bit)) return false;
  }
  return true;
}

bool BloomFilter::test_bit(std::uint32_t index) const {
  return index < params_.m && ((words_[index / 64] >> (index % 64)) & 1u) != 0;
}

std::uint64_t BloomFilter::popcount() const { return kernels::popcount_words(words_); }

bool BloomFilter::empty() const {
  for (const auto w : words_) {
    if (w != 0) return false;
  }
  return true;
}

void BloomFilter::merge(const BloomFilter& other) {
  if (!(params_ == other.params_)) throw std::invalid_argument("bloom union: parameter mismatch");
  kernels::or_words(words_, other.words_);
}

std::string BloomFilter::to_wire() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  const std::uint32_t bytes = (params_.m + 7) / 8;
  hex.reserve(bytes * 2);
  for (std::uint32_t byte = 0; byte < bytes; ++byte) {
    unsigned value = 0;
    for (unsigned bit = 0; bit < 8; ++bit) {
      if (test_bit(byte * 8 + bit)) value |= 0x80u >> bit;
    }
    hex.push_back(kHex[value >> 4]);
    hex.push_back(kHex[value & 0xf]);
  }
  return std::to_string(params_.m) + " " + std::to_string(params_.k) + " " + hex;
}

BloomFilter BloomFilter::from_wire(std::string_view text, std::uint64_t seed1, std::uint64_t seed2) {
  std::istringstream in{std::string(text)};
  BloomParams params;
  std::string hex;
  if (!(in >> params.m >> params.k >> hex)) throw std::invalid_argument("bloom wire: expected '<m> <k> <hex>'");
  params.seed1 = seed1;
  params.seed2 = seed2;
  BloomFilter filter(params);
  if (hex.size() != static_cast<std::size_t>((params.m + 7) / 8) * 2) {
    throw std::invalid_argument("bloom wire: hex length does not match m");
  }
  const auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw std::invalid_argument("bloom wire: hex must be lowercase");
  };
  for (std::size_t byte = 0; byte * 2 < hex.size(); ++byte) {
    const unsigned value = nibble(hex[2 * byte]) << 4 | nibble(hex[2 * byte + 1]);
    for (unsigned bit = 0; bit < 8; ++bit) {
      if ((value & (0x80u >> bit)) == 0) continue;
      const std::size_t index = byte * 8 + bit;
      if (index >= params.m) throw std::invalid_argument("bloom wire: padding bits set");
      filter.words_[index / 64] |= std::uint64_t{1} << (index % 64);
    }
  }
  return filter;
}

BloomFilter bloom_union(const BloomFilter& a, const BloomFilter& b) {
  BloomFilter out = a;
  out.merge(b);
  return out;
}

double estimated_fpr(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  if (m == 0 || k == 0) throw std::invalid_argument("estimated_fpr: m and k must be positive");
  const double kd = static_cast<double>(k);
  return std::pow(1.0 - std::exp(-kd * static_cast<double>(n) / static_cast<double>(m)), kd);
}

}  // namespace livecast
