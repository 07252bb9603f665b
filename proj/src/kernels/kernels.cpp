#include "livecast/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace livecast::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(LIVECAST_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("LIVECAST_ISA"); env != nullptr && std::string(env) == "scalar") {
    return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<int>& selected() {
  static std::atomic<int> isa{static_cast<int>(detect())};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::kScalar || cpu_has_avx2(); }

Isa active_isa() { return static_cast<Isa>(selected().load(std::memory_order_relaxed)); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("kernel variant not available: " + std::string(to_string(isa)));
  selected().store(static_cast<int>(isa), std::memory_order_relaxed);
}

void or_words(std::span<std::uint64_t> dst, std::span<const std::uint64_t> src) {
  if (dst.size() != src.size()) throw std::invalid_argument("or_words: size mismatch");
#if defined(LIVECAST_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::or_words(dst.data(), src.data(), dst.size());
#endif
  scalar::or_words(dst.data(), src.data(), dst.size());
}

std::uint64_t popcount_words(std::span<const std::uint64_t> words) {
#if defined(LIVECAST_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::popcount_words(words.data(), words.size());
#endif
  return scalar::popcount_words(words.data(), words.size());
}

void squared_distances(double px, double py, std::span<const double> xs, std::span<const double> ys,
                       std::span<double> out) {
  if (xs.size() != ys.size() || out.size() != xs.size()) {
    throw std::invalid_argument("squared_distances: size mismatch");
  }
#if defined(LIVECAST_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::squared_distances(px, py, xs.data(), ys.data(), out.data(), xs.size());
#endif
  scalar::squared_distances(px, py, xs.data(), ys.data(), out.data(), xs.size());
}

std::size_t argmin_distance(double px, double py, std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("argmin_distance: size mismatch");
#if defined(LIVECAST_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::argmin_distance(px, py, xs.data(), ys.data(), xs.size());
#endif
  return scalar::argmin_distance(px, py, xs.data(), ys.data(), xs.size());
}

}  // namespace livecast::kernels
