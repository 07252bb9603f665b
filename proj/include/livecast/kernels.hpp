#pragma once

// Data-parallel inner loops shared by the protocol modules. Every kernel has a
// portable scalar reference and, where the build enables it, an AVX2 variant;
// the variant is picked once at runtime from CPUID. Results are bit-identical
// across variants (no FMA contraction, lane reductions resolve ties to the
// lowest index), which the equivalence tests check.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace livecast::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view to_string(Isa isa);

/// True when the variant was compiled in and the CPU supports it.
bool isa_available(Isa isa);

/// Variant used by the dispatching entry points. Honors LIVECAST_ISA=scalar.
Isa active_isa();

/// Overrides the dispatch choice (tests, benchmarking). Throws if unavailable.
void force_isa(Isa isa);

// dst |= src; sizes must match.
void or_words(std::span<std::uint64_t> dst, std::span<const std::uint64_t> src);
std::uint64_t popcount_words(std::span<const std::uint64_t> words);

// out[i] = (xs[i]-px)^2 + (ys[i]-py)^2
void squared_distances(double px, double py, std::span<const double> xs, std::span<const double> ys,
                       std::span<double> out);

/// Index of the first minimal squared distance; xs.size() when empty.
std::size_t argmin_distance(double px, double py, std::span<const double> xs, std::span<const double> ys);

namespace scalar {
void or_words(std::uint64_t* dst, const std::uint64_t* src, std::size_t n);
std::uint64_t popcount_words(const std::uint64_t* words, std::size_t n);
void squared_distances(double px, double py, const double* xs, const double* ys, double* out, std::size_t n);
std::size_t argmin_distance(double px, double py, const double* xs, const double* ys, std::size_t n);
}  // namespace scalar

#if defined(LIVECAST_HAVE_AVX2)
namespace avx2 {
void or_words(std::uint64_t* dst, const std::uint64_t* src, std::size_t n);
std::uint64_t popcount_words(const std::uint64_t* words, std::size_t n);
void squared_distances(double px, double py, const double* xs, const double* ys, double* out, std::size_t n);
std::size_t argmin_distance(double px, double py, const double* xs, const double* ys, std::size_t n);
}  // namespace avx2
#endif

}  // namespace livecast::kernels
