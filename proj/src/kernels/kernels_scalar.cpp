#include "livecast/kernels.hpp"

#include <bit>

namespace livecast::kernels::scalar {

void or_words(std::uint64_t* dst, const std::uint64_t* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] |= src[i];
}

std::uint64_t popcount_words(const std::uint64_t* words, std::size_t n) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<std::uint64_t>(std::popcount(words[i]));
  return total;
}

void squared_distances(double px, double py, const double* xs, const double* ys, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double xx = dx * dx;
    const double yy = dy * dy;
    out[i] = xx + yy;
  }
}

std::size_t argmin_distance(double px, double py, const double* xs, const double* ys, std::size_t n) {
  std::size_t best = n;
  double best_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double xx = dx * dx;
    const double yy = dy * dy;
    const double d = xx + yy;
    if (best == n || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

}  // namespace livecast::kernels::scalar
